#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace rvox {

template <class T>
T softplus(T x) {
    // overflow-safe: softplus(x) = max(x, 0) + log1p(exp(-|x|))
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

/// Per-sample activations kept for the backward pass.
template <class T>
struct MlpTrace {
    std::vector<T> input;
    std::vector<std::vector<T>> pre;   // pre-activation per layer
    std::vector<std::vector<T>> post;  // post-activation per layer
};

/// Fully connected network with rectifier hidden layers and a sigmoid
/// 3-channel output. Parameters live in one flat vector (per layer: weight
/// matrix row-major out x in, then bias) so the optimizer can treat the
/// whole MLP as a single parameter group.
template <class T>
class Mlp {
public:
    Mlp() = default;

    Mlp(int input_dim, int hidden_width, int hidden_layers, int output_dim = 3)
        : input_dim_(input_dim), output_dim_(output_dim) {
        if (input_dim < 1 || hidden_width < 1 || hidden_layers < 0)
            throw std::invalid_argument("Mlp: invalid shape");
        std::vector<int> widths;
        widths.push_back(input_dim);
        for (int i = 0; i < hidden_layers; ++i) widths.push_back(hidden_width);
        widths.push_back(output_dim);
        std::size_t total = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            layer_in_.push_back(widths[l]);
            layer_out_.push_back(widths[l + 1]);
            weight_off_.push_back(total);
            total += static_cast<std::size_t>(widths[l]) * widths[l + 1];
            bias_off_.push_back(total);
            total += widths[l + 1];
        }
        params_.assign(total, T(0));
        grad_.assign(total, T(0));
    }

    int input_dim() const { return input_dim_; }
    int output_dim() const { return output_dim_; }
    int layer_count() const { return static_cast<int>(layer_in_.size()); }
    int layer_input(int l) const { return layer_in_[l]; }
    int layer_output(int l) const { return layer_out_[l]; }

    std::vector<T>& params() { return params_; }
    const std::vector<T>& params() const { return params_; }
    std::vector<T>& grad() { return grad_; }
    const std::vector<T>& grad() const { return grad_; }
    void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }

    /// He-uniform weights, zero biases.
    void init(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (int l = 0; l < layer_count(); ++l) {
            const T bound = std::sqrt(T(6) / T(layer_in_[l]));
            std::uniform_real_distribution<T> dist(-bound, bound);
            T* w = &params_[weight_off_[l]];
            for (int i = 0; i < layer_out_[l] * layer_in_[l]; ++i) w[i] = dist(rng);
            T* b = &params_[bias_off_[l]];
            for (int i = 0; i < layer_out_[l]; ++i) b[i] = T(0);
        }
    }

    void forward(std::span<const T> x, std::span<T> y, MlpTrace<T>& trace) const {
        if (static_cast<int>(x.size()) != input_dim_)
            throw std::invalid_argument("Mlp::forward: feature width mismatch");
        const int L = layer_count();
        trace.input.assign(x.begin(), x.end());
        trace.pre.resize(L);
        trace.post.resize(L);
        const T* in = trace.input.data();
        for (int l = 0; l < L; ++l) {
            const int ni = layer_in_[l], no = layer_out_[l];
            trace.pre[l].resize(no);
            trace.post[l].resize(no);
            const T* w = &params_[weight_off_[l]];
            const T* b = &params_[bias_off_[l]];
            for (int o = 0; o < no; ++o) {
                T acc = b[o];
                const T* row = w + static_cast<std::size_t>(o) * ni;
                for (int i = 0; i < ni; ++i) acc += row[i] * in[i];
                trace.pre[l][o] = acc;
                trace.post[l][o] = (l + 1 < L) ? std::max(acc, T(0)) : sigmoid(acc);
            }
            in = trace.post[l].data();
        }
        for (int o = 0; o < output_dim_; ++o) y[o] = trace.post[L - 1][o];
    }

    /// Exact reverse pass. Accumulates parameter gradients into grad_buf
    /// (same layout as params) and writes the input gradient into g_input.
    void backward(const MlpTrace<T>& trace, std::span<const T> g_output, std::vector<T>& grad_buf,
                  std::span<T> g_input) const {
        const int L = layer_count();
        std::vector<T> delta(g_output.begin(), g_output.end());
        // output sigmoid
        for (int o = 0; o < output_dim_; ++o) {
            const T s = trace.post[L - 1][o];
            delta[o] *= s * (T(1) - s);
        }
        for (int l = L - 1; l >= 0; --l) {
            const int ni = layer_in_[l], no = layer_out_[l];
            const T* in = (l == 0) ? trace.input.data() : trace.post[l - 1].data();
            const T* w = &params_[weight_off_[l]];
            T* gw = &grad_buf[weight_off_[l]];
            T* gb = &grad_buf[bias_off_[l]];
            std::vector<T> g_in(ni, T(0));
            for (int o = 0; o < no; ++o) {
                const T d = delta[o];
                gb[o] += d;
                const T* row = w + static_cast<std::size_t>(o) * ni;
                T* grow = gw + static_cast<std::size_t>(o) * ni;
                for (int i = 0; i < ni; ++i) {
                    grow[i] += d * in[i];
                    g_in[i] += d * row[i];
                }
            }
            if (l > 0) {
                // rectifier mask of the previous layer
                for (int i = 0; i < ni; ++i)
                    if (trace.pre[l - 1][i] <= T(0)) g_in[i] = T(0);
                delta = std::move(g_in);
            } else {
                for (int i = 0; i < ni; ++i) g_input[i] = g_in[i];
            }
        }
    }

private:
    int input_dim_ = 0;
    int output_dim_ = 0;
    std::vector<int> layer_in_, layer_out_;
    std::vector<std::size_t> weight_off_, bias_off_;
    std::vector<T> params_;
    std::vector<T> grad_;
};

}  // namespace rvox
