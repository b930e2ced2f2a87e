#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "rvox/vec.hpp"

namespace rvox {

template <class T>
struct LossWeights {
    T w_ph = T(1);
    T w_pp = T(0.01);
    T w_bg = T(0.001);
    T w_p = T(3e-4);
    T w_o = T(0.01);
    T w_tv = T(1e-5);

    void validate() const {
        const T vals[] = {w_ph, w_pp, w_bg, w_p, w_o, w_tv};
        for (T v : vals) {
            if (!(std::isfinite(v)) || v < T(0))
                throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
        }
        if (!(w_ph > T(0))) throw std::invalid_argument("LossWeights: w_ph must be positive");
    }
};

template <class T>
struct LossBreakdown {
    T photometric = T(0);
    T per_point = T(0);
    T background = T(0);
    T normal = T(0);
    T orientation = T(0);
    T tv = T(0);
    T total = T(0);
};

/// Mean squared error over batch and channels.
template <class T>
T photometric_loss(std::span<const Vec3<T>> pred, std::span<const Vec3<T>> gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("photometric_loss: batch shape mismatch");
    T acc = T(0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const Vec3<T> d = pred[i] - gt[i];
        acc += dot(d, d);
    }
    return acc / (T(3) * T(pred.size()));
}

/// d(photometric)/d(pred_i) for one ray of a batch of size n.
template <class T>
Vec3<T> photometric_grad(const Vec3<T>& pred, const Vec3<T>& gt, std::size_t n) {
    return (pred - gt) * (T(2) / (T(3) * T(n)));
}

/// One ray's per-point color term: sum_i w_i |c_i - gt|^2. The batch value
/// is the mean of this over rays. Weights are treated as constants.
template <class T>
T per_point_rgb_ray(std::span<const T> weights, std::span<const Vec3<T>> colors,
                    const Vec3<T>& gt) {
    T acc = T(0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const Vec3<T> d = colors[i] - gt;
        acc += weights[i] * dot(d, d);
    }
    return acc;
}

template <class T>
Vec3<T> per_point_rgb_grad(T weight, const Vec3<T>& color, const Vec3<T>& gt, std::size_t n_rays) {
    return (color - gt) * (T(2) * weight / T(n_rays));
}

/// Binary entropy of the background probability, clamped to [eps, 1-eps].
template <class T>
T background_entropy(T t_final, T eps = T(1e-6)) {
    const T t = std::clamp(t_final, eps, T(1) - eps);
    return -(t * std::log(t) + (T(1) - t) * std::log(T(1) - t));
}

template <class T>
T background_entropy_grad(T t_final, T eps = T(1e-6)) {
    if (t_final < eps || t_final > T(1) - eps) return T(0);  // clamped region
    return -std::log(t_final / (T(1) - t_final));
}

/// One ray's predicted-normal penalty: sum_i w_i |n_i - n'_i|^2 over
/// non-degenerate samples. Derived normals are the (detached) target.
template <class T>
T normal_penalty_ray(std::span<const T> weights, std::span<const Vec3<T>> derived,
                     std::span<const Vec3<T>> predicted) {
    T acc = T(0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const Vec3<T> d = derived[i] - predicted[i];
        acc += weights[i] * dot(d, d);
    }
    return acc;
}

template <class T>
Vec3<T> normal_penalty_grad(T weight, const Vec3<T>& derived, const Vec3<T>& predicted,
                            std::size_t n_rays) {
    return (predicted - derived) * (T(2) * weight / T(n_rays));
}

/// One ray's back-facing penalty: sum_i w_i max(0, n'_i . d)^2.
template <class T>
T orientation_penalty_ray(std::span<const T> weights, std::span<const Vec3<T>> predicted,
                          const Vec3<T>& view_dir) {
    T acc = T(0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const T d = std::max(T(0), dot(predicted[i], view_dir));
        acc += weights[i] * d * d;
    }
    return acc;
}

template <class T>
Vec3<T> orientation_penalty_grad(T weight, const Vec3<T>& predicted, const Vec3<T>& view_dir,
                                 std::size_t n_rays) {
    const T d = std::max(T(0), dot(predicted, view_dir));
    return view_dir * (T(2) * weight * d / T(n_rays));
}

/// Weighted sum of all terms. Throws on a non-finite term, naming it.
template <class T>
LossBreakdown<T> total_loss(T photometric, T per_point, T background, T normal, T orientation,
                            T tv, const LossWeights<T>& w) {
    auto check = [](T v, const char* name) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("total_loss: non-finite term: ") + name);
    };
    check(photometric, "photometric");
    check(per_point, "per_point");
    check(background, "background");
    check(normal, "normal");
    check(orientation, "orientation");
    check(tv, "tv");
    LossBreakdown<T> b;
    b.photometric = photometric;
    b.per_point = per_point;
    b.background = background;
    b.normal = normal;
    b.orientation = orientation;
    b.tv = tv;
    b.total = w.w_ph * photometric + w.w_pp * per_point + w.w_bg * background + w.w_p * normal +
              w.w_o * orientation + w.w_tv * tv;
    return b;
}

}  // namespace rvox
