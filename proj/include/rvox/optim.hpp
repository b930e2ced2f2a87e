#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rvox {

/// Adam hyperparameters shared by all groups.
template <class T>
struct AdamHyper {
    T beta1 = T(0.9);
    T beta2 = T(0.99);
    T eps = T(1e-8);
};

/// One optimized tensor (a grid's data or the MLP parameter vector) with
/// its first/second moment accumulators. Requires exclusive access during
/// a step; distinct groups may step concurrently.
template <class T>
struct ParamGroup {
    std::string name;
    T base_lr = T(0.1);
    std::vector<T> m, v;
    long step_count = 0;

    void reset(std::size_t size) {
        m.assign(size, T(0));
        v.assign(size, T(0));
        step_count = 0;
    }
};

/// Bias-corrected Adam update in place.
template <class T>
void adam_step(ParamGroup<T>& group, std::span<T> params, std::span<const T> grad, T lr,
               const AdamHyper<T>& hp = {}) {
    if (group.m.size() != params.size() || grad.size() != params.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    group.step_count += 1;
    const T t = T(group.step_count);
    const T bc1 = T(1) - std::pow(hp.beta1, t);
    const T bc2 = T(1) - std::pow(hp.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grad[i];
        if (!std::isfinite(g))
            throw std::runtime_error("adam_step: non-finite gradient in group " + group.name);
        group.m[i] = hp.beta1 * group.m[i] + (T(1) - hp.beta1) * g;
        group.v[i] = hp.beta2 * group.v[i] + (T(1) - hp.beta2) * g * g;
        const T mhat = group.m[i] / bc1;
        const T vhat = group.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
    }
}

/// Exponential decay: base * factor^(step / total).
template <class T>
T lr_schedule(T base_lr, long step, long total_steps, T decay_factor) {
    if (step < 0 || step > total_steps) throw std::invalid_argument("lr_schedule: step range");
    return base_lr * std::pow(decay_factor, T(step) / T(total_steps));
}

}  // namespace rvox
