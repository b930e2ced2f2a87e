#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "rvox/vec.hpp"

namespace rvox {

/// Which real spherical-harmonic degrees feed the directional MLP.
/// Ordering of the emitted basis is fixed: degrees ascending, m ascending
/// within a degree. Real SH without the Condon-Shortley sign.
struct DirectionalEncodingConfig {
    std::vector<int> levels{1, 2, 4};

    int dim() const {
        int n = 0;
        for (int l : levels) n += 2 * l + 1;
        return n;
    }

    void validate() const {
        int prev = 0;
        for (int l : levels) {
            if (l < 1 || l > 4) throw std::invalid_argument("sh levels must be in [1, 4]");
            if (l <= prev) throw std::invalid_argument("sh levels must be strictly ascending");
            prev = l;
        }
    }
};

/// Reflection of omega_o about n: 2 (omega_o . n) n - omega_o.
/// Inputs are renormalized; a near-zero normal is a degenerate shading
/// point and raises.
template <class T>
Vec3<T> reflect(Vec3<T> omega_o, Vec3<T> n) {
    const T no = norm(omega_o);
    const T nn = norm(n);
    if (nn < T(1e-8)) throw std::domain_error("reflect: degenerate normal");
    omega_o = omega_o / no;
    n = n / nn;
    return T(2) * dot(omega_o, n) * n - omega_o;
}

/// Chain rule through omega_r = 2 (omega_o . n) n - omega_o for unit
/// inputs (no renormalization terms; callers differentiate their own
/// normalization). Accumulates into g_omega_o and g_n.
template <class T>
void reflect_backward(const Vec3<T>& omega_o, const Vec3<T>& n, const Vec3<T>& g_omega_r,
                      Vec3<T>& g_omega_o, Vec3<T>& g_n) {
    const T d = dot(omega_o, n);
    const T gn_dot = dot(g_omega_r, n);
    // d omega_r / d omega_o = 2 n n^T - I
    g_omega_o += T(2) * gn_dot * n - g_omega_r;
    // d omega_r / d n = 2 (n omega_o^T + (omega_o . n) I)
    g_n += T(2) * (gn_dot * omega_o + d * g_omega_r);
}

namespace detail {

/// Evaluates real SH of one degree at unit direction d into vals (2l+1
/// entries). If grads != nullptr, also writes d(Y)/d(x,y,z) row-major
/// (2l+1) x 3. Polynomial forms valid on the unit sphere.
template <class T>
void sh_degree(int l, const Vec3<T>& d, T* vals, T* grads) {
    const T x = d.x, y = d.y, z = d.z;
    auto set = [&](int i, T v, T gx, T gy, T gz) {
        vals[i] = v;
        if (grads) {
            grads[3 * i + 0] = gx;
            grads[3 * i + 1] = gy;
            grads[3 * i + 2] = gz;
        }
    };
    switch (l) {
        case 0: {
            set(0, T(0.28209479177387814), 0, 0, 0);
            break;
        }
        case 1: {
            const T c = T(0.4886025119029199);
            set(0, c * y, 0, c, 0);
            set(1, c * z, 0, 0, c);
            set(2, c * x, c, 0, 0);
            break;
        }
        case 2: {
            const T ca = T(1.0925484305920792);
            const T cb = T(0.31539156525252005);
            const T cc = T(0.5462742152960396);
            set(0, ca * x * y, ca * y, ca * x, 0);
            set(1, ca * y * z, 0, ca * z, ca * y);
            set(2, cb * (T(3) * z * z - T(1)), 0, 0, T(6) * cb * z);
            set(3, ca * x * z, ca * z, 0, ca * x);
            set(4, cc * (x * x - y * y), T(2) * cc * x, T(-2) * cc * y, 0);
            break;
        }
        case 3: {
            const T c0 = T(0.5900435899266435);
            const T c1 = T(2.890611442640554);
            const T c2 = T(0.4570457994644658);
            const T c3 = T(0.3731763325901154);
            const T c4 = T(1.445305721320277);
            set(0, c0 * y * (T(3) * x * x - y * y), T(6) * c0 * x * y,
                c0 * (T(3) * x * x - T(3) * y * y), 0);
            set(1, c1 * x * y * z, c1 * y * z, c1 * x * z, c1 * x * y);
            set(2, c2 * y * (T(5) * z * z - T(1)), 0, c2 * (T(5) * z * z - T(1)),
                T(10) * c2 * y * z);
            set(3, c3 * z * (T(5) * z * z - T(3)), 0, 0, c3 * (T(15) * z * z - T(3)));
            set(4, c2 * x * (T(5) * z * z - T(1)), c2 * (T(5) * z * z - T(1)), 0,
                T(10) * c2 * x * z);
            set(5, c4 * z * (x * x - y * y), T(2) * c4 * x * z, T(-2) * c4 * y * z,
                c4 * (x * x - y * y));
            set(6, c0 * x * (x * x - T(3) * y * y), c0 * (T(3) * x * x - T(3) * y * y),
                T(-6) * c0 * x * y, 0);
            break;
        }
        case 4: {
            const T c0 = T(2.5033429417967046);
            const T c1 = T(1.7701307697799304);
            const T c2 = T(0.9461746957575601);
            const T c3 = T(0.6690465435572892);
            const T c4 = T(0.10578554691520431);
            const T c5 = T(0.47308734787878004);
            const T c6 = T(0.6258357354491761);
            set(0, c0 * x * y * (x * x - y * y), c0 * y * (T(3) * x * x - y * y),
                c0 * x * (x * x - T(3) * y * y), 0);
            set(1, c1 * y * z * (T(3) * x * x - y * y), T(6) * c1 * x * y * z,
                c1 * z * (T(3) * x * x - T(3) * y * y), c1 * y * (T(3) * x * x - y * y));
            set(2, c2 * x * y * (T(7) * z * z - T(1)), c2 * y * (T(7) * z * z - T(1)),
                c2 * x * (T(7) * z * z - T(1)), T(14) * c2 * x * y * z);
            set(3, c3 * y * z * (T(7) * z * z - T(3)), 0, c3 * z * (T(7) * z * z - T(3)),
                c3 * y * (T(21) * z * z - T(3)));
            set(4, c4 * (T(35) * z * z * z * z - T(30) * z * z + T(3)), 0, 0,
                c4 * (T(140) * z * z * z - T(60) * z));
            set(5, c3 * x * z * (T(7) * z * z - T(3)), c3 * z * (T(7) * z * z - T(3)), 0,
                c3 * x * (T(21) * z * z - T(3)));
            set(6, c5 * (x * x - y * y) * (T(7) * z * z - T(1)),
                T(2) * c5 * x * (T(7) * z * z - T(1)), T(-2) * c5 * y * (T(7) * z * z - T(1)),
                T(14) * c5 * z * (x * x - y * y));
            set(7, c1 * x * z * (x * x - T(3) * y * y), c1 * z * (T(3) * x * x - T(3) * y * y),
                T(-6) * c1 * x * y * z, c1 * x * (x * x - T(3) * y * y));
            set(8, c6 * (x * x * x * x - T(6) * x * x * y * y + y * y * y * y),
                c6 * (T(4) * x * x * x - T(12) * x * y * y),
                c6 * (T(4) * y * y * y - T(12) * x * x * y), 0);
            break;
        }
        default:
            throw std::invalid_argument("sh_degree: degree out of range");
    }
}

}  // namespace detail

/// Real SH basis at unit direction d for the configured degrees.
/// out holds cfg.dim() values; if grad is non-empty it holds
/// cfg.dim() x 3 row-major direction derivatives.
template <class T>
void sh_basis(const Vec3<T>& d, const DirectionalEncodingConfig& cfg, std::span<T> out,
              std::span<T> grad = {}) {
    int off = 0;
    for (int l : cfg.levels) {
        detail::sh_degree(l, d, out.data() + off, grad.empty() ? nullptr : grad.data() + 3 * off);
        off += 2 * l + 1;
    }
}

/// Degree attenuation of the integrated directional encoding:
/// A_l(kappa) = exp(-l (l+1) / (2 kappa)), with A_l(0) = 0 for l >= 1.
template <class T>
T ide_attenuation(int l, T kappa) {
    if (kappa < T(0)) throw std::domain_error("ide: negative concentration");
    if (l == 0) return T(1);
    if (kappa == T(0)) return T(0);
    return std::exp(-T(l) * T(l + 1) / (T(2) * kappa));
}

/// Integrated directional encoding: SH basis with each degree block scaled
/// by its roughness attenuation. Output size is cfg.dim() for any input.
template <class T>
void ide(const Vec3<T>& omega_r, T kappa, const DirectionalEncodingConfig& cfg, std::span<T> out) {
    sh_basis(omega_r, cfg, out);
    int off = 0;
    for (int l : cfg.levels) {
        const T a = ide_attenuation(l, kappa);
        for (int m = 0; m < 2 * l + 1; ++m) out[off + m] *= a;
        off += 2 * l + 1;
    }
}

/// Forward IDE retaining what the backward pass needs.
template <class T>
struct IdeTrace {
    std::vector<T> sh;       // unattenuated basis
    std::vector<T> sh_grad;  // dim x 3
    std::vector<T> atten;    // per configured degree
};

template <class T>
void ide_forward(const Vec3<T>& omega_r, T kappa, const DirectionalEncodingConfig& cfg,
                 std::span<T> out, IdeTrace<T>& trace) {
    const int dim = cfg.dim();
    trace.sh.resize(dim);
    trace.sh_grad.resize(3 * dim);
    trace.atten.resize(cfg.levels.size());
    sh_basis(omega_r, cfg, std::span<T>(trace.sh), std::span<T>(trace.sh_grad));
    int off = 0;
    for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
        const int l = cfg.levels[li];
        const T a = ide_attenuation(l, kappa);
        trace.atten[li] = a;
        for (int m = 0; m < 2 * l + 1; ++m) out[off + m] = a * trace.sh[off + m];
        off += 2 * l + 1;
    }
}

/// Analytic backward of ide_forward. Accumulates into g_dir; returns the
/// kappa gradient.
template <class T>
T ide_backward(T kappa, const DirectionalEncodingConfig& cfg, std::span<const T> upstream,
               const IdeTrace<T>& trace, Vec3<T>& g_dir) {
    T g_kappa = T(0);
    int off = 0;
    for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
        const int l = cfg.levels[li];
        const T a = trace.atten[li];
        // dA/dkappa = A * l(l+1) / (2 kappa^2); zero in the kappa -> 0 limit
        const T da = (l >= 1 && kappa > T(0)) ? a * T(l) * T(l + 1) / (T(2) * kappa * kappa)
                                              : T(0);
        for (int m = 0; m < 2 * l + 1; ++m) {
            const int i = off + m;
            const T u = upstream[i];
            g_kappa += u * trace.sh[i] * da;
            g_dir.x += u * a * trace.sh_grad[3 * i + 0];
            g_dir.y += u * a * trace.sh_grad[3 * i + 1];
            g_dir.z += u * a * trace.sh_grad[3 * i + 2];
        }
        off += 2 * l + 1;
    }
    return g_kappa;
}

}  // namespace rvox
