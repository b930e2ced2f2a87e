#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "rvox/camera.hpp"
#include "rvox/encoding.hpp"
#include "rvox/grid.hpp"
#include "rvox/mlp.hpp"
#include "rvox/vec.hpp"

namespace rvox {

template <class T>
struct RenderOptions {
    bool view_dependent = true;   // false = coarse stage (diffuse only)
    bool use_ide = true;          // false: raw SH of the conditioning direction
    bool use_ref_dir = true;      // false: condition on the view direction
    Vec3<T> background{1, 1, 1};
    T step_size = T(0.01);        // world units between samples
    T alpha_skip = T(0);          // samples below this alpha are dropped
    T early_stop = T(0);          // stop marching once transmittance falls below this
    T rho_min = T(1e-3), rho_max = T(1e3);
    T normal_eps = T(1e-6);       // below this, a raw predicted normal is degenerate
    T grad_eps = T(1e-8);         // below this, the density gradient gives no normal
};

/// The six explicit grids plus the directional MLP.
template <class T>
struct SceneModel {
    VoxelGrid<T> density;     // 1 channel, pre-activation
    VoxelGrid<T> diffuse;     // 3, pre-sigmoid
    VoxelGrid<T> tint;        // 3, pre-sigmoid
    VoxelGrid<T> bottleneck;  // B
    VoxelGrid<T> roughness;   // 1, pre-softplus
    VoxelGrid<T> normal;      // 3, unnormalized predicted normal
    Mlp<T> mlp;
    DirectionalEncodingConfig enc;
    T density_shift = T(0);  // beta in softplus(sigma_raw + beta)

    int bottleneck_dim() const { return bottleneck.channels(); }

    const Aabb<T>& bbox() const { return density.bbox(); }

    void zero_grad() {
        density.zero_grad();
        diffuse.zero_grad();
        tint.zero_grad();
        bottleneck.zero_grad();
        roughness.zero_grad();
        normal.zero_grad();
        mlp.zero_grad();
    }
};

/// Shift beta such that a zero-initialized density grid yields alpha0 at
/// reference step delta0: softplus(beta) = -log(1 - alpha0) / delta0.
template <class T>
T solve_density_shift(T alpha0, T delta0) {
    const T act = -std::log1p(-alpha0) / delta0;
    // inverse softplus
    return act > T(20) ? act : std::log(std::expm1(act));
}

/// alpha = 1 - exp(-softplus(sigma_raw + beta) * delta)
template <class T>
T density_to_alpha(T sigma_raw, T delta, T beta) {
    if (delta < T(0)) throw std::domain_error("density_to_alpha: negative interval");
    return -std::expm1(-softplus(sigma_raw + beta) * delta);
}

template <class T>
T density_to_alpha_grad(T sigma_raw, T delta, T beta) {
    const T act = softplus(sigma_raw + beta);
    return delta * std::exp(-act * delta) * sigmoid(sigma_raw + beta);
}

/// Coarse boolean occupancy over the refined box; cell-indexed (dims cells
/// per axis, not nodes).
template <class T>
struct OccupancyMask {
    std::array<int, 3> dims{0, 0, 0};
    Aabb<T> bbox{};
    std::vector<std::uint8_t> occupied;

    bool empty() const { return occupied.empty(); }

    std::size_t cell_index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
    }

    bool test(const Vec3<T>& p) const {
        if (!bbox.contains(p)) return false;
        int idx[3];
        for (int a = 0; a < 3; ++a) {
            const T u = (p[a] - bbox.min[a]) / (bbox.max[a] - bbox.min[a]) * T(dims[a]);
            idx[a] = std::clamp(static_cast<int>(u), 0, dims[a] - 1);
        }
        return occupied[cell_index(idx[0], idx[1], idx[2])] != 0;
    }
};

template <class T>
struct SamplePoint {
    T t, delta;
    Vec3<T> pos;
};

/// Slab-test the ray against the box, clip to [near, far] and march with
/// uniform spacing; the last sample carries the residual segment. Samples
/// falling in mask-empty cells are dropped. A miss yields an empty list.
template <class T>
std::vector<SamplePoint<T>> sample_points(const Ray<T>& ray, const Aabb<T>& bbox, T step,
                                          const OccupancyMask<T>* mask = nullptr) {
    if (!(step > T(0))) throw std::invalid_argument("sample_points: step must be positive");
    T t0 = ray.near, t1 = ray.far;
    for (int a = 0; a < 3; ++a) {
        const T d = ray.direction[a];
        if (std::abs(d) < T(1e-12)) {
            if (ray.origin[a] < bbox.min[a] || ray.origin[a] > bbox.max[a]) return {};
            continue;
        }
        T ta = (bbox.min[a] - ray.origin[a]) / d;
        T tb = (bbox.max[a] - ray.origin[a]) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t0 < t1)) return {};
    const T span = t1 - t0;
    const int n = std::max(1, static_cast<int>(std::ceil(span / step - T(1e-9))));
    std::vector<SamplePoint<T>> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const T lo = t0 + T(i) * step;
        const T delta = (i + 1 < n) ? step : (t1 - lo);
        const T t = lo + T(0.5) * delta;
        SamplePoint<T> sp{t, delta, ray.origin + t * ray.direction};
        if (mask && !mask->test(sp.pos)) continue;
        out.push_back(sp);
    }
    return out;
}

// -------------------------------------------------------------------------
// Compositing

template <class T>
struct CompositeResult {
    Vec3<T> rgb{};
    T acc = T(0);
    T depth = T(0);
    T t_final = T(1);  // transmittance past the last sample
};

/// Front-to-back alpha compositing; w_i = T_i alpha_i. Fills weights.
template <class T>
CompositeResult<T> composite(std::span<const T> alphas, std::span<const Vec3<T>> colors,
                             std::span<const T> ts, const Vec3<T>& background,
                             std::span<T> weights) {
    CompositeResult<T> r;
    T trans = T(1);
    T depth_num = T(0);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        const T a = alphas[i];
        if (a < T(0) || a > T(1)) throw std::domain_error("composite: alpha outside [0,1]");
        const T w = trans * a;
        weights[i] = w;
        r.rgb += w * colors[i];
        r.acc += w;
        depth_num += w * ts[i];
        trans *= (T(1) - a);
    }
    r.t_final = trans;
    r.rgb += trans * background;
    r.depth = depth_num / std::max(r.acc, T(1e-10));
    return r;
}

/// Exact adjoint of composite for upstream gradients on rgb and the final
/// transmittance. Accumulates into g_alphas and g_colors. Runs back to
/// front carrying dL/dT_i, so no division by (1 - alpha).
template <class T>
void composite_backward(std::span<const T> alphas, std::span<const Vec3<T>> colors,
                        std::span<const T> weights, const Vec3<T>& background,
                        const Vec3<T>& g_rgb, T g_t_final, std::span<T> g_alphas,
                        std::span<Vec3<T>> g_colors) {
    const std::size_t n = alphas.size();
    // transmittance at each sample, recovered from weights where possible
    std::vector<T> trans(n + 1);
    trans[0] = T(1);
    for (std::size_t i = 0; i < n; ++i) trans[i + 1] = trans[i] * (T(1) - alphas[i]);
    T g_trans = g_t_final + dot(g_rgb, background);  // dL/dT_{n+1}
    for (std::size_t i = n; i-- > 0;) {
        const T g_w = dot(g_rgb, colors[i]);
        g_colors[i] += weights[i] * g_rgb;
        g_alphas[i] += g_w * trans[i] - g_trans * trans[i];
        g_trans = g_w * alphas[i] + g_trans * (T(1) - alphas[i]);
    }
}

// -------------------------------------------------------------------------
// Normals

template <class T>
struct DerivedNormal {
    Vec3<T> n{};
    bool valid = false;
};

/// Outward surface normal from the density field: -g/|g| for the world
/// gradient g of the interpolated density. Gradient magnitudes below eps
/// flag a degenerate normal that losses skip.
template <class T>
DerivedNormal<T> derive_normal(const VoxelGrid<T>& density, const Vec3<T>& p, T eps) {
    T g[3];
    density.spatial_gradient(p, std::span<T>(g, 3));
    Vec3<T> v{g[0], g[1], g[2]};
    const T len = norm(v);
    if (len < eps) return {};
    return {-(v / len), true};
}

// -------------------------------------------------------------------------
// Shading

template <class T>
struct ShadeTrace {
    // raw grid outputs at the sample
    Vec3<T> cd_raw{}, s_raw{}, n_raw{};
    std::vector<T> b_raw;
    T rho_raw = T(0);

    Vec3<T> diffuse{}, tint{};
    Vec3<T> n_prime{};       // the unit shading normal actually used
    bool n_from_predicted = false;
    bool diffuse_only = false;
    T n_raw_len = T(0);

    T rho = T(0), rho_clamped = T(0), kappa = T(0);
    bool rho_active = false;  // clamp pass-through
    Vec3<T> omega_o{}, dir_cond{};
    T dot_on = T(0);
    std::vector<T> features;
    MlpTrace<T> mlp;
    IdeTrace<T> ide;
    Vec3<T> c_s{};
    Vec3<T> pre_clamp{};
    Vec3<T> color{};
};

/// Per-sample outgoing color. Coarse mode: sigmoid of the diffuse grid.
/// Fine mode: clamp(diffuse + tint * mlp(bottleneck, encoding, omega_o.n'),
/// 0, 1) with the reflection-direction conditioning controlled by options.
template <class T>
void shade(const SceneModel<T>& scene, const RenderOptions<T>& opt, const Vec3<T>& view_dir,
           const DerivedNormal<T>& derived, ShadeTrace<T>& tr) {
    tr.diffuse = {sigmoid(tr.cd_raw.x), sigmoid(tr.cd_raw.y), sigmoid(tr.cd_raw.z)};
    if (!opt.view_dependent) {
        tr.color = tr.diffuse;
        tr.diffuse_only = true;
        return;
    }
    tr.tint = {sigmoid(tr.s_raw.x), sigmoid(tr.s_raw.y), sigmoid(tr.s_raw.z)};
    tr.omega_o = -view_dir;

    tr.n_raw_len = norm(tr.n_raw);
    if (tr.n_raw_len >= opt.normal_eps) {
        tr.n_prime = tr.n_raw / tr.n_raw_len;
        tr.n_from_predicted = true;
    } else if (derived.valid) {
        tr.n_prime = derived.n;
    } else {
        // both normals degenerate: diffuse-only shading for this sample
        tr.color = tr.diffuse;
        tr.diffuse_only = true;
        return;
    }

    tr.rho = softplus(tr.rho_raw);
    tr.rho_clamped = std::clamp(tr.rho, opt.rho_min, opt.rho_max);
    tr.rho_active = (tr.rho > opt.rho_min && tr.rho < opt.rho_max);
    tr.kappa = T(1) / tr.rho_clamped;

    tr.dir_cond = opt.use_ref_dir ? reflect(tr.omega_o, tr.n_prime) : tr.omega_o;
    tr.dot_on = dot(tr.omega_o, tr.n_prime);

    const int B = scene.bottleneck_dim();
    const int enc_dim = scene.enc.dim();
    tr.features.resize(B + enc_dim + 1);
    for (int i = 0; i < B; ++i) tr.features[i] = tr.b_raw[i];
    // use_ide=false is the kappa -> infinity limit: all attenuations 1
    const T kappa_eff = opt.use_ide ? tr.kappa : std::numeric_limits<T>::infinity();
    ide_forward(tr.dir_cond, kappa_eff, scene.enc,
                std::span<T>(tr.features.data() + B, enc_dim), tr.ide);
    tr.features[B + enc_dim] = tr.dot_on;

    T cs[3];
    scene.mlp.forward(tr.features, std::span<T>(cs, 3), tr.mlp);
    tr.c_s = {cs[0], cs[1], cs[2]};
    tr.pre_clamp = tr.diffuse + cwise_mul(tr.tint, tr.c_s);
    tr.color = {std::clamp(tr.pre_clamp.x, T(0), T(1)), std::clamp(tr.pre_clamp.y, T(0), T(1)),
                std::clamp(tr.pre_clamp.z, T(0), T(1))};
}

/// Gradient buffers for one worker; same layouts as the model's own
/// accumulators.
template <class T>
struct SceneGrads {
    std::vector<T> density, diffuse, tint, bottleneck, roughness, normal, mlp;

    void init(const SceneModel<T>& scene) {
        density.assign(scene.density.size(), T(0));
        diffuse.assign(scene.diffuse.size(), T(0));
        tint.assign(scene.tint.size(), T(0));
        bottleneck.assign(scene.bottleneck.size(), T(0));
        roughness.assign(scene.roughness.size(), T(0));
        normal.assign(scene.normal.size(), T(0));
        mlp.assign(scene.mlp.params().size(), T(0));
    }

    void zero() {
        auto z = [](std::vector<T>& v) { std::fill(v.begin(), v.end(), T(0)); };
        z(density); z(diffuse); z(tint); z(bottleneck); z(roughness); z(normal); z(mlp);
    }

    void add_to(SceneModel<T>& scene) const {
        auto acc = [](const std::vector<T>& src, std::vector<T>& dst) {
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
        };
        acc(density, scene.density.grad());
        acc(diffuse, scene.diffuse.grad());
        acc(tint, scene.tint.grad());
        acc(bottleneck, scene.bottleneck.grad());
        acc(roughness, scene.roughness.grad());
        acc(normal, scene.normal.grad());
        acc(mlp, scene.mlp.grad());
    }
};

/// Backward of shade. g_color is dL/d(sample color); g_nprime_ext is the
/// external gradient on the unit shading normal from the normal losses
/// (only applied when the predicted normal was used). Scatters into grads.
template <class T>
void shade_backward(const SceneModel<T>& scene, const RenderOptions<T>& opt, const Vec3<T>& pos,
                    const ShadeTrace<T>& tr, const Vec3<T>& g_color, const Vec3<T>& g_nprime_ext,
                    SceneGrads<T>& grads) {
    auto dsig = [](T s) { return s * (T(1) - s); };  // from the activated value

    if (tr.diffuse_only) {
        T up[3] = {g_color.x * dsig(tr.diffuse.x), g_color.y * dsig(tr.diffuse.y),
                   g_color.z * dsig(tr.diffuse.z)};
        scene.diffuse.scatter_grad_into(pos, std::span<const T>(up, 3), grads.diffuse);
        return;
    }

    // clamp
    Vec3<T> g_pre{};
    for (int c = 0; c < 3; ++c)
        g_pre[c] = (tr.pre_clamp[c] > T(0) && tr.pre_clamp[c] < T(1)) ? g_color[c] : T(0);

    // diffuse + tint * c_s
    T g_cd[3], g_s[3];
    Vec3<T> g_cs{};
    for (int c = 0; c < 3; ++c) {
        g_cd[c] = g_pre[c] * dsig(tr.diffuse[c]);
        g_s[c] = g_pre[c] * tr.c_s[c] * dsig(tr.tint[c]);
        g_cs[c] = g_pre[c] * tr.tint[c];
    }
    scene.diffuse.scatter_grad_into(pos, std::span<const T>(g_cd, 3), grads.diffuse);
    scene.tint.scatter_grad_into(pos, std::span<const T>(g_s, 3), grads.tint);

    const int B = scene.bottleneck_dim();
    const int enc_dim = scene.enc.dim();
    std::vector<T> g_feat(B + enc_dim + 1, T(0));
    T g_cs_arr[3] = {g_cs.x, g_cs.y, g_cs.z};
    scene.mlp.backward(tr.mlp, std::span<const T>(g_cs_arr, 3), grads.mlp, g_feat);

    scene.bottleneck.scatter_grad_into(pos, std::span<const T>(g_feat.data(), B),
                                       grads.bottleneck);

    // encoding block
    Vec3<T> g_dir{};
    const T kappa_eff = opt.use_ide ? tr.kappa : std::numeric_limits<T>::infinity();
    const T g_kappa = ide_backward(kappa_eff, scene.enc,
                                   std::span<const T>(g_feat.data() + B, enc_dim), tr.ide, g_dir);

    Vec3<T> g_np = g_nprime_ext;  // gradient on the unit shading normal
    if (opt.use_ref_dir) {
        Vec3<T> g_wo_unused{};
        reflect_backward(tr.omega_o, tr.n_prime, g_dir, g_wo_unused, g_np);
    }
    g_np += g_feat[B + enc_dim] * tr.omega_o;  // omega_o . n' feature

    if (opt.use_ide && tr.rho_active) {
        // kappa = 1 / rho, rho = softplus(rho_raw)
        const T g_rho = -g_kappa / (tr.rho_clamped * tr.rho_clamped);
        const T g_rho_raw = g_rho * sigmoid(tr.rho_raw);
        scene.roughness.scatter_grad_into(pos, std::span<const T>(&g_rho_raw, 1),
                                          grads.roughness);
    }

    if (tr.n_from_predicted) {
        // through normalization: (I - n n^T) / |raw|
        const Vec3<T> n = tr.n_prime;
        const Vec3<T> g_raw = (g_np - dot(g_np, n) * n) / tr.n_raw_len;
        T up[3] = {g_raw.x, g_raw.y, g_raw.z};
        scene.normal.scatter_grad_into(pos, std::span<const T>(up, 3), grads.normal);
    }
}

// -------------------------------------------------------------------------
// Full ray pipeline

template <class T>
struct RaySampleRecord {
    SamplePoint<T> point{};
    T sigma_raw = T(0);
    T alpha = T(0);
    T weight = T(0);
    DerivedNormal<T> derived{};
    ShadeTrace<T> shade;
};

template <class T>
struct RenderResult {
    Vec3<T> rgb{};
    T acc = T(0);
    T depth = T(0);
    T t_final = T(1);
    std::vector<RaySampleRecord<T>> samples;
};

template <class T>
RenderResult<T> render_ray(const SceneModel<T>& scene, const Ray<T>& ray,
                           const RenderOptions<T>& opt, const OccupancyMask<T>* mask = nullptr) {
    RenderResult<T> out;
    auto pts = sample_points(ray, scene.bbox(), opt.step_size, mask);
    out.samples.reserve(pts.size());
    std::vector<T> alphas, ts;
    std::vector<Vec3<T>> colors;
    alphas.reserve(pts.size());
    ts.reserve(pts.size());
    colors.reserve(pts.size());
    std::vector<T> scratch(std::max({3, scene.bottleneck_dim()}));
    T trans = T(1);
    for (const auto& pt : pts) {
        if (opt.early_stop > T(0) && trans < opt.early_stop) break;
        scene.density.interpolate(pt.pos, std::span<T>(scratch.data(), 1));
        const T sigma_raw = scratch[0];
        const T alpha = density_to_alpha(sigma_raw, pt.delta, scene.density_shift);
        if (alpha < opt.alpha_skip) continue;
        trans *= T(1) - alpha;

        auto& rec = out.samples.emplace_back();
        rec.point = pt;
        rec.sigma_raw = sigma_raw;
        rec.alpha = alpha;

        auto& sh = rec.shade;
        scene.diffuse.interpolate(pt.pos, std::span<T>(scratch.data(), 3));
        sh.cd_raw = {scratch[0], scratch[1], scratch[2]};
        if (opt.view_dependent) {
            scene.tint.interpolate(pt.pos, std::span<T>(scratch.data(), 3));
            sh.s_raw = {scratch[0], scratch[1], scratch[2]};
            sh.b_raw.resize(scene.bottleneck_dim());
            scene.bottleneck.interpolate(pt.pos, sh.b_raw);
            scene.roughness.interpolate(pt.pos, std::span<T>(scratch.data(), 1));
            sh.rho_raw = scratch[0];
            scene.normal.interpolate(pt.pos, std::span<T>(scratch.data(), 3));
            sh.n_raw = {scratch[0], scratch[1], scratch[2]};
            rec.derived = derive_normal(scene.density, pt.pos, opt.grad_eps);
        }
        shade(scene, opt, ray.direction, rec.derived, sh);

        alphas.push_back(rec.alpha);
        colors.push_back(sh.color);
        ts.push_back(pt.t);
    }
    std::vector<T> weights(alphas.size());
    auto comp = composite(std::span<const T>(alphas), std::span<const Vec3<T>>(colors),
                          std::span<const T>(ts), opt.background, std::span<T>(weights));
    for (std::size_t i = 0; i < weights.size(); ++i) out.samples[i].weight = weights[i];
    out.rgb = comp.rgb;
    out.acc = comp.acc;
    out.depth = comp.depth;
    out.t_final = comp.t_final;
    return out;
}

/// Upstream gradients for one rendered ray.
template <class T>
struct RayUpstream {
    Vec3<T> g_rgb{};
    T g_t_final = T(0);
    std::vector<Vec3<T>> g_color;   // per sample, e.g. from the per-point loss; may be empty
    std::vector<Vec3<T>> g_nprime;  // per sample, on the unit predicted normal; may be empty
};

template <class T>
void render_ray_backward(const SceneModel<T>& scene, const Ray<T>& ray,
                         const RenderOptions<T>& opt, const RenderResult<T>& res,
                         const RayUpstream<T>& up, SceneGrads<T>& grads) {
    const std::size_t n = res.samples.size();
    std::vector<T> alphas(n), weights(n), g_alphas(n, T(0));
    std::vector<Vec3<T>> colors(n), g_colors(n);
    for (std::size_t i = 0; i < n; ++i) {
        alphas[i] = res.samples[i].alpha;
        weights[i] = res.samples[i].weight;
        colors[i] = res.samples[i].shade.color;
        if (!up.g_color.empty()) g_colors[i] = up.g_color[i];
    }
    composite_backward(std::span<const T>(alphas), std::span<const Vec3<T>>(colors),
                       std::span<const T>(weights), opt.background, up.g_rgb, up.g_t_final,
                       std::span<T>(g_alphas), std::span<Vec3<T>>(g_colors));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = res.samples[i];
        const T g_sigma =
            g_alphas[i] * density_to_alpha_grad(rec.sigma_raw, rec.point.delta,
                                                scene.density_shift);
        scene.density.scatter_grad_into(rec.point.pos, std::span<const T>(&g_sigma, 1),
                                        grads.density);
        const Vec3<T> g_np = up.g_nprime.empty() ? Vec3<T>{} : up.g_nprime[i];
        shade_backward(scene, opt, rec.point.pos, rec.shade, g_colors[i], g_np, grads);
    }
}

}  // namespace rvox
