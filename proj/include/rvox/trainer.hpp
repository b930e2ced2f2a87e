#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rvox/config.hpp"
#include "rvox/dataset.hpp"
#include "rvox/loss.hpp"
#include "rvox/metrics.hpp"
#include "rvox/optim.hpp"
#include "rvox/render.hpp"

namespace rvox {

struct TrainConfig {
    // model
    int coarse_res = 64;
    int fine_res = 128;
    int bottleneck = 8;
    int mlp_width = 64;
    int mlp_depth = 2;

    // schedule
    long coarse_iters = 5000;
    long fine_iters = 10000;
    int batch_size = 4096;
    float lr_grid = 0.1f;
    float lr_mlp = 1e-3f;
    float lr_decay = 0.1f;
    long tv_every = 10;
    long log_every = 100;

    // progressive grid scaling
    bool use_pgs = true;
    int pgs_start_res = 64;  // default: half the final fine resolution
    int pgs_events = 10;

    // ablations
    bool use_ide = true;
    bool use_ref_dir = true;

    // scene
    float bbox_half = 1.5f;
    float near = 0.1f;
    float far = 8.0f;
    float step_ratio = 0.5f;
    float alpha_init = 1e-3f;
    float alpha_skip = 1e-4f;
    float early_stop = 1e-4f;
    float refine_threshold = 1e-3f;
    float occ_threshold = 1e-4f;
    int mask_res = 96;

    LossWeights<float> weights;

    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const {
        if (coarse_res < 2 || fine_res < 2 || pgs_start_res < 2)
            throw std::invalid_argument("TrainConfig: grid resolutions must be >= 2");
        if (use_pgs && pgs_start_res > fine_res)
            throw std::invalid_argument("TrainConfig: pgs_start_res must not exceed fine_res");
        if (bottleneck < 1) throw std::invalid_argument("TrainConfig: bottleneck must be >= 1");
        if (mlp_width < 1 || mlp_depth < 0)
            throw std::invalid_argument("TrainConfig: bad mlp shape");
        if (coarse_iters < 0 || fine_iters < 0)
            throw std::invalid_argument("TrainConfig: negative iteration count");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(lr_grid > 0.0f) || !(lr_mlp > 0.0f))
            throw std::invalid_argument("TrainConfig: learning rates must be positive");
        if (!(lr_decay > 0.0f) || lr_decay > 1.0f)
            throw std::invalid_argument("TrainConfig: lr_decay must be in (0, 1]");
        if (tv_every < 1) throw std::invalid_argument("TrainConfig: tv_every must be >= 1");
        if (!(bbox_half > 0.0f)) throw std::invalid_argument("TrainConfig: bbox_half <= 0");
        if (!(near >= 0.0f) || !(far > near))
            throw std::invalid_argument("TrainConfig: need 0 <= near < far");
        if (!(step_ratio > 0.0f)) throw std::invalid_argument("TrainConfig: step_ratio <= 0");
        if (!(alpha_init > 0.0f) || alpha_init >= 1.0f)
            throw std::invalid_argument("TrainConfig: alpha_init outside (0, 1)");
        if (pgs_events < 1) throw std::invalid_argument("TrainConfig: pgs_events must be >= 1");
        if (mask_res < 1) throw std::invalid_argument("TrainConfig: mask_res must be >= 1");
        if (threads < 1) throw std::invalid_argument("TrainConfig: threads must be >= 1");
        weights.validate();
    }

    static const std::vector<std::string>& known_keys() {
        static const std::vector<std::string> keys = {
            "model.coarse_res", "model.fine_res",   "model.bottleneck", "model.mlp_width",
            "model.mlp_depth",  "train.coarse_iters", "train.fine_iters", "train.batch_size",
            "train.lr_grid",    "train.lr_mlp",     "train.lr_decay",   "train.tv_every",
            "train.log_every",  "train.pgs",        "train.pgs_start_res", "train.pgs_events",
            "train.use_ide",    "train.use_ref_dir", "train.seed",      "train.threads",
            "scene.bbox_half",  "scene.near",       "scene.far",        "scene.step_ratio",
            "scene.alpha_init", "scene.alpha_skip", "scene.early_stop",
            "scene.refine_threshold",
            "scene.occ_threshold", "scene.mask_res",
            "loss.w_ph", "loss.w_pp", "loss.w_bg", "loss.w_p", "loss.w_o", "loss.w_tv"};
        return keys;
    }

    static TrainConfig from_config(const ConfigMap& cfg) {
        cfg.require_known(known_keys());
        TrainConfig c;
        c.coarse_res = static_cast<int>(cfg.get_int("model.coarse_res", c.coarse_res));
        c.fine_res = static_cast<int>(cfg.get_int("model.fine_res", c.fine_res));
        c.bottleneck = static_cast<int>(cfg.get_int("model.bottleneck", c.bottleneck));
        c.mlp_width = static_cast<int>(cfg.get_int("model.mlp_width", c.mlp_width));
        c.mlp_depth = static_cast<int>(cfg.get_int("model.mlp_depth", c.mlp_depth));
        c.coarse_iters = cfg.get_int("train.coarse_iters", c.coarse_iters);
        c.fine_iters = cfg.get_int("train.fine_iters", c.fine_iters);
        c.batch_size = static_cast<int>(cfg.get_int("train.batch_size", c.batch_size));
        c.lr_grid = static_cast<float>(cfg.get_number("train.lr_grid", c.lr_grid));
        c.lr_mlp = static_cast<float>(cfg.get_number("train.lr_mlp", c.lr_mlp));
        c.lr_decay = static_cast<float>(cfg.get_number("train.lr_decay", c.lr_decay));
        c.tv_every = cfg.get_int("train.tv_every", c.tv_every);
        c.log_every = cfg.get_int("train.log_every", c.log_every);
        c.use_pgs = cfg.get_bool("train.pgs", c.use_pgs);
        c.pgs_start_res = static_cast<int>(cfg.get_int("train.pgs_start_res", c.pgs_start_res));
        c.pgs_events = static_cast<int>(cfg.get_int("train.pgs_events", c.pgs_events));
        c.use_ide = cfg.get_bool("train.use_ide", c.use_ide);
        c.use_ref_dir = cfg.get_bool("train.use_ref_dir", c.use_ref_dir);
        c.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
        c.threads = static_cast<int>(cfg.get_int("train.threads", c.threads));
        c.bbox_half = static_cast<float>(cfg.get_number("scene.bbox_half", c.bbox_half));
        c.near = static_cast<float>(cfg.get_number("scene.near", c.near));
        c.far = static_cast<float>(cfg.get_number("scene.far", c.far));
        c.step_ratio = static_cast<float>(cfg.get_number("scene.step_ratio", c.step_ratio));
        c.alpha_init = static_cast<float>(cfg.get_number("scene.alpha_init", c.alpha_init));
        c.alpha_skip = static_cast<float>(cfg.get_number("scene.alpha_skip", c.alpha_skip));
        c.early_stop = static_cast<float>(cfg.get_number("scene.early_stop", c.early_stop));
        c.refine_threshold =
            static_cast<float>(cfg.get_number("scene.refine_threshold", c.refine_threshold));
        c.occ_threshold =
            static_cast<float>(cfg.get_number("scene.occ_threshold", c.occ_threshold));
        c.mask_res = static_cast<int>(cfg.get_int("scene.mask_res", c.mask_res));
        c.weights.w_ph = static_cast<float>(cfg.get_number("loss.w_ph", c.weights.w_ph));
        c.weights.w_pp = static_cast<float>(cfg.get_number("loss.w_pp", c.weights.w_pp));
        c.weights.w_bg = static_cast<float>(cfg.get_number("loss.w_bg", c.weights.w_bg));
        c.weights.w_p = static_cast<float>(cfg.get_number("loss.w_p", c.weights.w_p));
        c.weights.w_o = static_cast<float>(cfg.get_number("loss.w_o", c.weights.w_o));
        c.weights.w_tv = static_cast<float>(cfg.get_number("loss.w_tv", c.weights.w_tv));
        c.validate();
        return c;
    }
};

// -------------------------------------------------------------------------
// Model construction

/// New grid over `bbox` whose node values interpolate `src` (zero where the
/// node falls outside the source box).
template <class T>
VoxelGrid<T> resample_grid(const VoxelGrid<T>& src, std::array<int, 3> dims,
                           const Aabb<T>& bbox) {
    VoxelGrid<T> out(dims, src.channels(), bbox);
    std::vector<T> vals(src.channels());
    for (int i = 0; i < dims[0]; ++i)
        for (int j = 0; j < dims[1]; ++j)
            for (int k = 0; k < dims[2]; ++k) {
                src.interpolate(out.node_position(i, j, k), vals);
                for (int c = 0; c < src.channels(); ++c) out.at(i, j, k, c) = vals[c];
            }
    return out;
}

inline float min_voxel_edge(const VoxelGrid<float>& g) {
    const Vec3<float> v = g.voxel_size();
    return std::min({v.x, v.y, v.z});
}

/// Coarse-stage model: only density and diffuse carry capacity; the
/// view-dependent grids exist at minimal size so the struct is complete.
inline SceneModel<float> make_coarse_model(const TrainConfig& cfg, const Aabb<float>& bbox) {
    SceneModel<float> m;
    const std::array<int, 3> dims{cfg.coarse_res, cfg.coarse_res, cfg.coarse_res};
    const std::array<int, 3> tiny{2, 2, 2};
    m.density = VoxelGrid<float>(dims, 1, bbox);
    m.diffuse = VoxelGrid<float>(dims, 3, bbox);
    m.tint = VoxelGrid<float>(tiny, 3, bbox);
    m.bottleneck = VoxelGrid<float>(tiny, cfg.bottleneck, bbox);
    m.roughness = VoxelGrid<float>(tiny, 1, bbox);
    m.normal = VoxelGrid<float>(tiny, 3, bbox);
    m.enc.validate();
    m.mlp = Mlp<float>(cfg.bottleneck + m.enc.dim() + 1, cfg.mlp_width, cfg.mlp_depth);
    return m;
}

/// Fine-stage model on the refined box. Density and diffuse are carried
/// over from the coarse model; the rest start fresh. Predicted normals get
/// small noise so they are non-degenerate and can receive gradients.
inline SceneModel<float> make_fine_model(const TrainConfig& cfg, const Aabb<float>& bbox, int res,
                                         const SceneModel<float>& coarse) {
    SceneModel<float> m;
    const std::array<int, 3> dims{res, res, res};
    m.density = resample_grid(coarse.density, dims, bbox);
    m.diffuse = resample_grid(coarse.diffuse, dims, bbox);
    m.tint = VoxelGrid<float>(dims, 3, bbox);
    m.bottleneck = VoxelGrid<float>(dims, cfg.bottleneck, bbox);
    m.roughness = VoxelGrid<float>(dims, 1, bbox);
    m.normal = VoxelGrid<float>(dims, 3, bbox);
    std::mt19937_64 rng(cfg.seed ^ 0x6e6f726d616cULL);
    std::uniform_real_distribution<float> noise(-0.1f, 0.1f);
    for (float& v : m.normal.data()) v = noise(rng);
    m.enc.validate();
    m.mlp = Mlp<float>(cfg.bottleneck + m.enc.dim() + 1, cfg.mlp_width, cfg.mlp_depth);
    m.mlp.init(cfg.seed);
    return m;
}

// -------------------------------------------------------------------------
// Bounding-box refinement and occupancy

/// Tight box around density nodes whose alpha at step `delta` exceeds the
/// threshold, padded by one voxel and clamped to the original box. A fully
/// empty grid keeps its box.
inline Aabb<float> refine_bbox(const VoxelGrid<float>& density, float density_shift, float delta,
                               float alpha_threshold) {
    const auto& dims = density.dims();
    Vec3<float> lo{1e30f, 1e30f, 1e30f}, hi{-1e30f, -1e30f, -1e30f};
    bool any = false;
    for (int i = 0; i < dims[0]; ++i)
        for (int j = 0; j < dims[1]; ++j)
            for (int k = 0; k < dims[2]; ++k) {
                const float a = density_to_alpha(density.at(i, j, k), delta, density_shift);
                if (a <= alpha_threshold) continue;
                any = true;
                const Vec3<float> p = density.node_position(i, j, k);
                for (int c = 0; c < 3; ++c) {
                    lo[c] = std::min(lo[c], p[c]);
                    hi[c] = std::max(hi[c], p[c]);
                }
            }
    if (!any) return density.bbox();
    const Vec3<float> pad = density.voxel_size();
    Aabb<float> out;
    for (int c = 0; c < 3; ++c) {
        out.min[c] = std::max(density.bbox().min[c], lo[c] - pad[c]);
        out.max[c] = std::min(density.bbox().max[c], hi[c] + pad[c]);
    }
    return out;
}

/// Cell is occupied when the alpha at any of its corners or center exceeds
/// the threshold; the result is dilated by one cell.
inline OccupancyMask<float> build_occupancy_mask(const VoxelGrid<float>& density,
                                                 float density_shift, float delta,
                                                 const Aabb<float>& bbox, int res,
                                                 float alpha_threshold) {
    OccupancyMask<float> m;
    m.dims = {res, res, res};
    m.bbox = bbox;
    m.occupied.assign(static_cast<std::size_t>(res) * res * res, 0);
    const Vec3<float> ext = bbox.extent();
    const Vec3<float> cell{ext.x / res, ext.y / res, ext.z / res};
    float raw;
    std::span<float> raw_span(&raw, 1);
    for (int i = 0; i < res; ++i)
        for (int j = 0; j < res; ++j)
            for (int k = 0; k < res; ++k) {
                bool occ = false;
                for (int s = 0; s < 9 && !occ; ++s) {
                    // 8 corners then the center
                    const float fx = s == 8 ? 0.5f : float((s >> 0) & 1);
                    const float fy = s == 8 ? 0.5f : float((s >> 1) & 1);
                    const float fz = s == 8 ? 0.5f : float((s >> 2) & 1);
                    const Vec3<float> p{bbox.min.x + (i + fx) * cell.x,
                                        bbox.min.y + (j + fy) * cell.y,
                                        bbox.min.z + (k + fz) * cell.z};
                    density.interpolate(p, raw_span);
                    occ = density_to_alpha(raw, delta, density_shift) > alpha_threshold;
                }
                if (occ) m.occupied[m.cell_index(i, j, k)] = 1;
            }
    // dilate by one cell so surfaces straddling cell borders survive
    std::vector<std::uint8_t> dilated = m.occupied;
    for (int i = 0; i < res; ++i)
        for (int j = 0; j < res; ++j)
            for (int k = 0; k < res; ++k) {
                if (m.occupied[m.cell_index(i, j, k)]) continue;
                bool hit = false;
                for (int di = -1; di <= 1 && !hit; ++di)
                    for (int dj = -1; dj <= 1 && !hit; ++dj)
                        for (int dk = -1; dk <= 1 && !hit; ++dk) {
                            const int a = i + di, b = j + dj, c = k + dk;
                            if (a < 0 || b < 0 || c < 0 || a >= res || b >= res || c >= res)
                                continue;
                            hit = m.occupied[m.cell_index(a, b, c)] != 0;
                        }
                if (hit) dilated[m.cell_index(i, j, k)] = 1;
            }
    m.occupied = std::move(dilated);
    return m;
}

// -------------------------------------------------------------------------
// Ray pool

struct RayWork {
    Ray<float> ray;
    Vec3<float> gt;
};

inline std::vector<RayWork> build_ray_pool(const SceneDataset& ds, float near, float far) {
    std::vector<RayWork> pool;
    const Vec3<float> bg = ds.background();
    for (const Frame& f : ds.train) {
        const Camera<float> cam = ds.camera_for(f);
        std::vector<std::array<int, 2>> pixels;
        pixels.reserve(static_cast<std::size_t>(cam.width) * cam.height);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) pixels.push_back({x, y});
        auto rays = generate_rays(cam, std::span<const std::array<int, 2>>(pixels), near, far);
        for (std::size_t p = 0; p < pixels.size(); ++p)
            pool.push_back(RayWork{rays[p], frame_rgb(f, pixels[p][0], pixels[p][1], bg)});
    }
    return pool;
}

// -------------------------------------------------------------------------
// Per-ray loss forward + backward

struct BatchAccum {
    double photometric = 0, per_point = 0, background = 0, normal = 0, orientation = 0;

    void add(const BatchAccum& o) {
        photometric += o.photometric;
        per_point += o.per_point;
        background += o.background;
        normal += o.normal;
        orientation += o.orientation;
    }
};

/// Renders one training ray, accumulates the loss terms into `acc` and the
/// weighted parameter gradients into `grads`.
inline void process_ray(const SceneModel<float>& model, const RenderOptions<float>& opt,
                        const OccupancyMask<float>* mask, const RayWork& rw, std::size_t n_rays,
                        const LossWeights<float>& w, BatchAccum& acc, SceneGrads<float>& grads) {
    const auto res = render_ray(model, rw.ray, opt, mask);
    const std::size_t n = res.samples.size();

    RayUpstream<float> up;
    const Vec3<float> diff = res.rgb - rw.gt;
    acc.photometric += dot(diff, diff) / (3.0 * double(n_rays));
    up.g_rgb = photometric_grad(res.rgb, rw.gt, n_rays) * w.w_ph;

    acc.background += background_entropy(res.t_final) / double(n_rays);
    up.g_t_final = w.w_bg * background_entropy_grad(res.t_final) / float(n_rays);

    if (opt.view_dependent && n > 0) {
        up.g_color.assign(n, Vec3<float>{});
        up.g_nprime.assign(n, Vec3<float>{});
        for (std::size_t i = 0; i < n; ++i) {
            const auto& rec = res.samples[i];
            const Vec3<float> d = rec.shade.color - rw.gt;
            acc.per_point += double(rec.weight) * dot(d, d) / double(n_rays);
            up.g_color[i] =
                per_point_rgb_grad(rec.weight, rec.shade.color, rw.gt, n_rays) * w.w_pp;
            if (rec.shade.n_from_predicted) {
                if (rec.derived.valid) {
                    const Vec3<float> nd = rec.derived.n - rec.shade.n_prime;
                    acc.normal += double(rec.weight) * dot(nd, nd) / double(n_rays);
                    up.g_nprime[i] += normal_penalty_grad(rec.weight, rec.derived.n,
                                                          rec.shade.n_prime, n_rays) *
                                      w.w_p;
                }
                const float dpos =
                    std::max(0.0f, dot(rec.shade.n_prime, rw.ray.direction));
                acc.orientation += double(rec.weight) * dpos * dpos / double(n_rays);
                up.g_nprime[i] += orientation_penalty_grad(rec.weight, rec.shade.n_prime,
                                                           rw.ray.direction, n_rays) *
                                  w.w_o;
            }
        }
    }
    render_ray_backward(model, rw.ray, opt, res, up, grads);
}

// -------------------------------------------------------------------------
// Training

struct TrainHooks {
    // stage is "coarse" or "fine"
    std::function<void(const std::string& stage, long iter, const LossBreakdown<float>&)> on_iter;
    // called immediately before and immediately after each grid-scaling
    // event, with the model in its pre/post-upsample state
    std::function<void(int event, int new_res, const SceneModel<float>&,
                       const RenderOptions<float>&, const OccupancyMask<float>&)>
        on_pgs_pre;
    std::function<void(int event, int new_res, const SceneModel<float>&,
                       const RenderOptions<float>&, const OccupancyMask<float>&)>
        on_pgs_event;
};

struct TrainResult {
    SceneModel<float> model;
    OccupancyMask<float> mask;
    RenderOptions<float> options;  // the fine-stage render settings
    Aabb<float> refined_bbox{};
    std::vector<std::string> log_csv;  // header + one row per logged iteration
    std::vector<LossBreakdown<float>> final_losses;
};

namespace detail {

struct GridGroup {
    VoxelGrid<float>* grid;
    ParamGroup<float> state;
    float base_lr;
};

inline std::string csv_row(const std::string& stage, long iter, float lr,
                           const LossBreakdown<float>& l) {
    std::ostringstream os;
    os << stage << ',' << iter << ',' << lr << ',' << l.photometric << ',' << l.per_point << ','
       << l.background << ',' << l.normal << ',' << l.orientation << ',' << l.tv << ','
       << l.total;
    return os.str();
}

/// One SGD stage over the ray pool. `tv_grids` are the grids regularized
/// this stage; `mlp` may be null (coarse). Deterministic for a fixed seed
/// and thread count 1; with more threads the batch is split into fixed
/// contiguous chunks and reduced in order, which is also deterministic.
class StageRunner {
public:
    StageRunner(SceneModel<float>& model, const std::vector<RayWork>& pool,
                const TrainConfig& cfg, const RenderOptions<float>& opt,
                const OccupancyMask<float>* mask, bool train_mlp)
        : model_(model), pool_(pool), cfg_(cfg), opt_(opt), mask_(mask), train_mlp_(train_mlp),
          rng_(cfg.seed), order_(pool.size()) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        cursor_ = order_.size();  // trigger a shuffle on first use
        grids_ = {{&model.density, {}, cfg.lr_grid},   {&model.diffuse, {}, cfg.lr_grid},
                  {&model.tint, {}, cfg.lr_grid},      {&model.bottleneck, {}, cfg.lr_grid},
                  {&model.roughness, {}, cfg.lr_grid}, {&model.normal, {}, cfg.lr_grid}};
        for (auto& g : grids_) {
            g.state.name = "grid";
            g.state.reset(g.grid->size());
        }
        mlp_state_.name = "mlp";
        mlp_state_.reset(model.mlp.params().size());
        workers_.resize(std::max(1, cfg.threads));
        for (auto& w : workers_) w.grads.init(model);
    }

    /// Re-sizes optimizer state and gradient buffers after a grid upsample.
    void rebind() {
        for (auto& g : grids_) g.state.reset(g.grid->size());
        for (auto& w : workers_) w.grads.init(model_);
    }

    LossBreakdown<float> step(long iter, long total_iters, bool view_dependent_tv) {
        // draw the batch
        batch_.clear();
        for (int b = 0; b < cfg_.batch_size; ++b) {
            if (cursor_ >= order_.size()) {
                std::shuffle(order_.begin(), order_.end(), rng_);
                cursor_ = 0;
            }
            batch_.push_back(order_[cursor_++]);
        }

        model_.zero_grad();
        BatchAccum acc;
        const std::size_t n_rays = batch_.size();
        if (workers_.size() == 1) {
            auto& w = workers_[0];
            w.grads.zero();
            for (std::size_t idx : batch_)
                process_ray(model_, opt_, mask_, pool_[idx], n_rays, cfg_.weights, acc, w.grads);
            w.grads.add_to(model_);
        } else {
            const std::size_t n_workers = workers_.size();
            std::vector<std::thread> threads;
            for (std::size_t t = 0; t < n_workers; ++t) {
                threads.emplace_back([&, t] {
                    auto& w = workers_[t];
                    w.grads.zero();
                    w.acc = BatchAccum{};
                    const std::size_t lo = n_rays * t / n_workers;
                    const std::size_t hi = n_rays * (t + 1) / n_workers;
                    for (std::size_t i = lo; i < hi; ++i)
                        process_ray(model_, opt_, mask_, pool_[batch_[i]], n_rays, cfg_.weights,
                                    w.acc, w.grads);
                });
            }
            for (auto& th : threads) th.join();
            for (auto& w : workers_) {
                acc.add(w.acc);
                w.grads.add_to(model_);
            }
        }

        // total variation, amortized over tv_every iterations
        double tv = 0;
        if (cfg_.weights.w_tv > 0.0f && iter % cfg_.tv_every == 0) {
            const float w_eff = cfg_.weights.w_tv * float(cfg_.tv_every);
            tv += model_.density.total_variation_backward(w_eff);
            tv += model_.diffuse.total_variation_backward(w_eff);
            if (view_dependent_tv) {
                tv += model_.tint.total_variation_backward(w_eff);
                tv += model_.bottleneck.total_variation_backward(w_eff);
                tv += model_.roughness.total_variation_backward(w_eff);
                tv += model_.normal.total_variation_backward(w_eff);
            }
        }

        const LossBreakdown<float> losses = total_loss(
            float(acc.photometric), float(acc.per_point), float(acc.background),
            float(acc.normal), float(acc.orientation), float(tv), cfg_.weights);

        // parameter update
        const float decay = cfg_.lr_decay;
        last_lr_ = lr_schedule(cfg_.lr_grid, iter, std::max(total_iters, 1L), decay);
        const int active_grids = view_dependent_tv ? 6 : 2;  // density + diffuse in coarse
        for (int g = 0; g < active_grids; ++g) {
            adam_step(grids_[g].state, std::span<float>(grids_[g].grid->data()),
                      std::span<const float>(grids_[g].grid->grad()), last_lr_);
        }
        if (train_mlp_) {
            const float mlp_lr = lr_schedule(cfg_.lr_mlp, iter, std::max(total_iters, 1L), decay);
            adam_step(mlp_state_, std::span<float>(model_.mlp.params()),
                      std::span<const float>(model_.mlp.grad()), mlp_lr);
        }
        return losses;
    }

    float last_lr() const { return last_lr_; }

private:
    struct Worker {
        SceneGrads<float> grads;
        BatchAccum acc;
    };

    SceneModel<float>& model_;
    const std::vector<RayWork>& pool_;
    const TrainConfig& cfg_;
    const RenderOptions<float>& opt_;
    const OccupancyMask<float>* mask_;
    bool train_mlp_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> batch_;
    std::vector<GridGroup> grids_;
    ParamGroup<float> mlp_state_;
    std::vector<Worker> workers_;
    float last_lr_ = 0;
};

/// Geometric resolution ladder from start to fine over `events` steps.
inline std::vector<int> pgs_resolutions(int start, int fine, int events) {
    std::vector<int> out;
    for (int k = 1; k <= events; ++k) {
        const double r = double(start) * std::pow(double(fine) / double(start),
                                                  double(k) / double(events));
        out.push_back(std::min(fine, std::max(start, int(std::lround(r)))));
    }
    out.back() = fine;
    return out;
}

inline void upsample_model(SceneModel<float>& m, int res) {
    const std::array<int, 3> dims{res, res, res};
    m.density = m.density.upsample(dims);
    m.diffuse = m.diffuse.upsample(dims);
    m.tint = m.tint.upsample(dims);
    m.bottleneck = m.bottleneck.upsample(dims);
    m.roughness = m.roughness.upsample(dims);
    m.normal = m.normal.upsample(dims);
}

}  // namespace detail

inline TrainResult train(const SceneDataset& ds, const TrainConfig& cfg, TrainHooks hooks = {}) {
    cfg.validate();
    if (ds.train.empty()) throw std::invalid_argument("train: dataset has no training frames");

    TrainResult result;
    result.log_csv.push_back(
        "stage,iter,lr,photometric,per_point,background,normal,orientation,tv,total");

    const Aabb<float> box{{-cfg.bbox_half, -cfg.bbox_half, -cfg.bbox_half},
                          {cfg.bbox_half, cfg.bbox_half, cfg.bbox_half}};
    const auto pool = build_ray_pool(ds, cfg.near, cfg.far);

    // ---- coarse stage: view-independent geometry ----
    SceneModel<float> coarse = make_coarse_model(cfg, box);
    const float coarse_step = cfg.step_ratio * min_voxel_edge(coarse.density);
    coarse.density_shift = solve_density_shift(cfg.alpha_init, coarse_step);

    RenderOptions<float> copt;
    copt.view_dependent = false;
    copt.background = ds.background();
    copt.step_size = coarse_step;
    copt.alpha_skip = cfg.alpha_skip;
    copt.early_stop = cfg.early_stop;

    {
        detail::StageRunner runner(coarse, pool, cfg, copt, nullptr, false);
        for (long it = 0; it < cfg.coarse_iters; ++it) {
            const auto losses = runner.step(it, cfg.coarse_iters, false);
            if (it % cfg.log_every == 0 || it + 1 == cfg.coarse_iters)
                result.log_csv.push_back(detail::csv_row("coarse", it, runner.last_lr(), losses));
            if (hooks.on_iter) hooks.on_iter("coarse", it, losses);
        }
    }

    // ---- bounding-box refinement and occupancy ----
    const Aabb<float> fine_box =
        refine_bbox(coarse.density, coarse.density_shift, coarse_step, cfg.refine_threshold);
    result.refined_bbox = fine_box;

    // ---- fine stage ----
    const int start_res = cfg.use_pgs ? cfg.pgs_start_res : cfg.fine_res;
    SceneModel<float> model = make_fine_model(cfg, fine_box, start_res, coarse);

    // step size and density shift are pinned to the final resolution so
    // renders stay continuous across grid-scaling events
    const Vec3<float> fine_ext = fine_box.extent();
    const float fine_edge =
        std::min({fine_ext.x, fine_ext.y, fine_ext.z}) / float(cfg.fine_res - 1);
    RenderOptions<float> fopt;
    fopt.view_dependent = true;
    fopt.use_ide = cfg.use_ide;
    fopt.use_ref_dir = cfg.use_ref_dir;
    fopt.background = ds.background();
    fopt.step_size = cfg.step_ratio * fine_edge;
    fopt.alpha_skip = cfg.alpha_skip;
    fopt.early_stop = cfg.early_stop;
    model.density_shift = solve_density_shift(cfg.alpha_init, fopt.step_size);

    OccupancyMask<float> mask =
        build_occupancy_mask(coarse.density, model.density_shift, fopt.step_size, fine_box,
                             cfg.mask_res, cfg.occ_threshold);

    // upsample events sit in the first half of the fine stage
    std::vector<long> event_iters;
    std::vector<int> event_res;
    if (cfg.use_pgs && start_res < cfg.fine_res) {
        event_res = detail::pgs_resolutions(start_res, cfg.fine_res, cfg.pgs_events);
        for (int k = 1; k <= int(event_res.size()); ++k)
            event_iters.push_back(cfg.fine_iters / 2 * k / long(event_res.size()));
    }

    {
        detail::StageRunner runner(model, pool, cfg, fopt, &mask, true);
        std::size_t next_event = 0;
        for (long it = 0; it < cfg.fine_iters; ++it) {
            while (next_event < event_iters.size() && it == event_iters[next_event]) {
                if (hooks.on_pgs_pre)
                    hooks.on_pgs_pre(int(next_event), event_res[next_event], model, fopt, mask);
                detail::upsample_model(model, event_res[next_event]);
                runner.rebind();
                if (hooks.on_pgs_event)
                    hooks.on_pgs_event(int(next_event), event_res[next_event], model, fopt, mask);
                ++next_event;
            }
            const auto losses = runner.step(it, cfg.fine_iters, true);
            if (it % cfg.log_every == 0 || it + 1 == cfg.fine_iters)
                result.log_csv.push_back(detail::csv_row("fine", it, runner.last_lr(), losses));
            if (hooks.on_iter) hooks.on_iter("fine", it, losses);
            if (it + 1 == cfg.fine_iters) result.final_losses.push_back(losses);
        }
    }

    result.model = std::move(model);
    result.mask = std::move(mask);
    result.options = fopt;
    return result;
}

// -------------------------------------------------------------------------
// Rendering and evaluation

inline Image render_image(const SceneModel<float>& model, const Camera<float>& cam,
                          const RenderOptions<float>& opt, float near, float far,
                          const OccupancyMask<float>* mask = nullptr) {
    Image img(cam.width, cam.height, 3);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const Ray<float> ray = pixel_ray(cam, x, y, near, far);
            const auto res = render_ray(model, ray, opt, mask);
            img.at(x, y, 0) = res.rgb.x;
            img.at(x, y, 1) = res.rgb.y;
            img.at(x, y, 2) = res.rgb.z;
        }
    return img;
}

inline Image frame_target(const Frame& f, const Vec3<float>& bg) {
    Image img(f.image.width, f.image.height, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const Vec3<float> rgb = frame_rgb(f, x, y, bg);
            img.at(x, y, 0) = rgb.x;
            img.at(x, y, 1) = rgb.y;
            img.at(x, y, 2) = rgb.z;
        }
    return img;
}

inline MetricReport evaluate(const SceneModel<float>& model, const SceneDataset& ds,
                             const std::vector<Frame>& frames, const RenderOptions<float>& opt,
                             float near, float far, const OccupancyMask<float>* mask = nullptr,
                             std::vector<Image>* out_renders = nullptr) {
    MetricReport report;
    for (const Frame& f : frames) {
        const Image pred = render_image(model, ds.camera_for(f), opt, near, far, mask);
        const Image gt = frame_target(f, ds.background());
        report.psnr_per_image.push_back(psnr(pred, gt));
        report.ssim_per_image.push_back(ssim(pred, gt));
        if (out_renders) out_renders->push_back(pred);
    }
    return report;
}

}  // namespace rvox
