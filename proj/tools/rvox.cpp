// Command-line front end: train, render, eval, gen-scene.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rvox/checkpoint.hpp"
#include "rvox/trainer.hpp"

namespace fs = std::filesystem;
using namespace rvox;

namespace {

struct CommonTrainFlags {
    std::string data_dir, config_path, out_dir = "out";
    long seed = -1;
    int threads = 0;
    bool no_ide = false, no_ref_dir = false, no_pgs = false, small_mlp = false;
    double w_ph = -1, w_pp = -1, w_bg = -1, w_p = -1, w_o = -1, w_tv = -1;
};

TrainConfig resolve_config(const CommonTrainFlags& f) {
    TrainConfig cfg;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw std::runtime_error("cannot open config " + f.config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = TrainConfig::from_config(ConfigMap::parse(ss.str()));
    }
    if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (f.threads > 0) cfg.threads = f.threads;
    if (f.no_ide) cfg.use_ide = false;
    if (f.no_ref_dir) cfg.use_ref_dir = false;
    if (f.no_pgs) cfg.use_pgs = false;
    if (f.small_mlp) {
        cfg.mlp_width = 32;
        cfg.mlp_depth = 2;
        cfg.bottleneck = std::min(cfg.bottleneck, 8);
    }
    if (f.w_ph >= 0) cfg.weights.w_ph = float(f.w_ph);
    if (f.w_pp >= 0) cfg.weights.w_pp = float(f.w_pp);
    if (f.w_bg >= 0) cfg.weights.w_bg = float(f.w_bg);
    if (f.w_p >= 0) cfg.weights.w_p = float(f.w_p);
    if (f.w_o >= 0) cfg.weights.w_o = float(f.w_o);
    if (f.w_tv >= 0) cfg.weights.w_tv = float(f.w_tv);
    cfg.validate();
    return cfg;
}

nlohmann::json report_json(const MetricReport& r) {
    nlohmann::json j;
    j["psnr"] = r.psnr_per_image;
    j["ssim"] = r.ssim_per_image;
    j["mean_psnr"] = r.mean_psnr();
    j["mean_ssim"] = r.mean_ssim();
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

/// Render settings matching how a loaded checkpoint was trained: the step
/// is re-derived from the stored density grid.
RenderOptions<float> options_for(const SceneModel<float>& model, bool white_bg, float step_ratio,
                                 bool use_ide, bool use_ref_dir) {
    RenderOptions<float> opt;
    opt.view_dependent = true;
    opt.use_ide = use_ide;
    opt.use_ref_dir = use_ref_dir;
    opt.background = white_bg ? Vec3<float>{1, 1, 1} : Vec3<float>{0, 0, 0};
    opt.step_size = step_ratio * min_voxel_edge(model.density);
    opt.alpha_skip = 1e-4f;
    opt.early_stop = 1e-4f;
    return opt;
}

int cmd_gen_scene(const std::string& kind, double reflectivity, int views, int resolution,
                  long seed, const std::string& out_dir) {
    const auto ds = generate_procedural_scene(procedural_kind_from_string(kind),
                                              float(reflectivity), views, resolution,
                                              static_cast<std::uint64_t>(std::max(0L, seed)));
    fs::create_directories(out_dir);
    write_nerf_synthetic(ds, out_dir);
    std::cout << "wrote " << ds.train.size() << " train / " << ds.val.size() << " val / "
              << ds.test.size() << " test views to " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonTrainFlags& f) {
    const TrainConfig cfg = resolve_config(f);
    const SceneDataset ds = load_nerf_synthetic(f.data_dir);
    fs::create_directories(f.out_dir);

    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult result = train(ds, cfg);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_checkpoint(fs::path(f.out_dir) / "checkpoint.bin", result.model);

    std::string csv;
    for (const auto& line : result.log_csv) csv += line + "\n";
    write_text(fs::path(f.out_dir) / "train_log.csv", csv);

    const auto report =
        evaluate(result.model, ds, ds.test, result.options, cfg.near, cfg.far, &result.mask);
    // metrics stay free of timing data so identical runs are byte-identical
    write_text(fs::path(f.out_dir) / "metrics.json", report_json(report).dump(2) + "\n");
    nlohmann::json stats;
    stats["train_seconds"] = seconds;
    write_text(fs::path(f.out_dir) / "train_stats.json", stats.dump(2) + "\n");

    std::cout << "test psnr " << report.mean_psnr() << " dB, ssim " << report.mean_ssim()
              << ", trained in " << seconds << " s\n";
    return 0;
}

Image composite_component(const SceneModel<float>& model, const Camera<float>& cam,
                          const RenderOptions<float>& opt, float near, float far,
                          const OccupancyMask<float>* mask, const std::string& which) {
    Image img(cam.width, cam.height, 3);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const auto res = render_ray(model, pixel_ray(cam, x, y, near, far), opt, mask);
            Vec3<float> acc{};
            for (const auto& s : res.samples) {
                Vec3<float> v{};
                if (which == "diffuse") {
                    v = s.shade.diffuse;
                } else if (which == "specular") {
                    v = cwise_mul(s.shade.tint, s.shade.c_s);
                } else if (which == "tint") {
                    v = s.shade.tint;
                } else if (which == "roughness") {
                    const float r = s.shade.rho / (1.0f + s.shade.rho);
                    v = {r, r, r};
                } else if (which == "normals") {
                    v = s.shade.n_prime * 0.5f + Vec3<float>{0.5f, 0.5f, 0.5f};
                }
                acc += s.weight * v;
            }
            acc += res.t_final * opt.background;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(acc[c], 0.0f, 1.0f);
        }
    return img;
}

int cmd_render(const std::string& ckpt, const std::string& data_dir, const std::string& split,
               int frame_idx, const std::string& out_dir, bool components, float step_ratio) {
    const SceneModel<float> model = load_checkpoint(ckpt);
    const SceneDataset ds = load_nerf_synthetic(data_dir);
    const auto& frames = ds.split(split);
    if (frame_idx < 0 || frame_idx >= int(frames.size()))
        throw std::runtime_error("frame index out of range for split " + split);
    const Frame& f = frames[frame_idx];
    const auto opt = options_for(model, ds.white_background, step_ratio, true, true);
    const auto mask = build_occupancy_mask(model.density, model.density_shift, opt.step_size,
                                           model.bbox(), 96, 1e-4f);
    const float near = 0.1f, far = 10.0f;
    fs::create_directories(out_dir);
    const Camera<float> cam = ds.camera_for(f);
    write_png(fs::path(out_dir) / (f.name + "_rgb.png"),
              render_image(model, cam, opt, near, far, &mask));
    if (components) {
        for (const std::string which : {"diffuse", "specular", "tint", "roughness", "normals"})
            write_png(fs::path(out_dir) / (f.name + "_" + which + ".png"),
                      composite_component(model, cam, opt, near, far, &mask, which));
    }
    std::cout << "rendered " << split << "[" << frame_idx << "] to " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             const std::string& out_dir, float step_ratio) {
    const SceneModel<float> model = load_checkpoint(ckpt);
    const SceneDataset ds = load_nerf_synthetic(data_dir);
    const auto& frames = ds.split(split);
    if (frames.empty()) throw std::runtime_error("split " + split + " is empty");
    const auto opt = options_for(model, ds.white_background, step_ratio, true, true);
    const auto mask = build_occupancy_mask(model.density, model.density_shift, opt.step_size,
                                           model.bbox(), 96, 1e-4f);
    std::vector<Image> renders;
    const auto report = evaluate(model, ds, frames, opt, 0.1f, 10.0f, &mask, &renders);

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "metrics.json", report_json(report).dump(2) + "\n");

    // contact sheet: one row per view, prediction next to ground truth
    const int w = ds.width, h = ds.height;
    Image sheet(2 * w, h * int(frames.size()), 3);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Image gt = frame_target(frames[i], ds.background());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    sheet.at(x, int(i) * h + y, c) = renders[i].at(x, y, c);
                    sheet.at(w + x, int(i) * h + y, c) = gt.at(x, y, c);
                }
    }
    write_png(fs::path(out_dir) / "contact_sheet.png", sheet);
    std::cout << split << " psnr " << report.mean_psnr() << " dB, ssim " << report.mean_ssim()
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxel-grid volume renderer and trainer"};
    app.require_subcommand(1);

    // train
    CommonTrainFlags tf;
    auto* train_cmd = app.add_subcommand("train", "optimize a model on a dataset");
    train_cmd->add_option("--data", tf.data_dir, "dataset directory")->required();
    train_cmd->add_option("--config", tf.config_path, "config file");
    train_cmd->add_option("--out", tf.out_dir, "output directory");
    train_cmd->add_option("--seed", tf.seed, "random seed");
    train_cmd->add_option("--threads", tf.threads, "worker threads");
    train_cmd->add_flag("--no-ide", tf.no_ide, "disable encoding attenuation");
    train_cmd->add_flag("--no-ref-dir", tf.no_ref_dir, "condition on the view direction");
    train_cmd->add_flag("--no-pgs", tf.no_pgs, "disable progressive grid scaling");
    train_cmd->add_flag("--small-mlp", tf.small_mlp, "use a reduced directional network");
    train_cmd->add_option("--w-ph", tf.w_ph, "photometric weight");
    train_cmd->add_option("--w-pp", tf.w_pp, "per-point color weight");
    train_cmd->add_option("--w-bg", tf.w_bg, "background entropy weight");
    train_cmd->add_option("--w-p", tf.w_p, "normal penalty weight");
    train_cmd->add_option("--w-o", tf.w_o, "orientation penalty weight");
    train_cmd->add_option("--w-tv", tf.w_tv, "total variation weight");

    // render
    std::string r_ckpt, r_data, r_split = "test", r_out = "out";
    int r_frame = 0;
    bool r_components = false;
    float r_step_ratio = 0.5f;
    auto* render_cmd = app.add_subcommand("render", "render one view from a checkpoint");
    render_cmd->add_option("--checkpoint", r_ckpt, "checkpoint file")->required();
    render_cmd->add_option("--data", r_data, "dataset directory")->required();
    render_cmd->add_option("--split", r_split, "train/val/test");
    render_cmd->add_option("--frame", r_frame, "frame index in the split");
    render_cmd->add_option("--out", r_out, "output directory");
    render_cmd->add_option("--step-ratio", r_step_ratio, "step size as a voxel fraction");
    render_cmd->add_flag("--components", r_components,
                         "also write diffuse/specular/tint/roughness/normal maps");

    // eval
    std::string e_ckpt, e_data, e_split = "test", e_out = "out";
    float e_step_ratio = 0.5f;
    auto* eval_cmd = app.add_subcommand("eval", "compute metrics over a split");
    eval_cmd->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", e_data, "dataset directory")->required();
    eval_cmd->add_option("--split", e_split, "train/val/test");
    eval_cmd->add_option("--out", e_out, "output directory");
    eval_cmd->add_option("--step-ratio", e_step_ratio, "step size as a voxel fraction");

    // gen-scene
    std::string g_kind = "lambertian_cube", g_out = "scene";
    double g_reflectivity = 0.0;
    int g_views = 24, g_resolution = 128;
    long g_seed = 0;
    auto* gen_cmd = app.add_subcommand("gen-scene", "write a procedural dataset");
    gen_cmd->add_option("--kind", g_kind, "lambertian_cube or mirror_sphere");
    gen_cmd->add_option("--reflectivity", g_reflectivity, "mirror mix in [0,1]");
    gen_cmd->add_option("--views", g_views, "training view count");
    gen_cmd->add_option("--resolution", g_resolution, "image width and height");
    gen_cmd->add_option("--seed", g_seed, "random seed");
    gen_cmd->add_option("--out", g_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(tf);
        if (*render_cmd)
            return cmd_render(r_ckpt, r_data, r_split, r_frame, r_out, r_components,
                              r_step_ratio);
        if (*eval_cmd) return cmd_eval(e_ckpt, e_data, e_split, e_out, e_step_ratio);
        if (*gen_cmd)
            return cmd_gen_scene(g_kind, g_reflectivity, g_views, g_resolution, g_seed, g_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
