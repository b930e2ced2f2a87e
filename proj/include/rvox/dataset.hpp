#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rvox/camera.hpp"
#include "rvox/image.hpp"
#include "rvox/vec.hpp"

namespace rvox {

/// One posed RGBA view.
struct Frame {
    Image image;  // H x W x 4, values in [0,1]
    Mat4<float> camera_to_world = Mat4<float>::identity();
    std::string name;
};

struct SceneDataset {
    int width = 0, height = 0;
    float camera_angle_x = 0.0f;
    float focal = 0.0f;
    bool white_background = true;
    std::vector<Frame> train, val, test;

    const std::vector<Frame>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("unknown split: " + name);
    }

    Vec3<float> background() const {
        return white_background ? Vec3<float>{1, 1, 1} : Vec3<float>{0, 0, 0};
    }

    Camera<float> camera_for(const Frame& f) const {
        Camera<float> cam;
        cam.width = width;
        cam.height = height;
        cam.focal = focal;
        cam.pose = f.camera_to_world;
        return cam;
    }
};

/// RGB training target at a pixel: alpha-composited against the dataset
/// background.
inline Vec3<float> frame_rgb(const Frame& f, int x, int y, const Vec3<float>& bg) {
    const float a = f.image.at(x, y, 3);
    return Vec3<float>{f.image.at(x, y, 0), f.image.at(x, y, 1), f.image.at(x, y, 2)} * a +
           bg * (1.0f - a);
}

namespace detail {

inline std::vector<Frame> load_split(const std::filesystem::path& dir, const std::string& split,
                                     float& camera_angle_x, int& width, int& height) {
    const auto json_path = dir / ("transforms_" + split + ".json");
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("dataset: missing " + json_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("dataset: malformed JSON in " + json_path.string() + ": " +
                                 e.what());
    }
    if (!j.contains("camera_angle_x") || !j.contains("frames"))
        throw std::runtime_error("dataset: " + json_path.string() +
                                 " lacks camera_angle_x or frames");
    const float angle = j["camera_angle_x"].get<float>();
    if (camera_angle_x == 0.0f) camera_angle_x = angle;

    std::vector<Frame> frames;
    for (const auto& jf : j["frames"]) {
        Frame f;
        std::string rel = jf.at("file_path").get<std::string>();
        if (rel.size() < 4 || rel.substr(rel.size() - 4) != ".png") rel += ".png";
        const auto img_path = dir / std::filesystem::path(rel).relative_path();
        f.image = read_png(img_path);
        f.name = std::filesystem::path(rel).stem().string();
        const auto& m = jf.at("transform_matrix");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) f.camera_to_world(r, c) = m.at(r).at(c).get<float>();
        if (!f.camera_to_world.rotation_orthonormal(1e-3f))
            throw std::runtime_error("dataset: non-orthonormal rotation in " + json_path.string());
        if (width == 0) {
            width = f.image.width;
            height = f.image.height;
        } else if (f.image.width != width || f.image.height != height) {
            throw std::runtime_error("dataset: resolution mismatch for " + img_path.string());
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

}  // namespace detail

/// NeRF-synthetic directory layout: transforms_{train,val,test}.json with
/// camera_angle_x and per-frame file_path + transform_matrix, plus PNGs.
inline SceneDataset load_nerf_synthetic(const std::filesystem::path& dir,
                                        bool white_background = true) {
    SceneDataset ds;
    ds.white_background = white_background;
    ds.train = detail::load_split(dir, "train", ds.camera_angle_x, ds.width, ds.height);
    ds.val = detail::load_split(dir, "val", ds.camera_angle_x, ds.width, ds.height);
    ds.test = detail::load_split(dir, "test", ds.camera_angle_x, ds.width, ds.height);
    ds.focal = Camera<float>::focal_from_angle_x(ds.width, ds.camera_angle_x);
    return ds;
}

/// Writes the dataset back out in the same layout (lossless for poses and
/// focal; images quantized to 8-bit PNG).
inline void write_nerf_synthetic(const SceneDataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const std::string split : {"train", "val", "test"}) {
        fs::create_directories(dir / split);
        nlohmann::json j;
        j["camera_angle_x"] = ds.camera_angle_x;
        j["frames"] = nlohmann::json::array();
        int idx = 0;
        for (const Frame& f : ds.split(split)) {
            const std::string name = "r_" + std::to_string(idx++);
            nlohmann::json jf;
            jf["file_path"] = "./" + split + "/" + name;
            auto m = nlohmann::json::array();
            for (int r = 0; r < 4; ++r) {
                auto row = nlohmann::json::array();
                for (int c = 0; c < 4; ++c) row.push_back(f.camera_to_world(r, c));
                m.push_back(row);
            }
            jf["transform_matrix"] = m;
            j["frames"].push_back(jf);
            write_png(dir / split / (name + ".png"), f.image);
        }
        std::ofstream out(dir / ("transforms_" + split + ".json"));
        out << j.dump(2) << "\n";
    }
}

// -------------------------------------------------------------------------
// Procedural scenes. These double as analytic ground-truth oracles: the
// renders are exact ray-traced images of closed-form geometry.

enum class ProceduralKind { lambertian_cube, mirror_sphere };

inline ProceduralKind procedural_kind_from_string(const std::string& s) {
    if (s == "lambertian_cube") return ProceduralKind::lambertian_cube;
    if (s == "mirror_sphere") return ProceduralKind::mirror_sphere;
    throw std::invalid_argument("unknown procedural scene kind: " + s);
}

namespace detail {

inline Mat4<float> look_at(const Vec3<float>& eye, const Vec3<float>& target,
                           const Vec3<float>& up) {
    // NeRF convention: camera looks along its -z
    const Vec3<float> z = normalized(eye - target);
    const Vec3<float> x = normalized(cross(up, z));
    const Vec3<float> y = cross(z, x);
    Mat4<float> m = Mat4<float>::identity();
    for (int r = 0; r < 3; ++r) {
        m(r, 0) = x[r];
        m(r, 1) = y[r];
        m(r, 2) = z[r];
        m(r, 3) = eye[r];
    }
    return m;
}

/// Smooth directional environment, degree-1 in the direction so it is
/// learnable by a small model: each channel ramps along one axis.
inline Vec3<float> environment_color(const Vec3<float>& d) {
    return {0.5f + 0.5f * d.x, 0.5f + 0.5f * d.y, 0.5f + 0.5f * d.z};
}

struct Hit {
    bool hit = false;
    float t = 0.0f;
    Vec3<float> normal{};
};

inline Hit intersect_cube(const Vec3<float>& o, const Vec3<float>& d, float half) {
    float t0 = 1e-4f, t1 = 1e9f;
    int axis = -1;
    float sign = 0.0f;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-12f) {
            if (std::abs(o[a]) > half) return {};
            continue;
        }
        float ta = (-half - o[a]) / d[a];
        float tb = (half - o[a]) / d[a];
        float s = -1.0f;
        if (ta > tb) {
            std::swap(ta, tb);
            s = 1.0f;
        }
        if (ta > t0) {
            t0 = ta;
            axis = a;
            sign = s;
        }
        t1 = std::min(t1, tb);
    }
    if (axis < 0 || t0 > t1) return {};
    Hit h;
    h.hit = true;
    h.t = t0;
    h.normal[axis] = sign;
    return h;
}

inline Hit intersect_sphere(const Vec3<float>& o, const Vec3<float>& d, float radius) {
    const float b = dot(o, d);
    const float c = dot(o, o) - radius * radius;
    const float disc = b * b - c;
    if (disc < 0.0f) return {};
    const float t = -b - std::sqrt(disc);
    if (t < 1e-4f) return {};
    Hit h;
    h.hit = true;
    h.t = t;
    h.normal = normalized(o + t * d);
    return h;
}

inline Vec3<float> shade_procedural(ProceduralKind kind, float reflectivity, const Vec3<float>& o,
                                    const Vec3<float>& d, const Hit& h) {
    static const Vec3<float> light = normalized(Vec3<float>{0.5f, 0.3f, 0.8f});
    const float lambert = 0.3f + 0.7f * std::max(0.0f, dot(h.normal, light));
    if (kind == ProceduralKind::lambertian_cube) {
        // one albedo per face
        static const Vec3<float> face_albedo[6] = {{0.9f, 0.2f, 0.2f}, {0.2f, 0.9f, 0.2f},
                                                   {0.2f, 0.2f, 0.9f}, {0.9f, 0.9f, 0.2f},
                                                   {0.2f, 0.9f, 0.9f}, {0.9f, 0.4f, 0.9f}};
        int face = 0;
        for (int a = 0; a < 3; ++a) {
            if (h.normal[a] > 0.5f) face = 2 * a;
            if (h.normal[a] < -0.5f) face = 2 * a + 1;
        }
        return face_albedo[face] * lambert;
    }
    // mirror sphere: diffuse base mixed with the exact mirror reflection of
    // the environment, mix ratio = reflectivity
    const Vec3<float> albedo{0.5f + 0.4f * h.normal.x, 0.5f + 0.4f * h.normal.y,
                             0.5f + 0.4f * h.normal.z};
    const Vec3<float> diffuse = albedo * lambert;
    const Vec3<float> omega_o = -d;
    const Vec3<float> refl = 2.0f * dot(omega_o, h.normal) * h.normal - omega_o;
    const Vec3<float> env = environment_color(refl);
    return diffuse * (1.0f - reflectivity) + env * reflectivity;
}

inline Frame render_procedural_frame(ProceduralKind kind, float reflectivity,
                                     const Camera<float>& cam, const std::string& name) {
    Frame f;
    f.name = name;
    f.camera_to_world = cam.pose;
    f.image = Image(cam.width, cam.height, 4);
    const Vec3<float> origin = cam.pose.translation();
    constexpr int ss = 2;  // subpixel grid; keeps renders resolution-consistent
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            Vec3<float> rgb{};
            float alpha = 0.0f;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx) {
                    const float u =
                        (x + (sx + 0.5f) / ss - cam.width * 0.5f) / cam.focal;
                    const float v =
                        -(y + (sy + 0.5f) / ss - cam.height * 0.5f) / cam.focal;
                    const Vec3<float> d = normalized(cam.pose.rotate(Vec3<float>{u, v, -1.0f}));
                    const Hit h = kind == ProceduralKind::lambertian_cube
                                      ? intersect_cube(origin, d, 0.5f)
                                      : intersect_sphere(origin, d, 0.5f);
                    if (h.hit) {
                        rgb += shade_procedural(kind, reflectivity, origin, d, h);
                        alpha += 1.0f;
                    }
                }
            rgb = rgb / float(ss * ss);
            alpha /= float(ss * ss);
            // store straight (un-premultiplied) color where visible
            const Vec3<float> stored = alpha > 0.0f ? rgb / alpha : Vec3<float>{};
            f.image.at(x, y, 0) = std::clamp(stored.x, 0.0f, 1.0f);
            f.image.at(x, y, 1) = std::clamp(stored.y, 0.0f, 1.0f);
            f.image.at(x, y, 2) = std::clamp(stored.z, 0.0f, 1.0f);
            f.image.at(x, y, 3) = alpha;
        }
    return f;
}

}  // namespace detail

/// Analytic reflective/diffuse test scenes with cameras on a sphere around
/// the origin. Deterministic under the seed.
inline SceneDataset generate_procedural_scene(ProceduralKind kind, float reflectivity,
                                              int n_views, int resolution, std::uint64_t seed) {
    if (n_views < 2) throw std::invalid_argument("generate_procedural_scene: need >= 2 views");
    if (resolution < 32)
        throw std::invalid_argument("generate_procedural_scene: resolution must be >= 32");
    if (reflectivity < 0.0f || reflectivity > 1.0f)
        throw std::invalid_argument("generate_procedural_scene: reflectivity outside [0,1]");

    SceneDataset ds;
    ds.width = ds.height = resolution;
    ds.camera_angle_x = 0.6911112070083618f;
    ds.focal = Camera<float>::focal_from_angle_x(resolution, ds.camera_angle_x);
    ds.white_background = true;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    const float phase = uni(rng) * 6.2831853f;

    const int n_test = std::max(2, n_views / 3);
    const int n_val = 2;
    const int total = n_views + n_test + n_val;
    const float golden = 2.399963229728653f;  // golden angle
    const float radius = 3.0f;

    auto camera_at = [&](int i) {
        // evenly wound spiral over a band of the sphere, rotated by the
        // seeded phase
        const float frac = (i + 0.5f) / total;
        const float z = -0.75f + 1.5f * frac;
        const float r = std::sqrt(std::max(0.0f, 1.0f - z * z));
        const float az = phase + golden * i;
        const Vec3<float> eye = Vec3<float>{r * std::cos(az), r * std::sin(az), z} * radius;
        Camera<float> cam;
        cam.width = cam.height = resolution;
        cam.focal = ds.focal;
        cam.pose = detail::look_at(eye, Vec3<float>{0, 0, 0}, Vec3<float>{0, 0, 1});
        return cam;
    };

    int idx = 0;
    for (int i = 0; i < n_views; ++i, ++idx)
        ds.train.push_back(detail::render_procedural_frame(kind, reflectivity, camera_at(idx),
                                                           "r_" + std::to_string(i)));
    for (int i = 0; i < n_val; ++i, ++idx)
        ds.val.push_back(detail::render_procedural_frame(kind, reflectivity, camera_at(idx),
                                                         "r_" + std::to_string(i)));
    for (int i = 0; i < n_test; ++i, ++idx)
        ds.test.push_back(detail::render_procedural_frame(kind, reflectivity, camera_at(idx),
                                                          "r_" + std::to_string(i)));
    return ds;
}

}  // namespace rvox
