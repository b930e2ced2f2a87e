#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "rvox/render.hpp"

namespace rvox {

/// Checkpoint layout (little-endian):
///   "RVCK"            4 bytes magic
///   version           u32 (currently 1)
///   density_shift     f32
///   encoding levels   u32 count, then u32 per level
///   mlp shape         u32 input_dim, hidden_width, hidden_layers, output_dim
///   mlp params        u64 count, then f32 each
///   six grids         density, diffuse, tint, bottleneck, roughness, normal;
///                     each: u32 dims[3], u32 channels, f64 bbox (min xyz,
///                     max xyz), u64 value count, then f32 each
namespace detail {

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

inline void put_grid(std::ostream& out, const VoxelGrid<float>& g) {
    for (int k = 0; k < 3; ++k) put<std::uint32_t>(out, g.dims()[k]);
    put<std::uint32_t>(out, g.channels());
    for (int k = 0; k < 3; ++k) put<double>(out, g.bbox().min[k]);
    for (int k = 0; k < 3; ++k) put<double>(out, g.bbox().max[k]);
    put<std::uint64_t>(out, g.size());
    out.write(reinterpret_cast<const char*>(g.data().data()),
              static_cast<std::streamsize>(g.size() * sizeof(float)));
}

inline VoxelGrid<float> take_grid(std::istream& in) {
    std::array<int, 3> dims;
    for (int k = 0; k < 3; ++k) dims[k] = static_cast<int>(take<std::uint32_t>(in));
    const int channels = static_cast<int>(take<std::uint32_t>(in));
    Aabb<float> bbox;
    for (int k = 0; k < 3; ++k) bbox.min[k] = static_cast<float>(take<double>(in));
    for (int k = 0; k < 3; ++k) bbox.max[k] = static_cast<float>(take<double>(in));
    VoxelGrid<float> g(dims, channels, bbox);
    const auto n = take<std::uint64_t>(in);
    if (n != g.size()) throw std::runtime_error("checkpoint: grid size mismatch");
    in.read(reinterpret_cast<char*>(g.data().data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated grid data");
    return g;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const SceneModel<float>& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() +
                                       " for writing");
    out.write("RVCK", 4);
    detail::put<std::uint32_t>(out, 1);
    detail::put<float>(out, model.density_shift);

    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(model.enc.levels.size()));
    for (int l : model.enc.levels) detail::put<std::uint32_t>(out, l);

    const auto& mlp = model.mlp;
    const int hidden_layers = mlp.layer_count() - 1;
    const int hidden_width = hidden_layers > 0 ? mlp.layer_output(0) : 1;
    detail::put<std::uint32_t>(out, mlp.input_dim());
    detail::put<std::uint32_t>(out, hidden_width);
    detail::put<std::uint32_t>(out, hidden_layers);
    detail::put<std::uint32_t>(out, mlp.output_dim());
    detail::put<std::uint64_t>(out, mlp.params().size());
    out.write(reinterpret_cast<const char*>(mlp.params().data()),
              static_cast<std::streamsize>(mlp.params().size() * sizeof(float)));

    detail::put_grid(out, model.density);
    detail::put_grid(out, model.diffuse);
    detail::put_grid(out, model.tint);
    detail::put_grid(out, model.bottleneck);
    detail::put_grid(out, model.roughness);
    detail::put_grid(out, model.normal);
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

inline SceneModel<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RVCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path.string());
    const auto version = detail::take<std::uint32_t>(in);
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    SceneModel<float> model;
    model.density_shift = detail::take<float>(in);

    const auto n_levels = detail::take<std::uint32_t>(in);
    model.enc.levels.clear();
    for (std::uint32_t i = 0; i < n_levels; ++i)
        model.enc.levels.push_back(static_cast<int>(detail::take<std::uint32_t>(in)));
    model.enc.validate();

    const int input_dim = static_cast<int>(detail::take<std::uint32_t>(in));
    const int hidden_width = static_cast<int>(detail::take<std::uint32_t>(in));
    const int hidden_layers = static_cast<int>(detail::take<std::uint32_t>(in));
    const int output_dim = static_cast<int>(detail::take<std::uint32_t>(in));
    model.mlp = Mlp<float>(input_dim, hidden_width, hidden_layers, output_dim);
    const auto n_params = detail::take<std::uint64_t>(in);
    if (n_params != model.mlp.params().size())
        throw std::runtime_error("checkpoint: mlp parameter count mismatch");
    in.read(reinterpret_cast<char*>(model.mlp.params().data()),
            static_cast<std::streamsize>(n_params * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated mlp parameters");

    model.density = detail::take_grid(in);
    model.diffuse = detail::take_grid(in);
    model.tint = detail::take_grid(in);
    model.bottleneck = detail::take_grid(in);
    model.roughness = detail::take_grid(in);
    model.normal = detail::take_grid(in);
    return model;
}

}  // namespace rvox
