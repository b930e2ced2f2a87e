#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rvox/vec.hpp"

namespace rvox {

/// Dense C-channel voxel grid over a world-space box, with node-major /
/// channel-minor storage and a same-shape gradient accumulator.
///
/// Nodes sit at bbox.min + i * voxel on each axis, so dims[k] nodes span
/// the full box and interpolation needs dims[k] >= 2.
///
/// Thread safety: interpolation and spatial_gradient are pure and safe for
/// any number of concurrent readers. scatter_grad writes into grad without
/// synchronization; callers must either serialize backward passes per grid
/// or give each worker its own gradient buffer and reduce afterwards (the
/// trainer does the latter).
template <class T>
class VoxelGrid {
public:
    VoxelGrid() = default;

    VoxelGrid(std::array<int, 3> dims, int channels, const Aabb<T>& bbox)
        : dims_(dims), channels_(channels), bbox_(bbox) {
        for (int k = 0; k < 3; ++k) {
            if (dims_[k] < 2) throw std::invalid_argument("VoxelGrid: need >= 2 nodes per axis");
        }
        if (channels_ < 1) throw std::invalid_argument("VoxelGrid: need >= 1 channel");
        data_.assign(node_count() * static_cast<std::size_t>(channels_), T(0));
        grad_.assign(data_.size(), T(0));
    }

    const std::array<int, 3>& dims() const { return dims_; }
    int channels() const { return channels_; }
    const Aabb<T>& bbox() const { return bbox_; }

    std::size_t node_count() const {
        return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    }
    std::size_t size() const { return data_.size(); }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }
    std::vector<T>& grad() { return grad_; }
    const std::vector<T>& grad() const { return grad_; }

    void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }

    std::size_t index(int i, int j, int k, int c = 0) const {
        return ((static_cast<std::size_t>(i) * dims_[1] + j) * dims_[2] + k) * channels_ + c;
    }

    T& at(int i, int j, int k, int c = 0) { return data_[index(i, j, k, c)]; }
    const T& at(int i, int j, int k, int c = 0) const { return data_[index(i, j, k, c)]; }

    /// World size of one cell per axis.
    Vec3<T> voxel_size() const {
        Vec3<T> e = bbox_.extent();
        return {e.x / (dims_[0] - 1), e.y / (dims_[1] - 1), e.z / (dims_[2] - 1)};
    }

    /// World position of node (i, j, k).
    Vec3<T> node_position(int i, int j, int k) const {
        Vec3<T> v = voxel_size();
        return {bbox_.min.x + i * v.x, bbox_.min.y + j * v.y, bbox_.min.z + k * v.z};
    }

    /// Trilinear interpolation at world point p. Points outside the bbox
    /// yield the zero vector (free space). `out` must hold channels() values.
    bool interpolate(const Vec3<T>& p, std::span<T> out) const {
        if (!all_finite(p)) throw std::domain_error("VoxelGrid::interpolate: non-finite point");
        Cell cell;
        if (!locate(p, cell)) {
            std::fill(out.begin(), out.end(), T(0));
            return false;
        }
        std::fill(out.begin(), out.end(), T(0));
        for (int corner = 0; corner < 8; ++corner) {
            const T w = cell.weight(corner);
            const T* node = &data_[cell.base[corner]];
            for (int c = 0; c < channels_; ++c) out[c] += w * node[c];
        }
        return true;
    }

    /// Scatters upstream * trilinear weights into grad at the 8 corner
    /// nodes. Accumulates; outside-bbox points contribute nothing.
    void scatter_grad(const Vec3<T>& p, std::span<const T> upstream) {
        scatter_grad_into(p, upstream, grad_);
    }

    void scatter_grad_into(const Vec3<T>& p, std::span<const T> upstream,
                           std::vector<T>& grad_buf) const {
        if (!all_finite(p)) throw std::domain_error("VoxelGrid::scatter_grad: non-finite point");
        Cell cell;
        if (!locate(p, cell)) return;
        for (int corner = 0; corner < 8; ++corner) {
            const T w = cell.weight(corner);
            T* node = &grad_buf[cell.base[corner]];
            for (int c = 0; c < channels_; ++c) node[c] += w * upstream[c];
        }
    }

    /// d(interpolated value)/d(world position), row-major 3 x channels.
    /// The trilinear interpolant is differentiated analytically, so the
    /// result is piecewise constant per cell along the differentiated axis.
    /// Outside the bbox the matrix is zero.
    bool spatial_gradient(const Vec3<T>& p, std::span<T> out) const {
        if (!all_finite(p)) throw std::domain_error("VoxelGrid::spatial_gradient: non-finite point");
        std::fill(out.begin(), out.end(), T(0));
        Cell cell;
        if (!locate(p, cell)) return false;
        const Vec3<T> v = voxel_size();
        const T inv[3] = {T(1) / v.x, T(1) / v.y, T(1) / v.z};
        for (int corner = 0; corner < 8; ++corner) {
            const T* node = &data_[cell.base[corner]];
            for (int axis = 0; axis < 3; ++axis) {
                // derivative of the corner's weight w.r.t. the fractional
                // coordinate on `axis`, times world scale
                T dw = inv[axis];
                for (int a = 0; a < 3; ++a) {
                    const bool hi = (corner >> a) & 1;
                    if (a == axis) {
                        dw *= hi ? T(1) : T(-1);
                    } else {
                        dw *= hi ? cell.frac[a] : (T(1) - cell.frac[a]);
                    }
                }
                for (int c = 0; c < channels_; ++c) out[axis * channels_ + c] += dw * node[c];
            }
        }
        return true;
    }

    /// New grid over the same bbox whose node values are interpolants of
    /// this grid at the new node positions. Gradient starts at zero.
    VoxelGrid upsample(std::array<int, 3> new_dims) const {
        for (int k = 0; k < 3; ++k) {
            if (new_dims[k] < dims_[k])
                throw std::invalid_argument("VoxelGrid::upsample: dims may only grow");
        }
        VoxelGrid out(new_dims, channels_, bbox_);
        std::vector<T> vals(channels_);
        for (int i = 0; i < new_dims[0]; ++i)
            for (int j = 0; j < new_dims[1]; ++j)
                for (int k = 0; k < new_dims[2]; ++k) {
                    interpolate(out.node_position(i, j, k), vals);
                    for (int c = 0; c < channels_; ++c) out.at(i, j, k, c) = vals[c];
                }
        return out;
    }

    /// Mean over adjacent node pairs (6-neighborhood, each pair once) of
    /// squared value differences, summed over channels.
    T total_variation() const { return tv_impl(nullptr, T(0)); }

    /// total_variation value; also accumulates `weight` times its gradient
    /// into grad.
    T total_variation_backward(T weight) { return tv_impl(&grad_, weight); }

    std::size_t tv_pair_count() const {
        const std::size_t nx = dims_[0], ny = dims_[1], nz = dims_[2];
        return (nx - 1) * ny * nz + nx * (ny - 1) * nz + nx * ny * (nz - 1);
    }

private:
    struct Cell {
        std::size_t base[8];  // data index of each corner's channel 0
        T frac[3];

        T weight(int corner) const {
            T w = T(1);
            for (int a = 0; a < 3; ++a) w *= ((corner >> a) & 1) ? frac[a] : (T(1) - frac[a]);
            return w;
        }
    };

    bool locate(const Vec3<T>& p, Cell& cell) const {
        if (!bbox_.contains(p)) return false;
        int idx[3];
        for (int a = 0; a < 3; ++a) {
            const T u = (p[a] - bbox_.min[a]) / (bbox_.max[a] - bbox_.min[a]) * (dims_[a] - 1);
            int i = static_cast<int>(std::floor(u));
            i = std::clamp(i, 0, dims_[a] - 2);
            idx[a] = i;
            cell.frac[a] = u - i;
        }
        for (int corner = 0; corner < 8; ++corner) {
            cell.base[corner] = index(idx[0] + ((corner >> 0) & 1), idx[1] + ((corner >> 1) & 1),
                                      idx[2] + ((corner >> 2) & 1));
        }
        return true;
    }

    T tv_impl(std::vector<T>* grad_out, T weight) const {
        const T inv_pairs = T(1) / static_cast<T>(tv_pair_count());
        T acc = T(0);
        const std::size_t stride[3] = {static_cast<std::size_t>(dims_[1]) * dims_[2] * channels_,
                                       static_cast<std::size_t>(dims_[2]) * channels_,
                                       static_cast<std::size_t>(channels_)};
        for (int axis = 0; axis < 3; ++axis) {
            const int ni = dims_[0] - (axis == 0 ? 1 : 0);
            const int nj = dims_[1] - (axis == 1 ? 1 : 0);
            const int nk = dims_[2] - (axis == 2 ? 1 : 0);
            for (int i = 0; i < ni; ++i)
                for (int j = 0; j < nj; ++j)
                    for (int k = 0; k < nk; ++k) {
                        const std::size_t a = index(i, j, k);
                        const std::size_t b = a + stride[axis];
                        for (int c = 0; c < channels_; ++c) {
                            const T d = data_[a + c] - data_[b + c];
                            acc += d * d;
                            if (grad_out) {
                                const T g = T(2) * d * inv_pairs * weight;
                                (*grad_out)[a + c] += g;
                                (*grad_out)[b + c] -= g;
                            }
                        }
                    }
        }
        return acc * inv_pairs;
    }

    std::array<int, 3> dims_{0, 0, 0};
    int channels_ = 0;
    Aabb<T> bbox_{};
    std::vector<T> data_;
    std::vector<T> grad_;
};

}  // namespace rvox
