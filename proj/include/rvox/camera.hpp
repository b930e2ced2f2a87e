#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "rvox/vec.hpp"

namespace rvox {

/// Row-major 4x4 rigid transform (camera-to-world).
template <class T>
struct Mat4 {
    std::array<T, 16> m{};

    static Mat4 identity() {
        Mat4 r;
        r.m[0] = r.m[5] = r.m[10] = r.m[15] = T(1);
        return r;
    }

    T& operator()(int r, int c) { return m[4 * r + c]; }
    const T& operator()(int r, int c) const { return m[4 * r + c]; }

    Vec3<T> rotate(const Vec3<T>& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[4] * v.x + m[5] * v.y + m[6] * v.z,
                m[8] * v.x + m[9] * v.y + m[10] * v.z};
    }

    Vec3<T> translation() const { return {m[3], m[7], m[11]}; }

    bool rotation_orthonormal(T tol) const {
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                T d = T(0);
                for (int k = 0; k < 3; ++k) d += (*this)(k, a) * (*this)(k, b);
                if (std::abs(d - (a == b ? T(1) : T(0))) > tol) return false;
            }
        return true;
    }
};

template <class T>
struct Ray {
    Vec3<T> origin{};
    Vec3<T> direction{};  // unit
    T near = T(0);
    T far = T(0);
};

/// Pinhole camera in the NeRF-synthetic convention: x right, y up, camera
/// looks along its local -z axis; focal in pixels derived from
/// camera_angle_x.
template <class T>
struct Camera {
    int width = 0, height = 0;
    T focal = T(0);
    Mat4<T> pose = Mat4<T>::identity();  // camera-to-world

    static T focal_from_angle_x(int width, T camera_angle_x) {
        return T(0.5) * T(width) / std::tan(T(0.5) * camera_angle_x);
    }
};

/// One ray per requested pixel, through the pixel center, in world space.
template <class T>
std::vector<Ray<T>> generate_rays(const Camera<T>& cam, std::span<const std::array<int, 2>> pixels,
                                  T near, T far) {
    if (!cam.pose.rotation_orthonormal(T(1e-3)))
        throw std::invalid_argument("generate_rays: pose rotation not orthonormal");
    if (!(cam.focal > T(0))) throw std::invalid_argument("generate_rays: non-positive focal");
    std::vector<Ray<T>> rays;
    rays.reserve(pixels.size());
    const Vec3<T> origin = cam.pose.translation();
    for (const auto& px : pixels) {
        const T u = (T(px[0]) + T(0.5) - T(cam.width) * T(0.5)) / cam.focal;
        const T v = -(T(px[1]) + T(0.5) - T(cam.height) * T(0.5)) / cam.focal;
        Vec3<T> dir = cam.pose.rotate(Vec3<T>{u, v, T(-1)});
        rays.push_back(Ray<T>{origin, normalized(dir), near, far});
    }
    return rays;
}

template <class T>
Ray<T> pixel_ray(const Camera<T>& cam, int px, int py, T near, T far) {
    std::array<int, 2> p{px, py};
    return generate_rays(cam, std::span<const std::array<int, 2>>(&p, 1), near, far)[0];
}

}  // namespace rvox
