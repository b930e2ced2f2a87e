#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace rvox {

template <class T>
struct Vec3 {
    T x{}, y{}, z{};

    T& operator[](std::size_t i) { return (&x)[i]; }
    const T& operator[](std::size_t i) const { return (&x)[i]; }

    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(T s) { x *= s; y *= s; z *= s; return *this; }

    friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend Vec3 operator*(Vec3 a, T s) { return a *= s; }
    friend Vec3 operator*(T s, Vec3 a) { return a *= s; }
    friend Vec3 operator/(Vec3 a, T s) { return a *= (T(1) / s); }
    friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
};

template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
T norm(const Vec3<T>& a) {
    return std::sqrt(dot(a, a));
}

template <class T>
Vec3<T> normalized(const Vec3<T>& a) {
    return a / norm(a);
}

template <class T>
Vec3<T> cwise_mul(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.x * b.x, a.y * b.y, a.z * b.z};
}

template <class T>
bool all_finite(const Vec3<T>& a) {
    return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Axis-aligned bounding box in world units; max must exceed min on every axis.
template <class T>
struct Aabb {
    Vec3<T> min{}, max{};

    Aabb() = default;
    Aabb(const Vec3<T>& mn, const Vec3<T>& mx) : min(mn), max(mx) {
        for (int k = 0; k < 3; ++k) {
            if (!(max[k] > min[k])) throw std::invalid_argument("Aabb: max must exceed min per axis");
        }
    }

    Vec3<T> extent() const { return max - min; }

    bool contains(const Vec3<T>& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
               p.z >= min.z && p.z <= max.z;
    }
};

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

}  // namespace rvox
