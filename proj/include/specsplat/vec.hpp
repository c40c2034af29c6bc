#pragma once

#include <array>
#include <cmath>
#include <cstddef>

// Minimal fixed-size vector/matrix math used throughout the engine.
// Templated on the scalar type: production code instantiates float,
// the finite-difference test harness instantiates double.

namespace specsplat {

template <typename T>
struct Vec2 {
    T x{}, y{};

    constexpr Vec2() = default;
    constexpr Vec2(T x_, T y_) : x(x_), y(y_) {}

    constexpr T& operator[](std::size_t i) { return i == 0 ? x : y; }
    constexpr const T& operator[](std::size_t i) const { return i == 0 ? x : y; }

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Vec2 operator*(T s, Vec2 v) { return {s * v.x, s * v.y}; }
    friend constexpr Vec2 operator*(Vec2 v, T s) { return {s * v.x, s * v.y}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
};

template <typename T>
struct Vec3 {
    T x{}, y{}, z{};

    constexpr Vec3() = default;
    constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

    constexpr T& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr const T& operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(T s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
    friend constexpr Vec3 operator*(Vec3 v, T s) { return {s * v.x, s * v.y, s * v.z}; }
    friend constexpr Vec3 operator/(Vec3 v, T s) { return {v.x / s, v.y / s, v.z / s}; }
    Vec3& operator+=(Vec3 o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(Vec3 o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(T s) { x *= s; y *= s; z *= s; return *this; }
};

template <typename T>
constexpr T dot(Vec2<T> a, Vec2<T> b) { return a.x * b.x + a.y * b.y; }

template <typename T>
constexpr T dot(Vec3<T> a, Vec3<T> b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

template <typename T>
constexpr Vec3<T> cross(Vec3<T> a, Vec3<T> b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
constexpr Vec3<T> cwise_mul(Vec3<T> a, Vec3<T> b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

template <typename T>
T length(Vec2<T> v) { return std::sqrt(dot(v, v)); }

template <typename T>
T length(Vec3<T> v) { return std::sqrt(dot(v, v)); }

template <typename T>
Vec3<T> normalized(Vec3<T> v) {
    const T len = length(v);
    return {v.x / len, v.y / len, v.z / len};
}

// Gradient of v/|v| applied to an upstream gradient g:
// d(normalize(v))/dv = (I - n n^T) / |v|.
template <typename T>
Vec3<T> normalize_backward(Vec3<T> v, Vec3<T> g) {
    const T len = length(v);
    const Vec3<T> n = v / len;
    return (g - dot(g, n) * n) / len;
}

// Unit quaternion (w, x, y, z).
template <typename T>
struct Quat {
    T w{1}, x{}, y{}, z{};

    constexpr Quat() = default;
    constexpr Quat(T w_, T x_, T y_, T z_) : w(w_), x(x_), y(y_), z(z_) {}

    constexpr T& operator[](std::size_t i) {
        return i == 0 ? w : (i == 1 ? x : (i == 2 ? y : z));
    }
    constexpr const T& operator[](std::size_t i) const {
        return i == 0 ? w : (i == 1 ? x : (i == 2 ? y : z));
    }
};

template <typename T>
T norm(Quat<T> q) { return std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z); }

template <typename T>
Quat<T> normalized(Quat<T> q) {
    const T n = norm(q);
    return {q.w / n, q.x / n, q.y / n, q.z / n};
}

// Row-major 3x3 matrix.
template <typename T>
struct Mat3 {
    std::array<T, 9> m{};  // m[r * 3 + c]

    constexpr T& operator()(std::size_t r, std::size_t c) { return m[r * 3 + c]; }
    constexpr const T& operator()(std::size_t r, std::size_t c) const { return m[r * 3 + c]; }

    static constexpr Mat3 identity() {
        Mat3 out;
        out.m = {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0), T(1)};
        return out;
    }
    static constexpr Mat3 diagonal(Vec3<T> d) {
        Mat3 out;
        out(0, 0) = d.x;
        out(1, 1) = d.y;
        out(2, 2) = d.z;
        return out;
    }

    constexpr Vec3<T> row(std::size_t r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
    constexpr Vec3<T> col(std::size_t c) const { return {m[c], m[3 + c], m[6 + c]}; }

    friend Mat3 operator*(const Mat3& a, const Mat3& b) {
        Mat3 out;
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c)
                out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
        return out;
    }
    friend Vec3<T> operator*(const Mat3& a, Vec3<T> v) {
        return {dot(a.row(0), v), dot(a.row(1), v), dot(a.row(2), v)};
    }
    friend Mat3 operator+(const Mat3& a, const Mat3& b) {
        Mat3 out;
        for (std::size_t i = 0; i < 9; ++i) out.m[i] = a.m[i] + b.m[i];
        return out;
    }
    friend Mat3 operator*(T s, const Mat3& a) {
        Mat3 out;
        for (std::size_t i = 0; i < 9; ++i) out.m[i] = s * a.m[i];
        return out;
    }
};

template <typename T>
Mat3<T> transpose(const Mat3<T>& a) {
    Mat3<T> out;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) out(r, c) = a(c, r);
    return out;
}

template <typename T>
T determinant(const Mat3<T>& a) {
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

template <typename T>
Mat3<T> outer(Vec3<T> a, Vec3<T> b) {
    Mat3<T> out;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) out(r, c) = a[r] * b[c];
    return out;
}

// Rotation matrix from a unit quaternion; column k is the rotated basis vector e_k.
template <typename T>
Mat3<T> rotation_matrix(Quat<T> q) {
    const T w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3<T> r;
    r(0, 0) = T(1) - T(2) * (y * y + z * z);
    r(0, 1) = T(2) * (x * y - w * z);
    r(0, 2) = T(2) * (x * z + w * y);
    r(1, 0) = T(2) * (x * y + w * z);
    r(1, 1) = T(1) - T(2) * (x * x + z * z);
    r(1, 2) = T(2) * (y * z - w * x);
    r(2, 0) = T(2) * (x * z - w * y);
    r(2, 1) = T(2) * (y * z + w * x);
    r(2, 2) = T(1) - T(2) * (x * x + y * y);
    return r;
}

// Chain rule through rotation_matrix: contracts dL/dR with dR/dq.
// Expects the quaternion that was actually used to build R (unit length).
template <typename T>
Quat<T> rotation_matrix_backward(Quat<T> q, const Mat3<T>& dr) {
    const T w = q.w, x = q.x, y = q.y, z = q.z;
    Quat<T> g;
    g.w = T(2) * (-z * dr(0, 1) + y * dr(0, 2) + z * dr(1, 0) - x * dr(1, 2) -
                  y * dr(2, 0) + x * dr(2, 1));
    g.x = T(2) * (y * dr(0, 1) + z * dr(0, 2) + y * dr(1, 0) - T(2) * x * dr(1, 1) -
                  w * dr(1, 2) + z * dr(2, 0) + w * dr(2, 1) - T(2) * x * dr(2, 2));
    g.y = T(2) * (-T(2) * y * dr(0, 0) + x * dr(0, 1) + w * dr(0, 2) + x * dr(1, 0) +
                  z * dr(1, 2) - w * dr(2, 0) + z * dr(2, 1) - T(2) * y * dr(2, 2));
    g.z = T(2) * (-T(2) * z * dr(0, 0) - w * dr(0, 1) + x * dr(0, 2) + w * dr(1, 0) -
                  T(2) * z * dr(1, 1) + y * dr(1, 2) + x * dr(2, 0) + y * dr(2, 1));
    return g;
}

// Gradient of q/|q| applied to an upstream gradient g (projection onto the
// tangent space of the unit sphere, scaled by 1/|q|).
template <typename T>
Quat<T> quat_normalize_backward(Quat<T> q, Quat<T> g) {
    const T n = norm(q);
    const Quat<T> u{q.w / n, q.x / n, q.y / n, q.z / n};
    const T d = g.w * u.w + g.x * u.x + g.y * u.y + g.z * u.z;
    return {(g.w - d * u.w) / n, (g.x - d * u.x) / n, (g.y - d * u.y) / n, (g.z - d * u.z) / n};
}

template <typename T>
T sigmoid(T v) {
    if (v >= T(0)) {
        const T e = std::exp(-v);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(v);
    return e / (T(1) + e);
}

template <typename T>
T logit(T p) { return std::log(p / (T(1) - p)); }

using Vec2f = Vec2<float>;
using Vec3f = Vec3<float>;
using Mat3f = Mat3<float>;
using Quatf = Quat<float>;

}  // namespace specsplat
