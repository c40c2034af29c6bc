#pragma once

#include <array>

#include "specsplat/vec.hpp"

// Real spherical harmonics, degrees 0..3 (16 basis functions), in the
// graphics convention used by point-splatting renderers. Diffuse color is
// a per-channel dot product with the basis plus a 0.5 offset, clamped at 0.

namespace specsplat {

inline constexpr int kShCoeffs = 16;

namespace sh_const {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792,
                                  0.31539156525252005, -1.0925484305920792,
                                  0.5462742152960396};
inline constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,
                                  -0.4570457994644658, 0.3731763325901154,
                                  -0.4570457994644658, 1.445305721320277,
                                  -0.5900435899266435};
}  // namespace sh_const

// Basis values for a unit direction, ordered (l, m) = (0,0), (1,-1), (1,0),
// (1,1), (2,-2) ... (3,3).
template <typename T>
std::array<T, kShCoeffs> sh_basis(Vec3<T> d) {
    using namespace sh_const;
    const T x = d.x, y = d.y, z = d.z;
    const T xx = x * x, yy = y * y, zz = z * z;
    const T xy = x * y, yz = y * z, xz = x * z;

    std::array<T, kShCoeffs> b;
    b[0] = T(kC0);
    b[1] = T(-kC1) * y;
    b[2] = T(kC1) * z;
    b[3] = T(-kC1) * x;
    b[4] = T(kC2[0]) * xy;
    b[5] = T(kC2[1]) * yz;
    b[6] = T(kC2[2]) * (T(2) * zz - xx - yy);
    b[7] = T(kC2[3]) * xz;
    b[8] = T(kC2[4]) * (xx - yy);
    b[9] = T(kC3[0]) * y * (T(3) * xx - yy);
    b[10] = T(kC3[1]) * xy * z;
    b[11] = T(kC3[2]) * y * (T(4) * zz - xx - yy);
    b[12] = T(kC3[3]) * z * (T(2) * zz - T(3) * xx - T(3) * yy);
    b[13] = T(kC3[4]) * x * (T(4) * zz - xx - yy);
    b[14] = T(kC3[5]) * z * (xx - yy);
    b[15] = T(kC3[6]) * x * (xx - T(3) * yy);
    return b;
}

// d(basis)/d(direction), one 3-vector per basis function.
template <typename T>
std::array<Vec3<T>, kShCoeffs> sh_basis_grad(Vec3<T> d) {
    using namespace sh_const;
    const T x = d.x, y = d.y, z = d.z;
    const T xx = x * x, yy = y * y, zz = z * z;

    std::array<Vec3<T>, kShCoeffs> g;
    g[0] = {T(0), T(0), T(0)};
    g[1] = {T(0), T(-kC1), T(0)};
    g[2] = {T(0), T(0), T(kC1)};
    g[3] = {T(-kC1), T(0), T(0)};
    g[4] = {T(kC2[0]) * y, T(kC2[0]) * x, T(0)};
    g[5] = {T(0), T(kC2[1]) * z, T(kC2[1]) * y};
    g[6] = {T(kC2[2]) * T(-2) * x, T(kC2[2]) * T(-2) * y, T(kC2[2]) * T(4) * z};
    g[7] = {T(kC2[3]) * z, T(0), T(kC2[3]) * x};
    g[8] = {T(kC2[4]) * T(2) * x, T(kC2[4]) * T(-2) * y, T(0)};
    g[9] = {T(kC3[0]) * T(6) * x * y, T(kC3[0]) * (T(3) * xx - T(3) * yy), T(0)};
    g[10] = {T(kC3[1]) * y * z, T(kC3[1]) * x * z, T(kC3[1]) * x * y};
    g[11] = {T(kC3[2]) * T(-2) * x * y, T(kC3[2]) * (T(4) * zz - xx - T(3) * yy),
             T(kC3[2]) * T(8) * y * z};
    g[12] = {T(kC3[3]) * T(-6) * x * z, T(kC3[3]) * T(-6) * y * z,
             T(kC3[3]) * (T(6) * zz - T(3) * xx - T(3) * yy)};
    g[13] = {T(kC3[4]) * (T(4) * zz - T(3) * xx - yy), T(kC3[4]) * T(-2) * x * y,
             T(kC3[4]) * T(8) * x * z};
    g[14] = {T(kC3[5]) * T(2) * x * z, T(kC3[5]) * T(-2) * y * z, T(kC3[5]) * (xx - yy)};
    g[15] = {T(kC3[6]) * (T(3) * xx - T(3) * yy), T(kC3[6]) * T(-6) * x * y, T(0)};
    return g;
}

template <typename T>
using ShCoeffs = std::array<Vec3<T>, kShCoeffs>;  // coefficient-major, rgb inner

// Diffuse color: max(sum_lm coeffs_lm * Y_lm(dir) + 0.5, 0) per channel.
template <typename T>
Vec3<T> eval_sh_diffuse(const ShCoeffs<T>& coeffs, Vec3<T> dir) {
    const auto basis = sh_basis(dir);
    Vec3<T> c{T(0.5), T(0.5), T(0.5)};
    for (int i = 0; i < kShCoeffs; ++i) c += basis[i] * coeffs[i];
    for (int k = 0; k < 3; ++k)
        if (c[k] < T(0)) c[k] = T(0);
    return c;
}

// Backward for eval_sh_diffuse. Adds coefficient gradients into
// coeff_grad and returns dL/d(dir). The clamp gates both paths.
template <typename T>
Vec3<T> eval_sh_diffuse_backward(const ShCoeffs<T>& coeffs, Vec3<T> dir, Vec3<T> dc,
                                 ShCoeffs<T>& coeff_grad) {
    const auto basis = sh_basis(dir);
    Vec3<T> pre{T(0.5), T(0.5), T(0.5)};
    for (int i = 0; i < kShCoeffs; ++i) pre += basis[i] * coeffs[i];
    Vec3<T> gated = dc;
    for (int k = 0; k < 3; ++k)
        if (pre[k] < T(0)) gated[k] = T(0);

    const auto bgrad = sh_basis_grad(dir);
    Vec3<T> ddir{};
    for (int i = 0; i < kShCoeffs; ++i) {
        coeff_grad[i] += basis[i] * gated;
        ddir += dot(gated, coeffs[i]) * bgrad[i];
    }
    return ddir;
}

}  // namespace specsplat
