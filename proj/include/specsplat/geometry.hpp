#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "specsplat/sh.hpp"
#include "specsplat/vec.hpp"

// Splat primitive, camera model, 3D covariance construction and its EWA
// projection to screen space, with analytic backward passes for all of it.

namespace specsplat {

inline constexpr int kAsgFeatureDim = 24;

// Screen-space low-pass: added to the projected covariance diagonal before
// inversion, in px^2. Keeps the 2x2 invertible for near-degenerate splats
// and band-limits sub-pixel splats.
inline constexpr double kCovDilation = 0.3;

template <typename T>
struct Gaussian {
    Vec3<T> position;                       // world units
    Quat<T> rotation;                       // unit quaternion
    Vec3<T> log_scale;                      // log of per-axis std-dev
    T opacity_logit{};                      // sigmoid -> opacity in (0,1)
    ShCoeffs<T> sh_coeffs{};                // degrees 0..3, per RGB channel
    std::array<T, kAsgFeatureDim> asg_feature{};

    Vec3<T> activated_scale() const {
        return {std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)};
    }
    T opacity() const { return sigmoid(opacity_logit); }
};

template <typename T>
struct Camera {
    Mat3<T> rotation = Mat3<T>::identity();  // world -> camera
    Vec3<T> translation{};
    Vec2<T> focal{T(1), T(1)};               // pixels
    Vec2<T> principal{};                      // pixels
    int width = 1, height = 1;
    T near_plane = T(0.01), far_plane = T(100);

    Vec3<T> center() const { return T(-1) * (transpose(rotation) * translation); }

    // Same pose, resized image plane; intrinsics scale with the resolution.
    Camera resized(int new_w, int new_h) const {
        Camera out = *this;
        const T sx = T(new_w) / T(width), sy = T(new_h) / T(height);
        out.focal = {focal.x * sx, focal.y * sy};
        out.principal = {principal.x * sx, principal.y * sy};
        out.width = new_w;
        out.height = new_h;
        return out;
    }

    void validate() const {
        const Mat3<T> should_be_i = rotation * transpose(rotation);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                const T want = r == c ? T(1) : T(0);
                if (std::abs(should_be_i(r, c) - want) > T(1e-5))
                    throw std::invalid_argument("camera rotation is not orthonormal");
            }
        if (std::abs(determinant(rotation) - T(1)) > T(1e-5))
            throw std::invalid_argument("camera rotation determinant is not +1");
        if (width < 1 || height < 1) throw std::invalid_argument("camera resolution < 1");
        if (!(near_plane < far_plane)) throw std::invalid_argument("camera near >= far");
    }
};

// Symmetric 3x3, upper-triangular storage.
template <typename T>
struct Sym3 {
    T xx{}, xy{}, xz{}, yy{}, yz{}, zz{};

    Mat3<T> to_mat() const {
        Mat3<T> m;
        m(0, 0) = xx; m(0, 1) = xy; m(0, 2) = xz;
        m(1, 0) = xy; m(1, 1) = yy; m(1, 2) = yz;
        m(2, 0) = xz; m(2, 1) = yz; m(2, 2) = zz;
        return m;
    }
    static Sym3 from_mat(const Mat3<T>& m) {
        return {m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)};
    }
};

template <typename T>
struct Splat2D {
    Vec2<T> mean2d{};       // pixels
    Vec3<T> conic{};        // inverse 2D covariance (a, b, c) for [[a,b],[b,c]]
    T depth{};              // camera-space z
    T screen_radius{};      // pixels, 3-sigma
    T bin_radius = T(-1);   // pixels; radius beyond which alpha < 1/255 everywhere
    bool culled = true;
};

template <typename T>
Vec3<T> world_to_camera(const Camera<T>& cam, Vec3<T> p) {
    return cam.rotation * p + cam.translation;
}

// Sigma = R S S^T R^T with S = diag(exp(log_scale)). Renormalizes a
// near-unit quaternion itself; rejects non-finite inputs.
template <typename T>
Sym3<T> covariance3d(Quat<T> rotation, Vec3<T> log_scale) {
    for (int i = 0; i < 4; ++i)
        if (!std::isfinite(rotation[i])) throw std::invalid_argument("covariance3d: non-finite rotation");
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(log_scale[i])) throw std::invalid_argument("covariance3d: non-finite scale");

    const Mat3<T> r = rotation_matrix(normalized(rotation));
    const Vec3<T> s{std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)};
    const Mat3<T> m = r * Mat3<T>::diagonal(s);
    return Sym3<T>::from_mat(m * transpose(m));
}

// Backward of covariance3d. dcov holds dL/d(stored entries): each
// off-diagonal entry's gradient already includes both symmetric positions.
template <typename T>
void covariance3d_backward(Quat<T> rotation, Vec3<T> log_scale, const Sym3<T>& dcov,
                           Quat<T>& drotation, Vec3<T>& dlog_scale) {
    // Full-matrix gradient: off-diagonals split across the two positions.
    Mat3<T> f;
    f(0, 0) = dcov.xx; f(1, 1) = dcov.yy; f(2, 2) = dcov.zz;
    f(0, 1) = f(1, 0) = dcov.xy / T(2);
    f(0, 2) = f(2, 0) = dcov.xz / T(2);
    f(1, 2) = f(2, 1) = dcov.yz / T(2);

    const Quat<T> qn = normalized(rotation);
    const Mat3<T> r = rotation_matrix(qn);
    const Vec3<T> s2{std::exp(T(2) * log_scale.x), std::exp(T(2) * log_scale.y),
                     std::exp(T(2) * log_scale.z)};

    // Sigma = R D R^T, D = diag(s^2):  dL/dR = 2 F R D,  dL/dD_kk = (R^T F R)_kk.
    const Mat3<T> dr = T(2) * (f * (r * Mat3<T>::diagonal(s2)));
    const Mat3<T> rtfr = transpose(r) * f * r;
    for (int k = 0; k < 3; ++k) dlog_scale[k] += rtfr(k, k) * T(2) * s2[k];

    const Quat<T> dqn = rotation_matrix_backward(qn, dr);
    const Quat<T> dq = quat_normalize_backward(rotation, dqn);
    drotation.w += dq.w; drotation.x += dq.x; drotation.y += dq.y; drotation.z += dq.z;
}

// Perspective Jacobian at camera-space point t (first-order local affine
// approximation at the mean): rows are d(pixel)/d(t).
// row0 = (fx/z, 0, -fx x / z^2), row1 = (0, fy/z, -fy y / z^2).
template <typename T>
std::array<Vec3<T>, 2> projection_jacobian(const Camera<T>& cam, Vec3<T> t) {
    const T inv_z = T(1) / t.z;
    return {Vec3<T>{cam.focal.x * inv_z, T(0), -cam.focal.x * t.x * inv_z * inv_z},
            Vec3<T>{T(0), cam.focal.y * inv_z, -cam.focal.y * t.y * inv_z * inv_z}};
}

// EWA projection of a 3D Gaussian to a screen-space splat. Culls on depth
// outside (near, far) and on a non-positive-definite dilated 2D covariance.
template <typename T>
Splat2D<T> project_gaussian(const Gaussian<T>& g, const Sym3<T>& cov, const Camera<T>& cam) {
    Splat2D<T> out;
    const Vec3<T> t = world_to_camera(cam, g.position);
    if (!(t.z > cam.near_plane && t.z < cam.far_plane)) return out;  // culled

    const auto j = projection_jacobian(cam, t);
    // A = J * W, rows of A = J rows through the camera rotation.
    const Vec3<T> a0{dot(j[0], cam.rotation.col(0)), dot(j[0], cam.rotation.col(1)),
                     dot(j[0], cam.rotation.col(2))};
    const Vec3<T> a1{dot(j[1], cam.rotation.col(0)), dot(j[1], cam.rotation.col(1)),
                     dot(j[1], cam.rotation.col(2))};

    const Mat3<T> sigma = cov.to_mat();
    const Vec3<T> sa0 = sigma * a0;
    const Vec3<T> sa1 = sigma * a1;
    T c00 = dot(a0, sa0) + T(kCovDilation);
    T c01 = dot(a0, sa1);
    T c11 = dot(a1, sa1) + T(kCovDilation);

    const T det = c00 * c11 - c01 * c01;
    if (!(det > T(0)) || !(c00 > T(0))) return out;  // culled

    out.conic = {c11 / det, -c01 / det, c00 / det};
    out.mean2d = {cam.focal.x * t.x / t.z + cam.principal.x,
                  cam.focal.y * t.y / t.z + cam.principal.y};
    out.depth = t.z;
    const T mid = (c00 + c11) / T(2);
    const T lambda_max = mid + std::sqrt(std::max(T(0), mid * mid - det));
    out.screen_radius = T(3) * std::sqrt(lambda_max);
    // Tile binning must reach every pixel that can pass the 1/255 alpha
    // cutoff: alpha = sigma exp(-q/2) with q >= dist^2 / lambda_max, so
    // alpha >= 1/255 implies dist^2 <= 2 lambda_max ln(255 sigma). Splats
    // with sigma <= 1/255 can never pass and bin nowhere.
    const T op = g.opacity();
    out.bin_radius = T(255) * op > T(1)
                         ? std::sqrt(T(2) * lambda_max * std::log(T(255) * op))
                         : T(-1);
    out.culled = false;
    return out;
}

// Backward of project_gaussian w.r.t. world position and the 3D covariance.
// dconic uses the same stored-entry convention as Sym3 gradients (the b
// component covers both off-diagonal positions). screen_radius and depth
// feed only discrete decisions (binning, sorting) and carry no gradient.
template <typename T>
void project_gaussian_backward(Vec3<T> position, const Sym3<T>& cov, const Camera<T>& cam,
                               Vec2<T> dmean2d, Vec3<T> dconic, Vec3<T>& dposition,
                               Sym3<T>& dcov) {
    const Vec3<T> t = world_to_camera(cam, position);
    const auto j = projection_jacobian(cam, t);
    const Vec3<T> a0{dot(j[0], cam.rotation.col(0)), dot(j[0], cam.rotation.col(1)),
                     dot(j[0], cam.rotation.col(2))};
    const Vec3<T> a1{dot(j[1], cam.rotation.col(0)), dot(j[1], cam.rotation.col(1)),
                     dot(j[1], cam.rotation.col(2))};

    const Mat3<T> sigma = cov.to_mat();
    const Vec3<T> sa0 = sigma * a0;
    const Vec3<T> sa1 = sigma * a1;
    const T c00 = dot(a0, sa0) + T(kCovDilation);
    const T c01 = dot(a0, sa1);
    const T c11 = dot(a1, sa1) + T(kCovDilation);
    const T det = c00 * c11 - c01 * c01;

    // Conic entries as explicit functions of (c00, c01, c11).
    const T q00 = c11 / det, q01 = -c01 / det, q11 = c00 / det;
    const T g00 = dconic.x, g01 = dconic.y, g11 = dconic.z;
    const T inv_det = T(1) / det;
    // d(det) factors: det = c00 c11 - c01^2.
    const T ddet = -(g00 * q00 + g01 * q01 + g11 * q11) * inv_det;
    T dc00 = g11 * inv_det + ddet * c11;
    T dc01 = -g01 * inv_det + ddet * T(-2) * c01;
    T dc11 = g00 * inv_det + ddet * c00;

    // c's are quadratic in the rows a0, a1 (dilation constant drops out).
    Vec3<T> da0 = T(2) * dc00 * sa0 + dc01 * sa1;
    Vec3<T> da1 = T(2) * dc11 * sa1 + dc01 * sa0;

    // dL/dSigma_full = a^T diag-ish a; accumulate stored-entry grads.
    // c00 = a0^T S a0, c01 = a0^T S a1, c11 = a1^T S a1.
    const Mat3<T> dsigma_full = dc00 * outer(a0, a0) +
                                dc01 * outer(a0, a1) +
                                dc11 * outer(a1, a1);
    dcov.xx += dsigma_full(0, 0);
    dcov.yy += dsigma_full(1, 1);
    dcov.zz += dsigma_full(2, 2);
    dcov.xy += dsigma_full(0, 1) + dsigma_full(1, 0);
    dcov.xz += dsigma_full(0, 2) + dsigma_full(2, 0);
    dcov.yz += dsigma_full(1, 2) + dsigma_full(2, 1);

    // Rows of A = rows of J through W: dJ rows = dA rows through W^T.
    const Vec3<T> dj0{dot(da0, cam.rotation.row(0)), dot(da0, cam.rotation.row(1)),
                      dot(da0, cam.rotation.row(2))};
    const Vec3<T> dj1{dot(da1, cam.rotation.row(0)), dot(da1, cam.rotation.row(1)),
                      dot(da1, cam.rotation.row(2))};

    // J entry derivatives w.r.t. the camera-space point.
    const T inv_z = T(1) / t.z, inv_z2 = inv_z * inv_z, inv_z3 = inv_z2 * inv_z;
    Vec3<T> dt{};
    dt.z += dj0.x * (-cam.focal.x * inv_z2);                 // d(fx/z)/dz
    dt.x += dj0.z * (-cam.focal.x * inv_z2);                 // d(-fx x/z^2)/dx
    dt.z += dj0.z * (T(2) * cam.focal.x * t.x * inv_z3);     // d(-fx x/z^2)/dz
    dt.z += dj1.y * (-cam.focal.y * inv_z2);
    dt.y += dj1.z * (-cam.focal.y * inv_z2);
    dt.z += dj1.z * (T(2) * cam.focal.y * t.y * inv_z3);

    // Pixel mean: u = fx x/z + cx, v = fy y/z + cy; d(mean)/dt is J itself.
    dt.x += dmean2d.x * j[0].x;
    dt.z += dmean2d.x * j[0].z;
    dt.y += dmean2d.y * j[1].y;
    dt.z += dmean2d.y * j[1].z;

    dposition += transpose(cam.rotation) * dt;
}

// Unit normal: the rotated basis axis with the smallest activated scale,
// flipped so it faces the camera (n . w_o >= 0). Scale ties resolve to the
// lowest axis index; the axis choice and sign are discrete, so only the
// rotation carries gradient through the normal.
template <typename T>
Vec3<T> shortest_axis_normal(const Gaussian<T>& g, Vec3<T> view_dir_to_camera) {
    const Vec3<T> s = g.activated_scale();
    int axis = 0;
    if (s.y < s[axis]) axis = 1;
    if (s.z < s[axis]) axis = 2;
    const Mat3<T> r = rotation_matrix(normalized(g.rotation));
    Vec3<T> n = r.col(std::size_t(axis));
    if (dot(n, view_dir_to_camera) < T(0)) n = -n;
    return n;
}

// Axis index and sign actually used, for backward passes.
template <typename T>
void shortest_axis_info(const Gaussian<T>& g, Vec3<T> view_dir_to_camera, int& axis, T& sign) {
    const Vec3<T> s = g.activated_scale();
    axis = 0;
    if (s.y < s[std::size_t(axis)]) axis = 1;
    if (s.z < s[std::size_t(axis)]) axis = 2;
    const Mat3<T> r = rotation_matrix(normalized(g.rotation));
    sign = dot(r.col(std::size_t(axis)), view_dir_to_camera) < T(0) ? T(-1) : T(1);
}

}  // namespace specsplat
