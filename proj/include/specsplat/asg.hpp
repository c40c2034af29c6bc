#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "specsplat/rng.hpp"
#include "specsplat/vec.hpp"

// Anisotropic spherical Gaussians: a bank of fixed orthonormal lobe frames
// shared by all splats, with per-splat sharpness/amplitude parameters
// predicted by a network. Each lobe maps a unit query direction to two
// feature channels:
//
//   value_i(v) = xi_i * max(v . z_i, 0) * exp(-lambda_i (v . x_i)^2
//                                             - mu_i    (v . y_i)^2)

namespace specsplat {

inline constexpr int kAsgLobes = 32;

template <typename T>
struct LobeFrame {
    Vec3<T> x;  // tangent
    Vec3<T> y;  // bi-tangent
    Vec3<T> z;  // lobe axis
};

template <typename T>
struct AsgBank {
    std::vector<LobeFrame<T>> lobes;

    int num_lobes() const { return int(lobes.size()); }
};

// Activated per-splat ASG parameters (lambda, mu strictly positive).
template <typename T>
struct AsgParams {
    std::vector<T> sharpness_x;            // lambda, one per lobe
    std::vector<T> sharpness_y;            // mu, one per lobe
    std::vector<std::array<T, 2>> amplitude;  // xi, two channels per lobe

    explicit AsgParams(int n = 0) : sharpness_x(n), sharpness_y(n), amplitude(n) {}
    int num_lobes() const { return int(sharpness_x.size()); }
};

template <typename T>
T softplus(T v) {
    // log(1 + e^v), stable for large |v|.
    if (v > T(20)) return v;
    if (v < T(-20)) return std::exp(v);
    return std::log1p(std::exp(v));
}

template <typename T>
T softplus_grad(T v) {
    if (v > T(20)) return T(1);
    if (v < T(-20)) return std::exp(v);
    const T e = std::exp(-v);
    return T(1) / (T(1) + e);
}

inline constexpr double kSharpnessFloor = 1e-4;

// Raw network output -> activated parameters. Layout per lobe:
// (lambda_raw, mu_raw, xi0, xi1). Sharpness uses softplus + floor so that
// lambda, mu > 0 always holds; amplitudes pass through.
template <typename T>
AsgParams<T> activate_asg_params(const std::vector<T>& raw, int num_lobes) {
    if (int(raw.size()) != num_lobes * 4)
        throw std::invalid_argument("activate_asg_params: raw size mismatch");
    AsgParams<T> p(num_lobes);
    for (int i = 0; i < num_lobes; ++i) {
        p.sharpness_x[i] = softplus(raw[4 * i]) + T(kSharpnessFloor);
        p.sharpness_y[i] = softplus(raw[4 * i + 1]) + T(kSharpnessFloor);
        p.amplitude[i] = {raw[4 * i + 2], raw[4 * i + 3]};
    }
    return p;
}

// Maps gradients w.r.t. activated params back to the raw layout.
template <typename T>
void activate_asg_params_backward(const std::vector<T>& raw, const AsgParams<T>& dparams,
                                  std::vector<T>& draw) {
    const int n = int(dparams.sharpness_x.size());
    draw.assign(raw.size(), T(0));
    for (int i = 0; i < n; ++i) {
        draw[4 * i] = dparams.sharpness_x[i] * softplus_grad(raw[4 * i]);
        draw[4 * i + 1] = dparams.sharpness_y[i] * softplus_grad(raw[4 * i + 1]);
        draw[4 * i + 2] = dparams.amplitude[i][0];
        draw[4 * i + 3] = dparams.amplitude[i][1];
    }
}

// Evaluates every lobe for a unit direction; out is num_lobes x 2, flattened
// lobe-major. This flattening is the latent feature fed to the decoder MLP.
template <typename T>
void eval_asg(Vec3<T> v, const AsgBank<T>& bank, const AsgParams<T>& params,
              std::vector<T>& out) {
    const int n = bank.num_lobes();
    out.resize(std::size_t(n) * 2);
    for (int i = 0; i < n; ++i) {
        const LobeFrame<T>& f = bank.lobes[std::size_t(i)];
        const T s = dot(v, f.z);
        if (s <= T(0)) {
            out[2 * i] = T(0);
            out[2 * i + 1] = T(0);
            continue;
        }
        const T a = dot(v, f.x);
        const T b = dot(v, f.y);
        const T e = std::exp(-params.sharpness_x[i] * a * a - params.sharpness_y[i] * b * b);
        out[2 * i] = params.amplitude[i][0] * s * e;
        out[2 * i + 1] = params.amplitude[i][1] * s * e;
    }
}

// Backward: accumulates dL/dparams into dparams (same shapes as params,
// zero-initialized by the caller) and returns dL/dv.
template <typename T>
Vec3<T> eval_asg_backward(Vec3<T> v, const AsgBank<T>& bank, const AsgParams<T>& params,
                          const std::vector<T>& dout, AsgParams<T>& dparams) {
    const int n = bank.num_lobes();
    Vec3<T> dv{};
    for (int i = 0; i < n; ++i) {
        const LobeFrame<T>& f = bank.lobes[std::size_t(i)];
        const T s = dot(v, f.z);
        if (s <= T(0)) continue;
        const T a = dot(v, f.x);
        const T b = dot(v, f.y);
        const T lam = params.sharpness_x[i];
        const T mu = params.sharpness_y[i];
        const T e = std::exp(-lam * a * a - mu * b * b);
        const T g0 = dout[2 * i], g1 = dout[2 * i + 1];
        const T xi0 = params.amplitude[i][0], xi1 = params.amplitude[i][1];
        const T gxi = g0 * xi0 + g1 * xi1;  // upstream through both channels

        dparams.amplitude[i][0] += g0 * s * e;
        dparams.amplitude[i][1] += g1 * s * e;
        dparams.sharpness_x[i] += gxi * s * e * (-a * a);
        dparams.sharpness_y[i] += gxi * s * e * (-b * b);

        // d(value)/dv = xi * [ z * e + s * e * (-2 lam a x - 2 mu b y) ]
        dv += gxi * e * f.z;
        dv += gxi * s * e * (T(-2) * lam * a) * f.x;
        dv += gxi * s * e * (T(-2) * mu * b) * f.y;
    }
    return dv;
}

// Mirror reflection of w_o about unit normal n: 2 (w_o . n) n - w_o.
template <typename T>
Vec3<T> reflect(Vec3<T> w_o, Vec3<T> n) {
    return T(2) * dot(w_o, n) * n - w_o;
}

// Backward of reflect; writes dL/dw_o and dL/dn.
template <typename T>
void reflect_backward(Vec3<T> w_o, Vec3<T> n, Vec3<T> dout, Vec3<T>& dw_o, Vec3<T>& dn) {
    const T won = dot(w_o, n);
    dw_o += T(2) * dot(dout, n) * n - dout;
    dn += T(2) * dot(dout, n) * w_o + T(2) * won * dout;
}

// Frequency encoding of a 3-vector: the raw input followed by
// [sin(2^k pi d), cos(2^k pi d)] for k = 0..order-1. Length 3 + 6*order.
template <typename T>
void positional_encoding(Vec3<T> d, int order, std::vector<T>& out) {
    out.resize(3 + std::size_t(order) * 6);
    out[0] = d.x;
    out[1] = d.y;
    out[2] = d.z;
    std::size_t at = 3;
    T freq = T(3.14159265358979323846);
    for (int k = 0; k < order; ++k, freq *= T(2)) {
        for (int c = 0; c < 3; ++c) out[at++] = std::sin(freq * d[c]);
        for (int c = 0; c < 3; ++c) out[at++] = std::cos(freq * d[c]);
    }
}

template <typename T>
Vec3<T> positional_encoding_backward(Vec3<T> d, int order, const T* dout) {
    Vec3<T> dd{dout[0], dout[1], dout[2]};
    std::size_t at = 3;
    T freq = T(3.14159265358979323846);
    for (int k = 0; k < order; ++k, freq *= T(2)) {
        for (int c = 0; c < 3; ++c) dd[c] += dout[at++] * freq * std::cos(freq * d[c]);
        for (int c = 0; c < 3; ++c) dd[c] -= dout[at++] * freq * std::sin(freq * d[c]);
    }
    return dd;
}

// Lobe axes from a Fibonacci spiral over the upper hemisphere (pole included,
// so a single lobe sits exactly at +z). The seed only spins the spiral about
// z. Tangent frames complete each axis by Gram-Schmidt against a fixed
// reference.
template <typename T>
AsgBank<T> init_asg_axes(int num_lobes, std::uint32_t seed) {
    if (num_lobes < 1) throw std::invalid_argument("init_asg_axes: num_lobes must be >= 1");
    constexpr double kGoldenAngle = 2.39996322972865332;
    Rng rng(seed);
    const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);

    AsgBank<T> bank;
    bank.lobes.resize(std::size_t(num_lobes));
    for (int i = 0; i < num_lobes; ++i) {
        const double zc = 1.0 - double(i) / double(num_lobes);  // (0, 1], pole first
        const double r = std::sqrt(std::max(0.0, 1.0 - zc * zc));
        const double phi = phase + kGoldenAngle * double(i);
        const Vec3<T> z{T(r * std::cos(phi)), T(r * std::sin(phi)), T(zc)};

        Vec3<T> ref{T(0), T(0), T(1)};
        if (std::abs(dot(ref, z)) > T(0.999)) ref = {T(1), T(0), T(0)};
        const Vec3<T> x = normalized(ref - dot(ref, z) * z);
        const Vec3<T> y = cross(z, x);
        bank.lobes[std::size_t(i)] = {x, y, z};
    }
    return bank;
}

}  // namespace specsplat
