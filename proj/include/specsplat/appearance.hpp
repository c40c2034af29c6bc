#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "specsplat/asg.hpp"
#include "specsplat/geometry.hpp"
#include "specsplat/mlp.hpp"
#include "specsplat/sh.hpp"

// View-dependent color for one splat: SH diffuse plus a specular branch
// that decodes the splat feature through a parameter network (theta) into
// per-lobe ASG parameters, evaluates the lobe bank at the reflect
// direction, and maps the resulting latent plus encoded view direction
// through a decoder network (psi) to rgb.

namespace specsplat {

inline constexpr int kPeOrder = 2;
inline constexpr int kPeDim = 3 + 6 * kPeOrder;  // raw direction + sin/cos bands

template <typename T>
struct AppearanceModel {
    AsgBank<T> bank;
    Mlp<T> theta;  // feature (24) -> raw ASG params (4 per lobe)
    Mlp<T> psi;    // [asg latent (2N), encoded dir (15), n.w_o (1)] -> rgb
    bool specular_enabled = true;

    int num_lobes() const { return bank.num_lobes(); }

    static AppearanceModel make(int num_lobes, std::uint32_t seed) {
        AppearanceModel m;
        m.bank = init_asg_axes<T>(num_lobes, seed);
        Rng rng(seed + 1);
        m.theta = Mlp<T>::make({kAsgFeatureDim, 64, 64, num_lobes * 4},
                               {Activation::kRelu, Activation::kRelu, Activation::kLinear}, rng);
        m.psi = Mlp<T>::make({num_lobes * 2 + kPeDim + 1, 64, 64, 64, 3},
                             {Activation::kRelu, Activation::kRelu, Activation::kRelu,
                              Activation::kSigmoid},
                             rng);
        m.validate();
        return m;
    }

    void validate() const {
        const int n = num_lobes();
        if (theta.input_dim() != kAsgFeatureDim || theta.output_dim() != n * 4)
            throw std::invalid_argument("appearance: theta shape does not match lobe bank");
        if (psi.input_dim() != n * 2 + kPeDim + 1 || psi.output_dim() != 3)
            throw std::invalid_argument("appearance: psi shape does not match lobe bank");
    }
};

// Scratch reused across per-splat evaluations (one per worker).
template <typename T>
struct AppearanceWorkspace {
    MlpWorkspace<T> theta_ws, psi_ws;
    std::vector<T> theta_raw, dtheta_raw;
    std::vector<T> kappa, dkappa;
    std::vector<T> psi_in, dpsi_in;
    std::vector<T> enc;
    AsgParams<T> params, dparams;
};

// Specular color for one splat from one camera. The view direction d runs
// from the camera center to the splat mean; its negation w_o feeds the
// normal flip and the reflection.
template <typename T>
Vec3<T> specular_color(const Gaussian<T>& g, const AsgBank<T>& bank, const Mlp<T>& theta,
                       const Mlp<T>& psi, const Camera<T>& cam, AppearanceWorkspace<T>& ws) {
    const int n = bank.num_lobes();
    const Vec3<T> d = normalized(g.position - cam.center());
    const Vec3<T> w_o = -d;
    const Vec3<T> nrm = shortest_axis_normal(g, w_o);
    const Vec3<T> w_r = reflect(w_o, nrm);

    ws.theta_raw.resize(std::size_t(n) * 4);
    theta.forward(g.asg_feature.data(), ws.theta_raw.data(), ws.theta_ws);
    if (ws.params.num_lobes() != n) ws.params = AsgParams<T>(n);
    for (int i = 0; i < n; ++i) {
        ws.params.sharpness_x[i] = softplus(ws.theta_raw[4 * i]) + T(kSharpnessFloor);
        ws.params.sharpness_y[i] = softplus(ws.theta_raw[4 * i + 1]) + T(kSharpnessFloor);
        ws.params.amplitude[i] = {ws.theta_raw[4 * i + 2], ws.theta_raw[4 * i + 3]};
    }
    eval_asg(w_r, bank, ws.params, ws.kappa);
    positional_encoding(d, kPeOrder, ws.enc);

    ws.psi_in.resize(std::size_t(n) * 2 + kPeDim + 1);
    for (int i = 0; i < n * 2; ++i) ws.psi_in[std::size_t(i)] = ws.kappa[std::size_t(i)];
    for (int i = 0; i < kPeDim; ++i) ws.psi_in[std::size_t(n) * 2 + std::size_t(i)] = ws.enc[std::size_t(i)];
    ws.psi_in.back() = dot(nrm, w_o);

    Vec3<T> c_s;
    psi.forward(ws.psi_in.data(), &c_s.x, ws.psi_ws);
    return c_s;
}

// c = max(c_d + c_s, 0). The clamp never binds for this engine's inputs
// (both terms are non-negative) but keeps the op total.
template <typename T>
Vec3<T> compose_color(Vec3<T> c_d, Vec3<T> c_s) {
    Vec3<T> c = c_d + c_s;
    for (int k = 0; k < 3; ++k)
        if (c[k] < T(0)) c[k] = T(0);
    return c;
}

template <typename T>
Vec3<T> compose_color_backward(Vec3<T> c_d, Vec3<T> c_s, Vec3<T> dc) {
    const Vec3<T> pre = c_d + c_s;
    Vec3<T> g = dc;
    for (int k = 0; k < 3; ++k)
        if (pre[k] < T(0)) g[k] = T(0);
    return g;
}

// Full per-splat color, diffuse plus (optionally) specular.
template <typename T>
Vec3<T> gaussian_color(const Gaussian<T>& g, const AppearanceModel<T>& model,
                       const Camera<T>& cam, AppearanceWorkspace<T>& ws) {
    const Vec3<T> d = normalized(g.position - cam.center());
    const Vec3<T> c_d = eval_sh_diffuse(g.sh_coeffs, d);
    if (!model.specular_enabled) return compose_color(c_d, Vec3<T>{});
    const Vec3<T> c_s = specular_color(g, model.bank, model.theta, model.psi, cam, ws);
    return compose_color(c_d, c_s);
}

// Backward of gaussian_color. Re-runs the forward internally to rebuild the
// tapes, then accumulates into every reachable parameter: sh coefficients,
// the splat feature, position (through the view direction), rotation
// (through the normal), and both network weight buffers. The normal's axis
// pick and sign flip are discrete, so scale receives no appearance
// gradient.
template <typename T>
void gaussian_color_backward(const Gaussian<T>& g, const AppearanceModel<T>& model,
                             const Camera<T>& cam, Vec3<T> dcolor, AppearanceWorkspace<T>& ws,
                             Vec3<T>& dposition, Quat<T>& drotation, ShCoeffs<T>& dsh,
                             std::array<T, kAsgFeatureDim>& dasg_feature, T* dtheta_params,
                             T* dpsi_params) {
    const int n = model.num_lobes();
    const Vec3<T> rel = g.position - cam.center();
    const Vec3<T> d = normalized(rel);

    Vec3<T> c_d = eval_sh_diffuse(g.sh_coeffs, d);
    Vec3<T> c_s{};
    if (model.specular_enabled)
        c_s = specular_color(g, model.bank, model.theta, model.psi, cam, ws);
    const Vec3<T> dc = compose_color_backward(c_d, c_s, dcolor);

    Vec3<T> dd{};  // dL/dd through every path

    if (model.specular_enabled) {
        const Vec3<T> w_o = -d;
        int axis;
        T sign;
        shortest_axis_info(g, w_o, axis, sign);
        const Quat<T> qn = normalized(g.rotation);
        const Vec3<T> nrm = sign * rotation_matrix(qn).col(std::size_t(axis));
        const Vec3<T> w_r = reflect(w_o, nrm);

        // psi
        ws.dpsi_in.assign(ws.psi_in.size(), T(0));
        const std::array<T, 3> dcs{dc.x, dc.y, dc.z};
        model.psi.backward(dcs.data(), ws.dpsi_in.data(), dpsi_params, ws.psi_ws);

        // latent -> ASG
        ws.dkappa.assign(std::size_t(n) * 2, T(0));
        for (int i = 0; i < n * 2; ++i) ws.dkappa[std::size_t(i)] = ws.dpsi_in[std::size_t(i)];
        if (ws.dparams.num_lobes() != n) ws.dparams = AsgParams<T>(n);
        for (int i = 0; i < n; ++i) {
            ws.dparams.sharpness_x[i] = T(0);
            ws.dparams.sharpness_y[i] = T(0);
            ws.dparams.amplitude[i] = {T(0), T(0)};
        }
        Vec3<T> dw_r = eval_asg_backward(w_r, model.bank, ws.params, ws.dkappa, ws.dparams);

        // encoded view direction block
        dd += positional_encoding_backward(d, kPeOrder, ws.dpsi_in.data() + std::size_t(n) * 2);

        // n . w_o input
        const T dnwo = ws.dpsi_in.back();
        Vec3<T> dn = dnwo * w_o;
        Vec3<T> dw_o = dnwo * nrm;

        // reflection
        reflect_backward(w_o, nrm, dw_r, dw_o, dn);
        dd -= dw_o;

        // normal -> rotation (single matrix column scaled by the flip sign)
        Mat3<T> dr;
        for (int r = 0; r < 3; ++r) dr(std::size_t(r), std::size_t(axis)) = sign * dn[std::size_t(r)];
        const Quat<T> dq = quat_normalize_backward(g.rotation, rotation_matrix_backward(qn, dr));
        drotation.w += dq.w;
        drotation.x += dq.x;
        drotation.y += dq.y;
        drotation.z += dq.z;

        // ASG params -> theta raw outputs -> theta weights and feature
        ws.dtheta_raw.assign(std::size_t(n) * 4, T(0));
        for (int i = 0; i < n; ++i) {
            ws.dtheta_raw[4 * i] = ws.dparams.sharpness_x[i] * softplus_grad(ws.theta_raw[4 * i]);
            ws.dtheta_raw[4 * i + 1] =
                ws.dparams.sharpness_y[i] * softplus_grad(ws.theta_raw[4 * i + 1]);
            ws.dtheta_raw[4 * i + 2] = ws.dparams.amplitude[i][0];
            ws.dtheta_raw[4 * i + 3] = ws.dparams.amplitude[i][1];
        }
        model.theta.backward(ws.dtheta_raw.data(), dasg_feature.data(), dtheta_params, ws.theta_ws);
    }

    dd += eval_sh_diffuse_backward(g.sh_coeffs, d, dc, dsh);
    dposition += normalize_backward(rel, dd);
}

}  // namespace specsplat
