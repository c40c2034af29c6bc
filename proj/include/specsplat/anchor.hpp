#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "specsplat/appearance.hpp"
#include "specsplat/rasterizer.hpp"
#include "specsplat/rng.hpp"

// Anchor-based variant: a fixed voxel grid of anchors, each carrying a
// feature vector, a scaling factor, and k learnable offsets. Per view,
// prediction heads decode the anchor feature (conditioned on the
// camera-to-anchor distance and direction) into k neural Gaussians whose
// specular color runs through the shared lobe bank and decoder. Anchor
// positions are frozen after initialization; gradients reach the feature,
// the scaling factor, the offsets, and every head.

namespace specsplat {

inline constexpr int kAnchorFeatureDim = 32;
inline constexpr int kAnchorChildren = 10;
inline constexpr int kAnchorHeadInDim = kAnchorFeatureDim + 4;  // f, distance, direction

template <typename T>
struct AnchorGaussian {
    Vec3<T> position{};  // voxel center, fixed after init
    std::array<T, kAnchorFeatureDim> feature{};
    Vec3<T> scaling{};  // eta: offset stretch and base child scale
    std::array<Vec3<T>, kAnchorChildren> offsets{};
};

template <typename T>
struct NeuralGaussian {
    int child = 0;  // offset row that produced it
    Vec3<T> position{};
    Quat<T> rotation{};  // raw head output; consumers normalize
    Vec3<T> log_scale{};
    T opacity = T(0);  // tanh-activated, > 0 for spawned children
    Vec3<T> diffuse{};
};

template <typename T>
struct AnchorHeads {
    Mlp<T> opacity;    // head input -> k, tanh applied at spawn
    Mlp<T> rotation;   // head input -> 4k raw quaternions
    Mlp<T> scale;      // head input -> 3k log-scale deltas around log(eta)
    Mlp<T> diffuse;    // feature -> rgb, shared by an anchor's children
    Mlp<T> theta;      // [feature, child view dir] -> raw ASG params
};

template <typename T>
struct AnchorModel {
    AnchorHeads<T> heads;
    AsgBank<T> bank;
    Mlp<T> psi;

    int num_lobes() const { return bank.num_lobes(); }

    static AnchorModel make(int num_lobes, std::uint32_t seed) {
        AnchorModel m;
        m.bank = init_asg_axes<T>(num_lobes, seed);
        Rng rng(seed + 1);
        m.heads.opacity = Mlp<T>::make({kAnchorHeadInDim, 64, kAnchorChildren},
                                       {Activation::kRelu, Activation::kLinear}, rng);
        m.heads.rotation = Mlp<T>::make({kAnchorHeadInDim, 64, 4 * kAnchorChildren},
                                        {Activation::kRelu, Activation::kLinear}, rng);
        m.heads.scale = Mlp<T>::make({kAnchorHeadInDim, 64, 3 * kAnchorChildren},
                                     {Activation::kRelu, Activation::kLinear}, rng);
        m.heads.diffuse = Mlp<T>::make({kAnchorFeatureDim, 64, 3},
                                       {Activation::kRelu, Activation::kSigmoid}, rng);
        m.heads.theta = Mlp<T>::make({kAnchorFeatureDim + 3, 64, 64, num_lobes * 4},
                                     {Activation::kRelu, Activation::kRelu, Activation::kLinear},
                                     rng);
        m.psi = Mlp<T>::make({num_lobes * 2 + kPeDim + 1, 64, 64, 64, 3},
                             {Activation::kRelu, Activation::kRelu, Activation::kRelu,
                              Activation::kSigmoid},
                             rng);
        m.validate();
        return m;
    }

    void validate() const {
        const int n = num_lobes();
        if (heads.opacity.input_dim() != kAnchorHeadInDim ||
            heads.opacity.output_dim() != kAnchorChildren ||
            heads.rotation.output_dim() != 4 * kAnchorChildren ||
            heads.scale.output_dim() != 3 * kAnchorChildren)
            throw std::invalid_argument("anchor: attribute head shapes do not match k");
        if (heads.diffuse.input_dim() != kAnchorFeatureDim || heads.diffuse.output_dim() != 3)
            throw std::invalid_argument("anchor: diffuse head shape mismatch");
        if (heads.theta.input_dim() != kAnchorFeatureDim + 3 ||
            heads.theta.output_dim() != n * 4)
            throw std::invalid_argument("anchor: theta head does not match lobe bank");
        if (psi.input_dim() != n * 2 + kPeDim + 1 || psi.output_dim() != 3)
            throw std::invalid_argument("anchor: psi shape does not match lobe bank");
    }
};

// Snap points to voxel centers and keep the first occurrence per cell.
// Features start at zero, the scaling factor at the voxel size, and the
// offsets at small seeded noise so the children do not coincide.
template <typename T>
std::vector<AnchorGaussian<T>> voxelize_init(const std::vector<Vec3<T>>& points, T eps,
                                             std::uint32_t seed) {
    if (points.empty()) throw std::invalid_argument("voxelize: empty point set");
    if (!(eps > T(0))) throw std::invalid_argument("voxelize: voxel size must be positive");

    std::vector<AnchorGaussian<T>> out;
    std::map<std::array<long long, 3>, bool> seen;
    Rng rng(seed);
    for (const auto& p : points) {
        std::array<long long, 3> cell;
        for (int a = 0; a < 3; ++a)
            cell[std::size_t(a)] = (long long)std::floor(double(p[std::size_t(a)]) / double(eps) + 0.5);
        if (seen.count(cell)) continue;
        seen[cell] = true;

        AnchorGaussian<T> anchor;
        anchor.position = {T(cell[0] * double(eps)), T(cell[1] * double(eps)),
                           T(cell[2] * double(eps))};
        anchor.scaling = {eps, eps, eps};
        for (auto& o : anchor.offsets)
            o = {T(rng.normal(0.0, 0.3)), T(rng.normal(0.0, 0.3)), T(rng.normal(0.0, 0.3))};
        out.push_back(anchor);
    }
    return out;
}

template <typename T>
struct AnchorWorkspace {
    MlpWorkspace<T> opacity_ws, rotation_ws, scale_ws, diffuse_ws, theta_ws, psi_ws;
    std::vector<T> head_in, dhead_in;
    std::vector<T> sigma_raw, dsigma_raw;
    std::vector<T> rot_raw, drot_raw;
    std::vector<T> scale_raw, dscale_raw;
    std::vector<T> theta_raw, dtheta_raw;
    std::vector<T> theta_in, dtheta_in;
    std::vector<T> kappa, dkappa;
    std::vector<T> psi_in, dpsi_in;
    std::vector<T> enc;
    AsgParams<T> params, dparams;
};

// Head input layout: [feature, |camera - anchor|, unit direction camera->anchor].
template <typename T>
void anchor_head_input(const AnchorGaussian<T>& a, const Camera<T>& cam, std::vector<T>& in) {
    in.resize(kAnchorHeadInDim);
    for (int i = 0; i < kAnchorFeatureDim; ++i) in[std::size_t(i)] = a.feature[std::size_t(i)];
    const Vec3<T> rel = a.position - cam.center();
    const T dist = length(rel);
    in[kAnchorFeatureDim] = dist;
    const Vec3<T> dir = dist > T(0) ? rel / dist : Vec3<T>{T(0), T(0), T(1)};
    in[kAnchorFeatureDim + 1] = dir.x;
    in[kAnchorFeatureDim + 2] = dir.y;
    in[kAnchorFeatureDim + 3] = dir.z;
}

// Decode one anchor into its surviving children (opacity > 0). Positions
// are P + O_j * eta elementwise; child log scales ride on log(eta).
template <typename T>
std::vector<NeuralGaussian<T>> spawn_neural(const AnchorGaussian<T>& a, const Camera<T>& cam,
                                            const AnchorHeads<T>& heads,
                                            AnchorWorkspace<T>& ws) {
    anchor_head_input(a, cam, ws.head_in);
    ws.sigma_raw.resize(kAnchorChildren);
    ws.rot_raw.resize(4 * kAnchorChildren);
    ws.scale_raw.resize(3 * kAnchorChildren);
    heads.opacity.forward(ws.head_in.data(), ws.sigma_raw.data(), ws.opacity_ws);
    heads.rotation.forward(ws.head_in.data(), ws.rot_raw.data(), ws.rotation_ws);
    heads.scale.forward(ws.head_in.data(), ws.scale_raw.data(), ws.scale_ws);
    Vec3<T> c_d;
    heads.diffuse.forward(a.feature.data(), &c_d.x, ws.diffuse_ws);

    const Vec3<T> log_eta{std::log(a.scaling.x), std::log(a.scaling.y), std::log(a.scaling.z)};
    std::vector<NeuralGaussian<T>> out;
    for (int j = 0; j < kAnchorChildren; ++j) {
        const T sigma = std::tanh(ws.sigma_raw[std::size_t(j)]);
        if (!(sigma > T(0))) continue;
        NeuralGaussian<T> g;
        g.child = j;
        g.opacity = sigma;
        g.position = a.position + cwise_mul(a.offsets[std::size_t(j)], a.scaling);
        g.rotation = {ws.rot_raw[std::size_t(4 * j)], ws.rot_raw[std::size_t(4 * j + 1)],
                      ws.rot_raw[std::size_t(4 * j + 2)], ws.rot_raw[std::size_t(4 * j + 3)]};
        g.log_scale = log_eta + Vec3<T>{ws.scale_raw[std::size_t(3 * j)],
                                        ws.scale_raw[std::size_t(3 * j + 1)],
                                        ws.scale_raw[std::size_t(3 * j + 2)]};
        g.diffuse = c_d;
        out.push_back(g);
    }
    return out;
}

// Anchor visibility: center in front of the camera and projecting within a
// 30% margin around the image, so children near the border still spawn.
template <typename T>
bool anchor_in_frustum(const AnchorGaussian<T>& a, const Camera<T>& cam) {
    const Vec3<T> t = world_to_camera(cam, a.position);
    if (!(t.z > cam.near_plane) || !(t.z < cam.far_plane)) return false;
    const T px = cam.focal.x * t.x / t.z + cam.principal.x;
    const T py = cam.focal.y * t.y / t.z + cam.principal.y;
    const T mx = T(0.3) * T(cam.width), my = T(0.3) * T(cam.height);
    return px >= -mx && px <= T(cam.width) + mx && py >= -my && py <= T(cam.height) + my;
}

// Specular color of one neural Gaussian: ASG parameters decoded from the
// anchor feature and the child's view direction, evaluated at the per-child
// reflect direction, then mapped through the shared decoder.
template <typename T>
Vec3<T> neural_specular(const NeuralGaussian<T>& g,
                        const std::array<T, kAnchorFeatureDim>& feature,
                        const AnchorModel<T>& model, const Camera<T>& cam,
                        AnchorWorkspace<T>& ws) {
    const int n = model.num_lobes();
    const Vec3<T> d = normalized(g.position - cam.center());
    const Vec3<T> w_o = -d;

    Gaussian<T> shape;
    shape.rotation = g.rotation;
    shape.log_scale = g.log_scale;
    const Vec3<T> nrm = shortest_axis_normal(shape, w_o);
    const Vec3<T> w_r = reflect(w_o, nrm);

    ws.theta_in.resize(kAnchorFeatureDim + 3);
    for (int i = 0; i < kAnchorFeatureDim; ++i) ws.theta_in[std::size_t(i)] = feature[std::size_t(i)];
    ws.theta_in[kAnchorFeatureDim] = d.x;
    ws.theta_in[kAnchorFeatureDim + 1] = d.y;
    ws.theta_in[kAnchorFeatureDim + 2] = d.z;

    ws.theta_raw.resize(std::size_t(n) * 4);
    model.heads.theta.forward(ws.theta_in.data(), ws.theta_raw.data(), ws.theta_ws);
    if (ws.params.num_lobes() != n) ws.params = AsgParams<T>(n);
    for (int i = 0; i < n; ++i) {
        ws.params.sharpness_x[i] = softplus(ws.theta_raw[4 * i]) + T(kSharpnessFloor);
        ws.params.sharpness_y[i] = softplus(ws.theta_raw[4 * i + 1]) + T(kSharpnessFloor);
        ws.params.amplitude[i] = {ws.theta_raw[4 * i + 2], ws.theta_raw[4 * i + 3]};
    }
    eval_asg(w_r, model.bank, ws.params, ws.kappa);
    positional_encoding(d, kPeOrder, ws.enc);

    ws.psi_in.resize(std::size_t(n) * 2 + kPeDim + 1);
    for (int i = 0; i < n * 2; ++i) ws.psi_in[std::size_t(i)] = ws.kappa[std::size_t(i)];
    for (int i = 0; i < kPeDim; ++i)
        ws.psi_in[std::size_t(n) * 2 + std::size_t(i)] = ws.enc[std::size_t(i)];
    ws.psi_in.back() = dot(nrm, w_o);

    Vec3<T> c_s;
    model.psi.forward(ws.psi_in.data(), &c_s.x, ws.psi_ws);
    return c_s;
}

template <typename T>
struct AnchorRenderContext {
    Camera<T> cam;
    Vec3<T> background{};
    std::vector<std::uint32_t> anchor_of;  // per surviving child
    std::vector<NeuralGaussian<T>> children;
    std::vector<Sym3<T>> cov3d;
    std::vector<Splat2D<T>> splats;
    std::vector<Vec3<T>> colors;
    std::vector<T> opacities;
    TileGrid grid;
    std::vector<std::int32_t> last_contrib;
};

inline constexpr std::size_t kAnchorChunk = 64;

template <typename T>
FrameBuffer<T> render_anchor_scene(const std::vector<AnchorGaussian<T>>& anchors,
                                   const AnchorModel<T>& model, const Camera<T>& cam,
                                   Vec3<T> background, AnchorRenderContext<T>* ctx = nullptr) {
    AnchorRenderContext<T> local;
    AnchorRenderContext<T>& c = ctx ? *ctx : local;
    c.cam = cam;
    c.background = background;
    c.anchor_of.clear();
    c.children.clear();

    const std::size_t n = anchors.size();
    std::vector<std::vector<std::uint32_t>> chunk_anchor((n + kAnchorChunk - 1) / kAnchorChunk);
    std::vector<std::vector<NeuralGaussian<T>>> chunk_children(chunk_anchor.size());
    parallel_chunks(n, kAnchorChunk, [&](std::size_t chunk, std::size_t b, std::size_t e) {
        AnchorWorkspace<T> ws;
        for (std::size_t i = b; i < e; ++i) {
            if (!anchor_in_frustum(anchors[i], cam)) continue;
            for (auto& g : spawn_neural(anchors[i], cam, model.heads, ws)) {
                chunk_anchor[chunk].push_back(std::uint32_t(i));
                chunk_children[chunk].push_back(g);
            }
        }
    });
    for (std::size_t k = 0; k < chunk_children.size(); ++k) {
        c.anchor_of.insert(c.anchor_of.end(), chunk_anchor[k].begin(), chunk_anchor[k].end());
        c.children.insert(c.children.end(), chunk_children[k].begin(), chunk_children[k].end());
    }

    const std::size_t m = c.children.size();
    c.cov3d.assign(m, Sym3<T>{});
    c.splats.assign(m, Splat2D<T>{});
    c.colors.assign(m, Vec3<T>{});
    c.opacities.assign(m, T(0));
    parallel_chunks(m, kGaussChunk, [&](std::size_t, std::size_t b, std::size_t e) {
        AnchorWorkspace<T> ws;
        for (std::size_t i = b; i < e; ++i) {
            const NeuralGaussian<T>& g = c.children[i];
            Gaussian<T> tmp;
            tmp.position = g.position;
            tmp.rotation = g.rotation;
            tmp.log_scale = g.log_scale;
            // the projected support radius keys off the activated opacity
            tmp.opacity_logit = std::log(g.opacity / (T(1) - g.opacity));
            c.cov3d[i] = covariance3d(tmp.rotation, tmp.log_scale);
            c.splats[i] = project_gaussian(tmp, c.cov3d[i], cam);
            if (c.splats[i].culled) continue;
            c.opacities[i] = g.opacity;
            const Vec3<T> c_s =
                neural_specular(g, anchors[c.anchor_of[i]].feature, model, cam, ws);
            c.colors[i] = compose_color(g.diffuse, c_s);
        }
    });

    c.grid = cull_and_bin(c.splats, cam.width, cam.height);
    FrameBuffer<T> fb;
    blend_forward(c.grid, c.splats, c.colors, c.opacities, background, fb, c.last_contrib);
    return fb;
}

template <typename T>
struct AnchorGradBuffers {
    std::vector<std::array<T, kAnchorFeatureDim>> feature;
    std::vector<Vec3<T>> scaling;
    std::vector<std::array<Vec3<T>, kAnchorChildren>> offsets;
    std::vector<T> opacity_params, rotation_params, scale_params, diffuse_params;
    std::vector<T> theta_params, psi_params;

    void reset(std::size_t n, const AnchorModel<T>& model) {
        feature.assign(n, std::array<T, kAnchorFeatureDim>{});
        scaling.assign(n, Vec3<T>{});
        offsets.assign(n, std::array<Vec3<T>, kAnchorChildren>{});
        opacity_params.assign(model.heads.opacity.param_count(), T(0));
        rotation_params.assign(model.heads.rotation.param_count(), T(0));
        scale_params.assign(model.heads.scale.param_count(), T(0));
        diffuse_params.assign(model.heads.diffuse.param_count(), T(0));
        theta_params.assign(model.heads.theta.param_count(), T(0));
        psi_params.assign(model.psi.param_count(), T(0));
    }
};

// Backward through blending, projection, covariance, the specular chain,
// the spawn map, and every head. Anchor positions stay frozen. Per-chunk
// network partials are reduced in chunk order for determinism.
template <typename T>
void render_anchor_backward(const std::vector<AnchorGaussian<T>>& anchors,
                            const AnchorModel<T>& model, const AnchorRenderContext<T>& ctx,
                            const FrameBuffer<T>& fb, const std::vector<Vec3<T>>& dimage,
                            AnchorGradBuffers<T>& grads) {
    grads.reset(anchors.size(), model);

    SplatGrads<T> sg;
    blend_backward(ctx.grid, ctx.splats, ctx.colors, ctx.opacities, ctx.background, fb,
                   ctx.last_contrib, dimage, sg);

    const std::size_t m = ctx.children.size();
    // Children of one anchor are contiguous; find each anchor's run so the
    // anchor loop can recompute its heads once.
    std::vector<std::size_t> run_begin;
    std::vector<std::uint32_t> run_anchor;
    for (std::size_t i = 0; i < m; ++i)
        if (i == 0 || ctx.anchor_of[i] != ctx.anchor_of[i - 1]) {
            run_begin.push_back(i);
            run_anchor.push_back(ctx.anchor_of[i]);
        }
    run_begin.push_back(m);

    const std::size_t runs = run_anchor.size();
    const std::size_t num_chunks = runs == 0 ? 0 : (runs + kAnchorChunk - 1) / kAnchorChunk;
    struct Partial {
        std::vector<T> opacity, rotation, scale, diffuse, theta, psi;
    };
    std::vector<Partial> partial(num_chunks);

    parallel_chunks(runs, kAnchorChunk, [&](std::size_t chunk, std::size_t rb, std::size_t re) {
        AnchorWorkspace<T> ws;
        Partial& pp = partial[chunk];
        pp.opacity.assign(model.heads.opacity.param_count(), T(0));
        pp.rotation.assign(model.heads.rotation.param_count(), T(0));
        pp.scale.assign(model.heads.scale.param_count(), T(0));
        pp.diffuse.assign(model.heads.diffuse.param_count(), T(0));
        pp.theta.assign(model.heads.theta.param_count(), T(0));
        pp.psi.assign(model.psi.param_count(), T(0));

        for (std::size_t r = rb; r < re; ++r) {
            const std::uint32_t ai = run_anchor[r];
            const AnchorGaussian<T>& a = anchors[std::size_t(ai)];
            const int n = model.num_lobes();

            // Rebuild the head tapes for this anchor.
            anchor_head_input(a, ctx.cam, ws.head_in);
            ws.sigma_raw.resize(kAnchorChildren);
            ws.rot_raw.resize(4 * kAnchorChildren);
            ws.scale_raw.resize(3 * kAnchorChildren);
            model.heads.opacity.forward(ws.head_in.data(), ws.sigma_raw.data(), ws.opacity_ws);
            model.heads.rotation.forward(ws.head_in.data(), ws.rot_raw.data(), ws.rotation_ws);
            model.heads.scale.forward(ws.head_in.data(), ws.scale_raw.data(), ws.scale_ws);
            Vec3<T> c_d;
            model.heads.diffuse.forward(a.feature.data(), &c_d.x, ws.diffuse_ws);

            ws.dsigma_raw.assign(kAnchorChildren, T(0));
            ws.drot_raw.assign(4 * kAnchorChildren, T(0));
            ws.dscale_raw.assign(3 * kAnchorChildren, T(0));
            Vec3<T> dc_d_total{};
            auto& df = grads.feature[std::size_t(ai)];
            Vec3<T>& deta = grads.scaling[std::size_t(ai)];

            for (std::size_t i = run_begin[r]; i < run_begin[r + 1]; ++i) {
                if (!sg.touched[i]) continue;
                const NeuralGaussian<T>& g = ctx.children[i];
                const int j = g.child;

                // opacity: blend sigma -> tanh -> head output
                ws.dsigma_raw[std::size_t(j)] +=
                    sg.sigma[i] * (T(1) - g.opacity * g.opacity);

                // geometry: projection and covariance chains
                Vec3<T> dx{};
                Sym3<T> dcov{};
                project_gaussian_backward(g.position, ctx.cov3d[i], ctx.cam, sg.mean2d[i],
                                          sg.conic[i], dx, dcov);
                Quat<T> drot{T(0), T(0), T(0), T(0)};
                Vec3<T> dls{};
                covariance3d_backward(g.rotation, g.log_scale, dcov, drot, dls);

                // color: diffuse + specular decomposition
                const Vec3<T> rel = g.position - ctx.cam.center();
                const Vec3<T> d = normalized(rel);
                const Vec3<T> c_s = neural_specular(g, a.feature, model, ctx.cam, ws);
                const Vec3<T> dc = compose_color_backward(c_d, c_s, sg.color[i]);
                dc_d_total += dc;

                Vec3<T> dd{};
                {
                    const Vec3<T> w_o = -d;
                    Gaussian<T> shape;
                    shape.rotation = g.rotation;
                    shape.log_scale = g.log_scale;
                    int axis;
                    T sign;
                    shortest_axis_info(shape, w_o, axis, sign);
                    const Quat<T> qn = normalized(g.rotation);
                    const Vec3<T> nrm = sign * rotation_matrix(qn).col(std::size_t(axis));
                    const Vec3<T> w_r = reflect(w_o, nrm);

                    ws.dpsi_in.assign(ws.psi_in.size(), T(0));
                    const std::array<T, 3> dcs{dc.x, dc.y, dc.z};
                    model.psi.backward(dcs.data(), ws.dpsi_in.data(), pp.psi.data(), ws.psi_ws);

                    ws.dkappa.assign(std::size_t(n) * 2, T(0));
                    for (int q = 0; q < n * 2; ++q)
                        ws.dkappa[std::size_t(q)] = ws.dpsi_in[std::size_t(q)];
                    if (ws.dparams.num_lobes() != n) ws.dparams = AsgParams<T>(n);
                    for (int q = 0; q < n; ++q) {
                        ws.dparams.sharpness_x[q] = T(0);
                        ws.dparams.sharpness_y[q] = T(0);
                        ws.dparams.amplitude[q] = {T(0), T(0)};
                    }
                    Vec3<T> dw_r =
                        eval_asg_backward(w_r, model.bank, ws.params, ws.dkappa, ws.dparams);

                    dd += positional_encoding_backward(d, kPeOrder,
                                                       ws.dpsi_in.data() + std::size_t(n) * 2);

                    const T dnwo = ws.dpsi_in.back();
                    Vec3<T> dn = dnwo * w_o;
                    Vec3<T> dw_o = dnwo * nrm;
                    reflect_backward(w_o, nrm, dw_r, dw_o, dn);
                    dd -= dw_o;

                    Mat3<T> dr;
                    for (int row = 0; row < 3; ++row)
                        dr(std::size_t(row), std::size_t(axis)) = sign * dn[std::size_t(row)];
                    const Quat<T> dq =
                        quat_normalize_backward(g.rotation, rotation_matrix_backward(qn, dr));
                    drot.w += dq.w;
                    drot.x += dq.x;
                    drot.y += dq.y;
                    drot.z += dq.z;

                    // ASG params -> theta raw -> theta weights, feature, view dir
                    ws.dtheta_raw.assign(std::size_t(n) * 4, T(0));
                    for (int q = 0; q < n; ++q) {
                        ws.dtheta_raw[4 * q] =
                            ws.dparams.sharpness_x[q] * softplus_grad(ws.theta_raw[4 * q]);
                        ws.dtheta_raw[4 * q + 1] =
                            ws.dparams.sharpness_y[q] * softplus_grad(ws.theta_raw[4 * q + 1]);
                        ws.dtheta_raw[4 * q + 2] = ws.dparams.amplitude[q][0];
                        ws.dtheta_raw[4 * q + 3] = ws.dparams.amplitude[q][1];
                    }
                    ws.dtheta_in.assign(kAnchorFeatureDim + 3, T(0));
                    model.heads.theta.backward(ws.dtheta_raw.data(), ws.dtheta_in.data(),
                                               pp.theta.data(), ws.theta_ws);
                    for (int q = 0; q < kAnchorFeatureDim; ++q)
                        df[std::size_t(q)] += ws.dtheta_in[std::size_t(q)];
                    dd += Vec3<T>{ws.dtheta_in[kAnchorFeatureDim],
                                  ws.dtheta_in[kAnchorFeatureDim + 1],
                                  ws.dtheta_in[kAnchorFeatureDim + 2]};
                }
                dx += normalize_backward(rel, dd);

                // spawn map: x = P + O_j * eta, log scale = log(eta) + raw
                grads.offsets[std::size_t(ai)][std::size_t(j)] += cwise_mul(dx, a.scaling);
                deta += cwise_mul(dx, a.offsets[std::size_t(j)]);
                deta += Vec3<T>{dls.x / a.scaling.x, dls.y / a.scaling.y, dls.z / a.scaling.z};
                for (int q = 0; q < 3; ++q)
                    ws.dscale_raw[std::size_t(3 * j + q)] += dls[std::size_t(q)];
                for (int q = 0; q < 4; ++q)
                    ws.drot_raw[std::size_t(4 * j + q)] += drot[std::size_t(q)];
            }

            // attribute heads: shared tapes, one backward per anchor
            ws.dhead_in.assign(kAnchorHeadInDim, T(0));
            model.heads.opacity.backward(ws.dsigma_raw.data(), ws.dhead_in.data(),
                                         pp.opacity.data(), ws.opacity_ws);
            for (int q = 0; q < kAnchorFeatureDim; ++q)
                df[std::size_t(q)] += ws.dhead_in[std::size_t(q)];
            ws.dhead_in.assign(kAnchorHeadInDim, T(0));
            model.heads.rotation.backward(ws.drot_raw.data(), ws.dhead_in.data(),
                                          pp.rotation.data(), ws.rotation_ws);
            for (int q = 0; q < kAnchorFeatureDim; ++q)
                df[std::size_t(q)] += ws.dhead_in[std::size_t(q)];
            ws.dhead_in.assign(kAnchorHeadInDim, T(0));
            model.heads.scale.backward(ws.dscale_raw.data(), ws.dhead_in.data(),
                                       pp.scale.data(), ws.scale_ws);
            for (int q = 0; q < kAnchorFeatureDim; ++q)
                df[std::size_t(q)] += ws.dhead_in[std::size_t(q)];

            const std::array<T, 3> dcd{dc_d_total.x, dc_d_total.y, dc_d_total.z};
            std::array<T, kAnchorFeatureDim> dphi_in{};
            model.heads.diffuse.backward(dcd.data(), dphi_in.data(), pp.diffuse.data(),
                                         ws.diffuse_ws);
            for (int q = 0; q < kAnchorFeatureDim; ++q) df[std::size_t(q)] += dphi_in[std::size_t(q)];
        }
    });

    for (const auto& pp : partial) {
        if (pp.psi.empty()) continue;
        for (std::size_t i = 0; i < pp.opacity.size(); ++i) grads.opacity_params[i] += pp.opacity[i];
        for (std::size_t i = 0; i < pp.rotation.size(); ++i)
            grads.rotation_params[i] += pp.rotation[i];
        for (std::size_t i = 0; i < pp.scale.size(); ++i) grads.scale_params[i] += pp.scale[i];
        for (std::size_t i = 0; i < pp.diffuse.size(); ++i)
            grads.diffuse_params[i] += pp.diffuse[i];
        for (std::size_t i = 0; i < pp.theta.size(); ++i) grads.theta_params[i] += pp.theta[i];
        for (std::size_t i = 0; i < pp.psi.size(); ++i) grads.psi_params[i] += pp.psi[i];
    }
}

}  // namespace specsplat
