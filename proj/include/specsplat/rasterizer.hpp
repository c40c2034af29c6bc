#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "specsplat/appearance.hpp"
#include "specsplat/geometry.hpp"
#include "specsplat/threading.hpp"

// Tile-based forward alpha blending and the full backward pass to every
// splat and appearance parameter, plus a brute-force per-pixel reference
// renderer used as a correctness oracle in tests.
//
// Determinism: the tiled forward writes disjoint pixels per tile; the tiled
// backward accumulates into per-tile buffers merged in tile order, and the
// per-splat parameter chain reduces shared network gradients in fixed chunk
// order. Results are bit-identical for any worker count.

namespace specsplat {

inline constexpr int kTileSize = 16;
inline constexpr double kAlphaMin = 1.0 / 255.0;   // fragment skip threshold
inline constexpr double kTransmitMin = 1e-4;       // ray termination threshold

template <typename T>
struct FrameBuffer {
    int width = 0, height = 0;
    std::vector<Vec3<T>> color;
    std::vector<T> alpha;
    std::vector<T> final_t;

    void resize(int w, int h) {
        width = w;
        height = h;
        color.assign(std::size_t(w) * std::size_t(h), Vec3<T>{});
        alpha.assign(std::size_t(w) * std::size_t(h), T(0));
        final_t.assign(std::size_t(w) * std::size_t(h), T(1));
    }
    std::size_t index(int px, int py) const { return std::size_t(py) * std::size_t(width) + std::size_t(px); }
    Vec3<T>& at(int px, int py) { return color[index(px, py)]; }
    const Vec3<T>& at(int px, int py) const { return color[index(px, py)]; }
};

struct TileGrid {
    int width = 0, height = 0;
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> bins;  // per tile, sorted by (depth, index)

    int num_tiles() const { return tiles_x * tiles_y; }
};

// Exact disk/rectangle overlap (closed rectangle, closed disk).
template <typename T>
bool disk_intersects_rect(Vec2<T> c, T r, T x0, T y0, T x1, T y1) {
    const T cx = std::min(std::max(c.x, x0), x1);
    const T cy = std::min(std::max(c.y, y0), y1);
    const T dx = c.x - cx, dy = c.y - cy;
    return dx * dx + dy * dy <= r * r;
}

// Bins each splat into every tile its binning disk overlaps, then sorts
// each tile front to back with index tie-break.
template <typename T>
TileGrid cull_and_bin(const std::vector<Splat2D<T>>& splats, int width, int height) {
    TileGrid grid;
    grid.width = width;
    grid.height = height;
    grid.tiles_x = (width + kTileSize - 1) / kTileSize;
    grid.tiles_y = (height + kTileSize - 1) / kTileSize;
    grid.bins.assign(std::size_t(grid.num_tiles()), {});

    for (std::uint32_t i = 0; i < splats.size(); ++i) {
        const Splat2D<T>& s = splats[i];
        if (s.culled || s.bin_radius < T(0)) continue;
        const T r = s.bin_radius;
        int tx0 = int(std::floor((s.mean2d.x - r) / T(kTileSize)));
        int tx1 = int(std::floor((s.mean2d.x + r) / T(kTileSize)));
        int ty0 = int(std::floor((s.mean2d.y - r) / T(kTileSize)));
        int ty1 = int(std::floor((s.mean2d.y + r) / T(kTileSize)));
        tx0 = std::max(tx0, 0);
        ty0 = std::max(ty0, 0);
        tx1 = std::min(tx1, grid.tiles_x - 1);
        ty1 = std::min(ty1, grid.tiles_y - 1);
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) {
                const T x0 = T(tx * kTileSize);
                const T y0 = T(ty * kTileSize);
                const T x1 = T(std::min((tx + 1) * kTileSize, width));
                const T y1 = T(std::min((ty + 1) * kTileSize, height));
                if (disk_intersects_rect(s.mean2d, r, x0, y0, x1, y1))
                    grid.bins[std::size_t(ty * grid.tiles_x + tx)].push_back(i);
            }
    }

    parallel_chunks(grid.bins.size(), 8, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t t = b; t < e; ++t) {
            std::sort(grid.bins[t].begin(), grid.bins[t].end(),
                      [&](std::uint32_t a, std::uint32_t c) {
                          if (splats[a].depth != splats[c].depth)
                              return splats[a].depth < splats[c].depth;
                          return a < c;
                      });
        }
    });
    return grid;
}

// One splat sampled at one pixel center. Shared by the forward, backward,
// and reference paths so all three see bit-identical fragment values.
template <typename T>
struct Fragment {
    T dx, dy, gauss, alpha;
    bool pass;
};

template <typename T>
inline Fragment<T> eval_fragment(const Splat2D<T>& s, T sigma, T px, T py) {
    Fragment<T> f;
    f.dx = px - s.mean2d.x;
    f.dy = py - s.mean2d.y;
    const T power =
        T(-0.5) * (s.conic.x * f.dx * f.dx + s.conic.z * f.dy * f.dy) - s.conic.y * f.dx * f.dy;
    f.gauss = std::exp(power);
    f.alpha = sigma * f.gauss;
    f.pass = f.alpha >= T(kAlphaMin);
    return f;
}

// Front-to-back blending over the tile grid. last_contrib records, per
// pixel, one past the bin-list position of the last blended fragment; the
// backward pass re-walks exactly that prefix.
template <typename T>
void blend_forward(const TileGrid& grid, const std::vector<Splat2D<T>>& splats,
                   const std::vector<Vec3<T>>& colors, const std::vector<T>& opacities,
                   Vec3<T> background, FrameBuffer<T>& fb,
                   std::vector<std::int32_t>& last_contrib) {
    fb.resize(grid.width, grid.height);
    last_contrib.assign(std::size_t(grid.width) * std::size_t(grid.height), 0);

    parallel_chunks(std::size_t(grid.num_tiles()), 1, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t tile = b; tile < e; ++tile) {
            const int tx = int(tile) % grid.tiles_x, ty = int(tile) / grid.tiles_x;
            const int px0 = tx * kTileSize, px1 = std::min(px0 + kTileSize, grid.width);
            const int py0 = ty * kTileSize, py1 = std::min(py0 + kTileSize, grid.height);
            const auto& bin = grid.bins[tile];
            for (int py = py0; py < py1; ++py)
                for (int px = px0; px < px1; ++px) {
                    const T sx = T(px) + T(0.5), sy = T(py) + T(0.5);
                    T trans = T(1);
                    Vec3<T> accum{};
                    std::int32_t contrib = 0;
                    for (std::size_t k = 0; k < bin.size(); ++k) {
                        const std::uint32_t gi = bin[k];
                        const Fragment<T> f = eval_fragment(splats[gi], opacities[gi], sx, sy);
                        if (!f.pass) continue;
                        const T next_t = trans * (T(1) - f.alpha);
                        if (next_t < T(kTransmitMin)) break;  // fragment not blended
                        accum += (trans * f.alpha) * colors[gi];
                        trans = next_t;
                        contrib = std::int32_t(k) + 1;
                    }
                    const std::size_t pix = fb.index(px, py);
                    fb.color[pix] = accum + trans * background;
                    fb.final_t[pix] = trans;
                    fb.alpha[pix] = T(1) - trans;
                    last_contrib[pix] = contrib;
                }
        }
    });
}

// Screen-space gradients for one splat, accumulated over every pixel it
// blended into, plus the densification statistics gathered alongside.
template <typename T>
struct SplatGrads {
    std::vector<Vec2<T>> mean2d;
    std::vector<Vec3<T>> conic;
    std::vector<Vec3<T>> color;
    std::vector<T> sigma;
    std::vector<T> densify_l1;
    std::vector<Vec2<T>> densify_signed;
    std::vector<std::uint8_t> touched;

    void reset(std::size_t n) {
        mean2d.assign(n, Vec2<T>{});
        conic.assign(n, Vec3<T>{});
        color.assign(n, Vec3<T>{});
        sigma.assign(n, T(0));
        densify_l1.assign(n, T(0));
        densify_signed.assign(n, Vec2<T>{});
        touched.assign(n, 0);
    }
};

// Back-to-front re-walk of the blended prefix per pixel. For fragment i
// with transmittance T_i and suffix color S_i (everything blended behind
// it, background included):
//   dC/dc_i     = T_i alpha_i
//   dC/dalpha_i = T_i c_i - S_i / (1 - alpha_i)
// The walk recovers T_i from the stored final transmittance by dividing
// out (1 - alpha) fragment by fragment. Densify accumulators collect the
// per-pixel positional gradient in half-resolution steps (the NDC-to-pixel
// scale), keeping thresholds comparable across render resolutions.
template <typename T>
void blend_backward(const TileGrid& grid, const std::vector<Splat2D<T>>& splats,
                    const std::vector<Vec3<T>>& colors, const std::vector<T>& opacities,
                    Vec3<T> background, const FrameBuffer<T>& fb,
                    const std::vector<std::int32_t>& last_contrib,
                    const std::vector<Vec3<T>>& dimage, SplatGrads<T>& out) {
    out.reset(splats.size());
    const T ndc_x = T(0.5) * T(grid.width), ndc_y = T(0.5) * T(grid.height);

    struct Local {
        Vec2<T> mean2d{};
        Vec3<T> conic{};
        Vec3<T> color{};
        T sigma{};
        T l1{};
        Vec2<T> signed_{};
        std::uint8_t touched = 0;
    };
    std::vector<std::vector<Local>> tile_grads(std::size_t(grid.num_tiles()));

    parallel_chunks(std::size_t(grid.num_tiles()), 1, [&](std::size_t, std::size_t b, std::size_t e) {
        for (std::size_t tile = b; tile < e; ++tile) {
            const auto& bin = grid.bins[tile];
            if (bin.empty()) continue;
            auto& local = tile_grads[tile];
            local.assign(bin.size(), Local{});
            const int tx = int(tile) % grid.tiles_x, ty = int(tile) / grid.tiles_x;
            const int px0 = tx * kTileSize, px1 = std::min(px0 + kTileSize, grid.width);
            const int py0 = ty * kTileSize, py1 = std::min(py0 + kTileSize, grid.height);
            for (int py = py0; py < py1; ++py)
                for (int px = px0; px < px1; ++px) {
                    const std::size_t pix = fb.index(px, py);
                    const std::int32_t contrib = last_contrib[pix];
                    if (contrib == 0) continue;
                    const Vec3<T> dpix = dimage[pix];
                    const T sx = T(px) + T(0.5), sy = T(py) + T(0.5);
                    T t_run = fb.final_t[pix];
                    Vec3<T> suffix = t_run * background;
                    for (std::int32_t k = contrib - 1; k >= 0; --k) {
                        const std::uint32_t gi = bin[std::size_t(k)];
                        const Fragment<T> f = eval_fragment(splats[gi], opacities[gi], sx, sy);
                        if (!f.pass) continue;
                        const T t_i = t_run / (T(1) - f.alpha);
                        Local& lg = local[std::size_t(k)];

                        lg.color += (t_i * f.alpha) * dpix;
                        const Vec3<T> dcda = t_i * colors[gi] - suffix / (T(1) - f.alpha);
                        const T dalpha = dot(dpix, dcda);
                        lg.sigma += dalpha * f.gauss;

                        const T dpower = dalpha * f.alpha;
                        const Vec3<T>& q = splats[gi].conic;
                        lg.conic += dpower * Vec3<T>{T(-0.5) * f.dx * f.dx, -f.dx * f.dy,
                                                     T(-0.5) * f.dy * f.dy};
                        const T ddx = dpower * (-q.x * f.dx - q.y * f.dy);
                        const T ddy = dpower * (-q.z * f.dy - q.y * f.dx);
                        const Vec2<T> dmean{-ddx, -ddy};
                        lg.mean2d += dmean;
                        lg.l1 += std::abs(dmean.x) * ndc_x + std::abs(dmean.y) * ndc_y;
                        lg.signed_ += Vec2<T>{dmean.x * ndc_x, dmean.y * ndc_y};
                        lg.touched = 1;

                        suffix += (t_i * f.alpha) * colors[gi];
                        t_run = t_i;
                    }
                }
        }
    });

    for (std::size_t tile = 0; tile < tile_grads.size(); ++tile) {
        const auto& bin = grid.bins[tile];
        const auto& local = tile_grads[tile];
        for (std::size_t k = 0; k < local.size(); ++k) {
            const Local& lg = local[k];
            if (!lg.touched) continue;
            const std::uint32_t gi = bin[k];
            out.mean2d[gi] += lg.mean2d;
            out.conic[gi] += lg.conic;
            out.color[gi] += lg.color;
            out.sigma[gi] += lg.sigma;
            out.densify_l1[gi] += lg.l1;
            out.densify_signed[gi] += lg.signed_;
            out.touched[gi] = 1;
        }
    }
}

// Everything the backward pass needs from a forward render.
template <typename T>
struct RenderContext {
    Camera<T> cam;
    Vec3<T> background{};
    std::vector<Sym3<T>> cov3d;
    std::vector<Splat2D<T>> splats;
    std::vector<Vec3<T>> colors;
    std::vector<T> opacities;
    TileGrid grid;
    std::vector<std::int32_t> last_contrib;
};

inline constexpr std::size_t kGaussChunk = 512;

// Projects, shades, bins, and blends the scene. When ctx is non-null the
// intermediates are kept for render_backward.
template <typename T>
FrameBuffer<T> render(const std::vector<Gaussian<T>>& gaussians, const AppearanceModel<T>& model,
                      const Camera<T>& cam, Vec3<T> background, RenderContext<T>* ctx = nullptr) {
    const std::size_t n = gaussians.size();
    RenderContext<T> local_ctx;
    RenderContext<T>& c = ctx ? *ctx : local_ctx;
    c.cam = cam;
    c.background = background;
    c.cov3d.assign(n, Sym3<T>{});
    c.splats.assign(n, Splat2D<T>{});
    c.colors.assign(n, Vec3<T>{});
    c.opacities.assign(n, T(0));

    parallel_chunks(n, kGaussChunk, [&](std::size_t, std::size_t b, std::size_t e) {
        AppearanceWorkspace<T> ws;
        for (std::size_t i = b; i < e; ++i) {
            const Gaussian<T>& g = gaussians[i];
            const T sigma = g.opacity();
            if (!(sigma > T(0))) continue;  // prefilter; keeps splat culled
            c.cov3d[i] = covariance3d(g.rotation, g.log_scale);
            c.splats[i] = project_gaussian(g, c.cov3d[i], cam);
            if (c.splats[i].culled) continue;
            c.opacities[i] = sigma;
            c.colors[i] = gaussian_color(g, model, cam, ws);
        }
    });

    c.grid = cull_and_bin(c.splats, cam.width, cam.height);
    FrameBuffer<T> fb;
    blend_forward(c.grid, c.splats, c.colors, c.opacities, background, fb, c.last_contrib);
    return fb;
}

// Per-pixel oracle: every non-culled splat, globally sorted by depth with
// index tie-break, no tiling and no radius test; identical alpha and
// transmittance cutoffs.
template <typename T>
FrameBuffer<T> reference_render(const std::vector<Gaussian<T>>& gaussians,
                                const AppearanceModel<T>& model, const Camera<T>& cam,
                                Vec3<T> background) {
    const std::size_t n = gaussians.size();
    std::vector<Sym3<T>> cov(n);
    std::vector<Splat2D<T>> splats(n);
    std::vector<Vec3<T>> colors(n);
    std::vector<T> opacities(n, T(0));
    AppearanceWorkspace<T> ws;
    for (std::size_t i = 0; i < n; ++i) {
        const Gaussian<T>& g = gaussians[i];
        const T sigma = g.opacity();
        if (!(sigma > T(0))) continue;
        cov[i] = covariance3d(g.rotation, g.log_scale);
        splats[i] = project_gaussian(g, cov[i], cam);
        if (splats[i].culled) continue;
        opacities[i] = sigma;
        colors[i] = gaussian_color(g, model, cam, ws);
    }

    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i)
        if (!splats[i].culled) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return a < b;
    });

    FrameBuffer<T> fb;
    fb.resize(cam.width, cam.height);
    for (int py = 0; py < cam.height; ++py)
        for (int px = 0; px < cam.width; ++px) {
            const T sx = T(px) + T(0.5), sy = T(py) + T(0.5);
            T trans = T(1);
            Vec3<T> accum{};
            for (const std::uint32_t gi : order) {
                const Fragment<T> f = eval_fragment(splats[gi], opacities[gi], sx, sy);
                if (!f.pass) continue;
                const T next_t = trans * (T(1) - f.alpha);
                if (next_t < T(kTransmitMin)) break;
                accum += (trans * f.alpha) * colors[gi];
                trans = next_t;
            }
            const std::size_t pix = fb.index(px, py);
            fb.color[pix] = accum + trans * background;
            fb.final_t[pix] = trans;
            fb.alpha[pix] = T(1) - trans;
        }
    return fb;
}

// Gradients for every trainable quantity reachable from one rendered image.
template <typename T>
struct GradBuffers {
    std::vector<Vec3<T>> position;
    std::vector<Quat<T>> rotation;
    std::vector<Vec3<T>> log_scale;
    std::vector<T> opacity_logit;
    std::vector<ShCoeffs<T>> sh;
    std::vector<std::array<T, kAsgFeatureDim>> asg_feature;
    std::vector<T> theta_params, psi_params;
    std::vector<T> densify_l1;
    std::vector<Vec2<T>> densify_signed;
    std::vector<std::uint8_t> touched;

    void reset(std::size_t n, std::size_t theta_n, std::size_t psi_n) {
        position.assign(n, Vec3<T>{});
        rotation.assign(n, Quat<T>{T(0), T(0), T(0), T(0)});
        log_scale.assign(n, Vec3<T>{});
        opacity_logit.assign(n, T(0));
        sh.assign(n, ShCoeffs<T>{});
        asg_feature.assign(n, std::array<T, kAsgFeatureDim>{});
        theta_params.assign(theta_n, T(0));
        psi_params.assign(psi_n, T(0));
        densify_l1.assign(n, T(0));
        densify_signed.assign(n, Vec2<T>{});
        touched.assign(n, 0);
    }
};

// Full backward: blend gradients per tile, then the per-splat chain through
// projection, covariance, and appearance. Shared network gradients are
// reduced over fixed-size chunks in chunk order.
template <typename T>
void render_backward(const std::vector<Gaussian<T>>& gaussians, const AppearanceModel<T>& model,
                     const RenderContext<T>& ctx, const FrameBuffer<T>& fb,
                     const std::vector<Vec3<T>>& dimage, GradBuffers<T>& grads) {
    const std::size_t n = gaussians.size();
    grads.reset(n, model.theta.param_count(), model.psi.param_count());

    SplatGrads<T> sg;
    blend_backward(ctx.grid, ctx.splats, ctx.colors, ctx.opacities, ctx.background, fb,
                   ctx.last_contrib, dimage, sg);
    grads.densify_l1 = sg.densify_l1;
    grads.densify_signed = sg.densify_signed;
    grads.touched = sg.touched;

    const std::size_t num_chunks = n == 0 ? 0 : (n + kGaussChunk - 1) / kGaussChunk;
    std::vector<std::vector<T>> theta_partial(num_chunks), psi_partial(num_chunks);

    parallel_chunks(n, kGaussChunk, [&](std::size_t chunk, std::size_t b, std::size_t e) {
        AppearanceWorkspace<T> ws;
        std::vector<T>& tp = theta_partial[chunk];
        std::vector<T>& pp = psi_partial[chunk];
        for (std::size_t i = b; i < e; ++i) {
            if (!sg.touched[i]) continue;
            const Gaussian<T>& g = gaussians[i];

            const T sigma = ctx.opacities[i];
            grads.opacity_logit[i] += sg.sigma[i] * sigma * (T(1) - sigma);

            Sym3<T> dcov{};
            project_gaussian_backward(g.position, ctx.cov3d[i], ctx.cam, sg.mean2d[i],
                                      sg.conic[i], grads.position[i], dcov);
            covariance3d_backward(g.rotation, g.log_scale, dcov, grads.rotation[i],
                                  grads.log_scale[i]);

            if (model.specular_enabled && tp.empty()) {
                tp.assign(model.theta.param_count(), T(0));
                pp.assign(model.psi.param_count(), T(0));
            }
            gaussian_color_backward(g, model, ctx.cam, sg.color[i], ws, grads.position[i],
                                    grads.rotation[i], grads.sh[i], grads.asg_feature[i],
                                    tp.empty() ? nullptr : tp.data(),
                                    pp.empty() ? nullptr : pp.data());
        }
    });

    for (std::size_t c = 0; c < num_chunks; ++c) {
        for (std::size_t k = 0; k < theta_partial[c].size(); ++k)
            grads.theta_params[k] += theta_partial[c][k];
        for (std::size_t k = 0; k < psi_partial[c].size(); ++k)
            grads.psi_params[k] += psi_partial[c][k];
    }
}

}  // namespace specsplat
