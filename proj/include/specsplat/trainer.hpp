#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "specsplat/image.hpp"
#include "specsplat/loss.hpp"
#include "specsplat/rasterizer.hpp"
#include "specsplat/rng.hpp"

// Optimization loop: photometric loss, coarse-to-fine resolution schedule,
// L1-accumulated densification (clone/split), pruning, opacity resets, and
// per-iteration logging. Single orchestration thread; the render and
// backward passes underneath are tile-parallel and deterministic, so a
// seeded run is bit-reproducible end to end.

namespace specsplat {

// Per-class learning rates. Position and network rates decay exponentially
// over the run; the position rate additionally scales with scene extent.
template <typename T>
struct LrTable {
    T position_init = T(1.6e-4);
    T position_final = T(1.6e-6);
    T rotation = T(1e-3);
    T log_scale = T(5e-3);
    T opacity = T(5e-2);
    T sh_dc = T(2.5e-3);
    T sh_rest = T(1.25e-4);
    T asg_feature = T(2.5e-3);
    T mlp_init = T(2e-3);
    T mlp_final = T(2e-4);
};

template <typename T>
struct TrainConfig {
    int total_iters = 7000;
    T lambda_dssim = T(0.2);
    int c2f_tau = 5000;  // iteration at which the schedule reaches full resolution
    bool c2f_enabled = true;
    T tau_g = T(0.0002);  // densify threshold on the normalized L1 accumulator
    int densify_interval = 100;
    int densify_start = 500;
    int densify_stop = -1;  // resolved to 0.75 * total_iters when negative
    bool densify_enabled = true;
    int opacity_reset_interval = 3000;
    T prune_opacity = T(0.005);
    T split_scale_fraction = T(0.01);  // of scene extent; larger flagged Gaussians split
    T prune_radius_fraction = T(0.3);  // of max(W, H); armed after the first opacity reset
    int holdout_psnr_interval = 200;
    Vec3<T> background{};
    LrTable<T> lr;
    std::uint32_t seed = 0;

    int resolved_densify_stop() const {
        return densify_stop < 0 ? (3 * total_iters) / 4 : densify_stop;
    }
    void validate() const {
        if (!(lambda_dssim > T(0)) || !(lambda_dssim < T(1)))
            throw std::invalid_argument("train config: lambda_dssim must lie in (0, 1)");
        if (!(tau_g > T(0))) throw std::invalid_argument("train config: tau_g must be positive");
        if (c2f_tau > total_iters)
            throw std::invalid_argument(
                "train config: resolution threshold iteration exceeds total iterations");
        if (densify_interval < 1 || opacity_reset_interval < 1)
            throw std::invalid_argument("train config: intervals must be >= 1");
    }
};

// Linear ramp from r_s to r_e over the first tau iterations, rounded
// half-up, clamped at full resolution. Applied per image axis.
inline int resolution_schedule(int i, int r_s, int r_e, int tau) {
    if (tau <= 0 || i >= tau) return r_e;
    const double r = double(r_s) + (double(r_e) - double(r_s)) * double(i) / double(tau);
    return std::min(int(std::floor(r + 0.5)), r_e);
}

template <typename T>
T expon_lr(T lr_init, T lr_final, double t) {
    t = std::clamp(t, 0.0, 1.0);
    return T(std::exp((1.0 - t) * std::log(double(lr_init)) + t * std::log(double(lr_final))));
}

// Densification bookkeeping between events. Accumulated in double so the
// triangle inequality between the L1 and signed sums survives rounding.
// The positional gradient steers clone offsets; the peak screen radius
// (as a fraction of the long image side) feeds the oversize prune.
struct DensifyStats {
    std::vector<double> l1_accum;
    std::vector<Vec2<double>> signed_accum;
    std::vector<std::int32_t> touch_count;
    std::vector<Vec3<double>> pos_grad_accum;
    std::vector<double> max_radius_frac;

    std::size_t size() const { return l1_accum.size(); }
    void reset(std::size_t n) {
        l1_accum.assign(n, 0.0);
        signed_accum.assign(n, Vec2<double>{});
        touch_count.assign(n, 0);
        pos_grad_accum.assign(n, Vec3<double>{});
        max_radius_frac.assign(n, 0.0);
    }
};

template <typename T>
void accumulate_densify_stats(DensifyStats& stats, const GradBuffers<T>& grads) {
    const std::size_t n = grads.densify_l1.size();
    if (stats.size() != n)
        throw std::invalid_argument("densify stats: size mismatch with gradient buffers");
    for (std::size_t i = 0; i < n; ++i) {
        if (!grads.touched[i]) continue;
        stats.l1_accum[i] += double(grads.densify_l1[i]);
        stats.signed_accum[i] +=
            Vec2<double>{double(grads.densify_signed[i].x), double(grads.densify_signed[i].y)};
        stats.touch_count[i] += 1;
        stats.pos_grad_accum[i] += Vec3<double>{double(grads.position[i].x),
                                                double(grads.position[i].y),
                                                double(grads.position[i].z)};
        const double nrm = std::hypot(stats.signed_accum[i].x, stats.signed_accum[i].y);
        if (stats.l1_accum[i] < nrm)
            throw std::logic_error("densify stats: L1 accumulator fell below the signed norm");
    }
}

template <typename T>
void track_screen_radii(DensifyStats& stats, const std::vector<Splat2D<T>>& splats, int width,
                        int height) {
    const double denom = double(std::max(width, height));
    for (std::size_t i = 0; i < splats.size(); ++i) {
        if (splats[i].culled) continue;
        stats.max_radius_frac[i] =
            std::max(stats.max_radius_frac[i], double(splats[i].screen_radius) / denom);
    }
}

struct DensifyReport {
    std::size_t cloned = 0, split = 0, pruned = 0;
    // Per surviving/new Gaussian: index into the pre-event array whose
    // optimizer moments it inherits, or -1 for a fresh entry.
    std::vector<std::int32_t> source;
};

// Growth-and-cleanup pass. Gaussians whose mean accumulated L1 screen
// gradient exceeds tau_g are densified: small ones are cloned (the copy
// nudged along the accumulated positional gradient), large ones are
// replaced by two children sampled from the parent with scales shrunk by
// 1.6. Gaussians with opacity below prune_opacity, or (once armed) a peak
// screen radius above the cap, are removed. Stats reset to the new size.
template <typename T>
DensifyReport densify_and_prune(std::vector<Gaussian<T>>& gaussians, DensifyStats& stats,
                                const TrainConfig<T>& cfg, T scene_extent,
                                bool radius_prune_armed, bool growth_enabled, Rng& rng) {
    const std::size_t n = gaussians.size();
    if (stats.size() != n) throw std::invalid_argument("densify: stats size mismatch");

    DensifyReport rep;
    std::vector<Gaussian<T>> out;
    std::vector<Gaussian<T>> born;
    out.reserve(n);
    rep.source.reserve(n);

    const T split_above = cfg.split_scale_fraction * scene_extent;
    const T shrink = T(std::log(1.6));
    for (std::size_t i = 0; i < n; ++i) {
        const Gaussian<T>& g = gaussians[i];
        bool prune = g.opacity() < cfg.prune_opacity;
        if (radius_prune_armed && stats.max_radius_frac[i] > double(cfg.prune_radius_fraction))
            prune = true;
        if (prune) {
            ++rep.pruned;
            continue;
        }

        const double mean_grad =
            stats.touch_count[i] > 0 ? stats.l1_accum[i] / stats.touch_count[i] : 0.0;
        const bool flagged = growth_enabled && mean_grad > double(cfg.tau_g);
        const T max_scale =
            std::exp(std::max({g.log_scale.x, g.log_scale.y, g.log_scale.z}));

        if (flagged && max_scale > split_above) {
            const Mat3<T> r = rotation_matrix(normalized(g.rotation));
            const Vec3<T> s{std::exp(g.log_scale.x), std::exp(g.log_scale.y),
                            std::exp(g.log_scale.z)};
            for (int k = 0; k < 2; ++k) {
                Gaussian<T> child = g;
                const Vec3<T> z{T(rng.normal()), T(rng.normal()), T(rng.normal())};
                child.position = g.position + r * cwise_mul(s, z);
                child.log_scale = g.log_scale - Vec3<T>{shrink, shrink, shrink};
                born.push_back(child);
            }
            ++rep.split;
            continue;
        }

        out.push_back(g);
        rep.source.push_back(std::int32_t(i));
        if (flagged) {
            Gaussian<T> copy = g;
            const Vec3<double>& pg = stats.pos_grad_accum[i];
            const double len = length(pg);
            if (len > 0) {
                // Nudge by half the mean axis stddev along the gradient so the
                // pair immediately covers both sides of the residual.
                const T step =
                    T(0.5) * std::exp((g.log_scale.x + g.log_scale.y + g.log_scale.z) / T(3));
                copy.position += (step / T(len)) * Vec3<T>{T(pg.x), T(pg.y), T(pg.z)};
            }
            born.push_back(copy);
            ++rep.cloned;
        }
    }

    for (auto& g : born) {
        out.push_back(g);
        rep.source.push_back(-1);
    }
    gaussians = std::move(out);
    stats.reset(gaussians.size());
    return rep;
}

// Adam over a strided view of the parameters (per-Gaussian fields are
// interleaved inside the Gaussian struct).
template <typename T, typename ParamAt, typename GradAt>
void adam_step_view(AdamState<T>& st, std::size_t n, T lr, const AdamConfig<T>& cfg,
                    ParamAt&& param_at, GradAt&& grad_at) {
    if (st.m.size() != n) throw std::invalid_argument("adam: state size mismatch");
    st.step_count += 1;
    const T bc1 = T(1) - std::pow(cfg.beta1, T(st.step_count));
    const T bc2 = T(1) - std::pow(cfg.beta2, T(st.step_count));
    for (std::size_t i = 0; i < n; ++i) {
        const T g = grad_at(i);
        st.m[i] = cfg.beta1 * st.m[i] + (T(1) - cfg.beta1) * g;
        st.v[i] = cfg.beta2 * st.v[i] + (T(1) - cfg.beta2) * g * g;
        param_at(i) -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + cfg.eps);
    }
}

template <typename T>
struct TrainView {
    Camera<T> cam;
    Image<T> image;
};

struct TrainLogRow {
    int iter = 0;
    double loss = 0;
    double psnr_holdout = std::numeric_limits<double>::quiet_NaN();  // NaN: not evaluated
    std::size_t num_gaussians = 0;
    int resolution = 0;  // rendered width this iteration
};

inline void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& rows) {
    os << "iter,loss,psnr_holdout,num_gaussians,resolution\n";
    for (const auto& r : rows) {
        os << r.iter << ',' << r.loss << ',';
        if (!std::isnan(r.psnr_holdout)) os << r.psnr_holdout;
        os << ',' << r.num_gaussians << ',' << r.resolution << '\n';
    }
}

// Point-cloud seeded scene: isotropic Gaussians sized by the mean squared
// distance to the three nearest neighbors, opacity 0.1, flat color, small
// random appearance features to break symmetry between splats.
template <typename T>
std::vector<Gaussian<T>> init_gaussians_from_points(const std::vector<Vec3<T>>& points,
                                                    std::uint32_t seed) {
    if (points.empty()) throw std::invalid_argument("scene init: empty point set");
    const std::size_t n = points.size();
    Rng rng(seed);
    const T opacity_logit = T(std::log(0.1 / 0.9));

    std::vector<Gaussian<T>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best[3] = {std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity()};
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const Vec3<T> d = points[j] - points[i];
            double d2 = double(dot(d, d));
            for (int k = 0; k < 3; ++k)
                if (d2 < best[k]) std::swap(d2, best[k]);
        }
        double mean_d2 = 0;
        int cnt = 0;
        for (double b : best)
            if (std::isfinite(b)) {
                mean_d2 += b;
                ++cnt;
            }
        mean_d2 = cnt > 0 ? mean_d2 / cnt : 0.01;
        mean_d2 = std::max(mean_d2, 1e-7);

        Gaussian<T>& g = out[i];
        g.position = points[i];
        const T ls = T(0.5 * std::log(mean_d2));
        g.log_scale = {ls, ls, ls};
        g.opacity_logit = opacity_logit;
        for (auto& f : g.asg_feature) f = T(rng.normal(0.0, 0.1));
    }
    return out;
}

// Scene extent: radius of the camera rig around its centroid (with a 10%
// margin), falling back to the seed point cloud for single-view fits.
template <typename T>
T scene_extent_from(const std::vector<Camera<T>>& cams, const std::vector<Vec3<T>>& points) {
    double best = 0;
    if (cams.size() >= 2) {
        Vec3<double> c{};
        for (const auto& cam : cams) {
            const Vec3<T> p = cam.center();
            c += Vec3<double>{double(p.x), double(p.y), double(p.z)};
        }
        c = (1.0 / double(cams.size())) * c;
        double r = 0;
        for (const auto& cam : cams) {
            const Vec3<T> p = cam.center();
            r = std::max(r, length(Vec3<double>{double(p.x) - c.x, double(p.y) - c.y,
                                                double(p.z) - c.z}));
        }
        best = 1.1 * r;
    }
    if (best <= 0 && points.size() >= 2) {
        Vec3<double> c{};
        for (const auto& p : points) c += Vec3<double>{double(p.x), double(p.y), double(p.z)};
        c = (1.0 / double(points.size())) * c;
        double r = 0;
        for (const auto& p : points)
            r = std::max(r, length(Vec3<double>{double(p.x) - c.x, double(p.y) - c.y,
                                                double(p.z) - c.z}));
        best = 1.1 * r;
    }
    return best > 0 ? T(best) : T(1);
}

template <typename T>
struct Trainer {
    std::vector<Gaussian<T>> gaussians;
    AppearanceModel<T> model;
    TrainConfig<T> config;
    T extent = T(1);
    DensifyStats stats;
    Rng rng;
    int iter = 0;  // completed iterations

    AdamState<T> opt_position, opt_rotation, opt_log_scale, opt_opacity;
    AdamState<T> opt_sh_dc, opt_sh_rest, opt_feature, opt_theta, opt_psi;
    AdamConfig<T> adam_cfg;

    Trainer(std::vector<Gaussian<T>> g, AppearanceModel<T> m, TrainConfig<T> cfg, T scene_extent)
        : gaussians(std::move(g)),
          model(std::move(m)),
          config(cfg),
          extent(scene_extent),
          rng(cfg.seed) {
        config.validate();
        model.validate();
        init_moments();
        stats.reset(gaussians.size());
    }

    // One optimizer step against one view at the scheduled resolution,
    // followed by the periodic densify / opacity-reset policy.
    T run_iteration(const TrainView<T>& view) {
        const int it = iter + 1;
        int rw = view.cam.width, rh = view.cam.height;
        if (config.c2f_enabled) {
            rw = resolution_schedule(iter, int(std::floor(view.cam.width / 4.0 + 0.5)),
                                     view.cam.width, config.c2f_tau);
            rh = resolution_schedule(iter, int(std::floor(view.cam.height / 4.0 + 0.5)),
                                     view.cam.height, config.c2f_tau);
        }
        last_resolution_ = rw;

        const Camera<T> rcam = view.cam.resized(rw, rh);
        const Image<T>* gt = &view.image;
        Image<T> scaled;
        if (rw != view.cam.width || rh != view.cam.height) {
            scaled = resample_area(view.image, rw, rh);
            gt = &scaled;
        }

        const FrameBuffer<T> fb = render(gaussians, model, rcam, config.background, &ctx_);
        const auto res =
            image_loss(fb.color, gt->pixels, rw, rh, config.lambda_dssim, &dimage_, loss_ws_);
        if (!std::isfinite(double(res.total)))
            throw std::runtime_error(
                "training diverged: non-finite loss at iteration " + std::to_string(it) + " (" +
                std::to_string(gaussians.size()) + " gaussians, resolution " +
                std::to_string(rw) + "x" + std::to_string(rh) + ")");

        render_backward(gaussians, model, ctx_, fb, dimage_, grads_);
        accumulate_densify_stats(stats, grads_);
        track_screen_radii(stats, ctx_.splats, rw, rh);
        apply_adam();

        if (it >= config.densify_start && it <= config.resolved_densify_stop() &&
            it % config.densify_interval == 0) {
            const auto rep = densify_and_prune(gaussians, stats, config, extent,
                                               radius_prune_armed_, config.densify_enabled, rng);
            remap_moments(rep.source);
        }
        if (it % config.opacity_reset_interval == 0 && it < config.total_iters)
            apply_opacity_reset();

        iter = it;
        return res.total;
    }

    std::vector<TrainLogRow> run(const std::vector<TrainView<T>>& views,
                                 const TrainView<T>* holdout = nullptr) {
        if (views.empty()) throw std::invalid_argument("train: no training views");
        std::vector<TrainLogRow> log;
        log.reserve(std::size_t(std::max(0, config.total_iters - iter)));
        while (iter < config.total_iters) {
            const std::size_t vi = pick_view(views.size());
            TrainLogRow row;
            row.loss = double(run_iteration(views[vi]));
            row.iter = iter;
            row.num_gaussians = gaussians.size();
            row.resolution = last_resolution_;
            if (holdout &&
                (iter % config.holdout_psnr_interval == 0 || iter == config.total_iters))
                row.psnr_holdout = holdout_psnr(*holdout);
            log.push_back(row);
        }
        return log;
    }

    double holdout_psnr(const TrainView<T>& holdout) {
        FrameBuffer<T> fb = render(gaussians, model, holdout.cam, config.background);
        for (auto& p : fb.color)
            for (int c = 0; c < 3; ++c) p[c] = std::clamp(p[c], T(0), T(1));
        return double(psnr(fb.color, holdout.image.pixels));
    }

    std::size_t pick_view(std::size_t num_views) {
        if (epoch_order_.size() != num_views) {
            epoch_order_.resize(num_views);
            for (std::size_t i = 0; i < num_views; ++i) epoch_order_[i] = i;
            epoch_pos_ = num_views;  // force a shuffle
        }
        if (epoch_pos_ >= epoch_order_.size()) {
            rng.shuffle(epoch_order_);
            epoch_pos_ = 0;
        }
        return epoch_order_[epoch_pos_++];
    }

    void apply_opacity_reset() {
        const T ceiling = T(0.01);
        for (auto& g : gaussians) {
            const T sigma = std::min(g.opacity(), ceiling);
            g.opacity_logit = std::log(sigma / (T(1) - sigma));
        }
        std::fill(opt_opacity.m.begin(), opt_opacity.m.end(), T(0));
        std::fill(opt_opacity.v.begin(), opt_opacity.v.end(), T(0));
        radius_prune_armed_ = true;
    }

    void init_moments() {
        const std::size_t n = gaussians.size();
        opt_position.init(3 * n);
        opt_rotation.init(4 * n);
        opt_log_scale.init(3 * n);
        opt_opacity.init(n);
        opt_sh_dc.init(3 * n);
        opt_sh_rest.init(3 * std::size_t(kShCoeffs - 1) * n);
        opt_feature.init(std::size_t(kAsgFeatureDim) * n);
        opt_theta.init(model.theta.param_count());
        opt_psi.init(model.psi.param_count());
    }

private:
    void apply_adam() {
        auto& gs = gaussians;
        const std::size_t n = gs.size();
        const double t = double(iter) / double(std::max(1, config.total_iters));
        const T lr_pos = expon_lr(config.lr.position_init * extent,
                                  config.lr.position_final * extent, t);
        const T lr_mlp = expon_lr(config.lr.mlp_init, config.lr.mlp_final, t);

        adam_step_view(
            opt_position, 3 * n, lr_pos, adam_cfg,
            [&](std::size_t k) -> T& { return gs[k / 3].position[k % 3]; },
            [&](std::size_t k) { return grads_.position[k / 3][k % 3]; });
        adam_step_view(
            opt_rotation, 4 * n, config.lr.rotation, adam_cfg,
            [&](std::size_t k) -> T& { return gs[k / 4].rotation[k % 4]; },
            [&](std::size_t k) { return grads_.rotation[k / 4][k % 4]; });
        adam_step_view(
            opt_log_scale, 3 * n, config.lr.log_scale, adam_cfg,
            [&](std::size_t k) -> T& { return gs[k / 3].log_scale[k % 3]; },
            [&](std::size_t k) { return grads_.log_scale[k / 3][k % 3]; });
        adam_step_view(
            opt_opacity, n, config.lr.opacity, adam_cfg,
            [&](std::size_t k) -> T& { return gs[k].opacity_logit; },
            [&](std::size_t k) { return grads_.opacity_logit[k]; });
        adam_step_view(
            opt_sh_dc, 3 * n, config.lr.sh_dc, adam_cfg,
            [&](std::size_t k) -> T& { return gs[k / 3].sh_coeffs[0][k % 3]; },
            [&](std::size_t k) { return grads_.sh[k / 3][0][k % 3]; });
        constexpr std::size_t rest = 3 * std::size_t(kShCoeffs - 1);
        adam_step_view(
            opt_sh_rest, rest * n, config.lr.sh_rest, adam_cfg,
            [&](std::size_t k) -> T& {
                return gs[k / rest].sh_coeffs[1 + (k % rest) / 3][k % 3];
            },
            [&](std::size_t k) { return grads_.sh[k / rest][1 + (k % rest) / 3][k % 3]; });
        adam_step_view(
            opt_feature, std::size_t(kAsgFeatureDim) * n, config.lr.asg_feature, adam_cfg,
            [&](std::size_t k) -> T& {
                return gs[k / kAsgFeatureDim].asg_feature[k % kAsgFeatureDim];
            },
            [&](std::size_t k) { return grads_.asg_feature[k / kAsgFeatureDim][k % kAsgFeatureDim]; });
        if (model.specular_enabled) {
            adam_step(opt_theta, model.theta.params.data(), grads_.theta_params.data(),
                      model.theta.param_count(), lr_mlp, adam_cfg);
            adam_step(opt_psi, model.psi.params.data(), grads_.psi_params.data(),
                      model.psi.param_count(), lr_mlp, adam_cfg);
        }
        for (auto& g : gs) g.rotation = normalized(g.rotation);
    }

    void remap_moments(const std::vector<std::int32_t>& source) {
        remap_one(opt_position, source, 3);
        remap_one(opt_rotation, source, 4);
        remap_one(opt_log_scale, source, 3);
        remap_one(opt_opacity, source, 1);
        remap_one(opt_sh_dc, source, 3);
        remap_one(opt_sh_rest, source, 3 * std::size_t(kShCoeffs - 1));
        remap_one(opt_feature, source, kAsgFeatureDim);
    }

    static void remap_one(AdamState<T>& st, const std::vector<std::int32_t>& source,
                          std::size_t width) {
        std::vector<T> m(source.size() * width, T(0)), v(source.size() * width, T(0));
        for (std::size_t o = 0; o < source.size(); ++o) {
            if (source[o] < 0) continue;
            const std::size_t s = std::size_t(source[o]) * width;
            std::copy_n(st.m.begin() + s, width, m.begin() + o * width);
            std::copy_n(st.v.begin() + s, width, v.begin() + o * width);
        }
        st.m = std::move(m);
        st.v = std::move(v);
    }

    RenderContext<T> ctx_;
    GradBuffers<T> grads_;
    LossWorkspace<T> loss_ws_;
    std::vector<Vec3<T>> dimage_;
    std::vector<std::size_t> epoch_order_;
    std::size_t epoch_pos_ = 0;
    bool radius_prune_armed_ = false;
    int last_resolution_ = 0;
};

}  // namespace specsplat
