#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "specsplat/anchor.hpp"
#include "specsplat/trainer.hpp"

// Training loop for the anchor variant. The anchor grid is fixed: no
// densification, no pruning, no opacity resets. What trains is every
// anchor's feature, scaling, and offsets, plus the prediction heads and
// the shared decoder.

namespace specsplat {

template <typename T>
struct AnchorTrainer {
    std::vector<AnchorGaussian<T>> anchors;
    AnchorModel<T> model;
    TrainConfig<T> config;
    T extent = T(1);
    Rng rng;
    int iter = 0;

    AdamConfig<T> adam_cfg{};
    AdamState<T> opt_feature, opt_scaling, opt_offsets;
    AdamState<T> opt_opacity, opt_rotation, opt_scale_head, opt_diffuse, opt_theta, opt_psi;

    AnchorTrainer(std::vector<AnchorGaussian<T>> a, AnchorModel<T> m, TrainConfig<T> cfg,
                  T scene_extent)
        : anchors(std::move(a)),
          model(std::move(m)),
          config(cfg),
          extent(scene_extent),
          rng(cfg.seed) {
        config.validate();
        model.validate();
        const std::size_t n = anchors.size();
        opt_feature.init(n * kAnchorFeatureDim);
        opt_scaling.init(n * 3);
        opt_offsets.init(n * kAnchorChildren * 3);
        opt_opacity.init(model.heads.opacity.param_count());
        opt_rotation.init(model.heads.rotation.param_count());
        opt_scale_head.init(model.heads.scale.param_count());
        opt_diffuse.init(model.heads.diffuse.param_count());
        opt_theta.init(model.heads.theta.param_count());
        opt_psi.init(model.psi.param_count());
    }

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

        const FrameBuffer<T> fb =
            render_anchor_scene(anchors, model, rcam, config.background, &ctx_);
        const auto res =
            image_loss(fb.color, gt->pixels, rw, rh, config.lambda_dssim, &dimage_, loss_ws_);
        if (!std::isfinite(double(res.total)))
            throw std::runtime_error(
                "training diverged: non-finite loss at iteration " + std::to_string(it) + " (" +
                std::to_string(anchors.size()) + " anchors, resolution " + std::to_string(rw) +
                "x" + std::to_string(rh) + ")");

        render_anchor_backward(anchors, model, ctx_, fb, dimage_, grads_);
        apply_adam();

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
            row.num_gaussians = anchors.size();
            row.resolution = last_resolution_;
            if (holdout &&
                (iter % config.holdout_psnr_interval == 0 || iter == config.total_iters))
                row.psnr_holdout = holdout_psnr(*holdout);
            log.push_back(row);
        }
        return log;
    }

    double holdout_psnr(const TrainView<T>& holdout) {
        FrameBuffer<T> fb = render_anchor_scene(anchors, model, holdout.cam, config.background);
        for (auto& p : fb.color)
            for (int c = 0; c < 3; ++c) p[c] = std::clamp(p[c], T(0), T(1));
        return double(psnr(fb.color, holdout.image.pixels));
    }

  private:
    AnchorRenderContext<T> ctx_;
    AnchorGradBuffers<T> grads_;
    LossWorkspace<T> loss_ws_;
    std::vector<Vec3<T>> dimage_;
    std::vector<std::size_t> epoch_order_;
    std::size_t epoch_pos_ = 0;
    int last_resolution_ = 0;

    std::size_t pick_view(std::size_t num_views) {
        if (epoch_order_.size() != num_views) {
            epoch_order_.resize(num_views);
            for (std::size_t i = 0; i < num_views; ++i) epoch_order_[i] = i;
            epoch_pos_ = num_views;
        }
        if (epoch_pos_ >= epoch_order_.size()) {
            rng.shuffle(epoch_order_);
            epoch_pos_ = 0;
        }
        return epoch_order_[epoch_pos_++];
    }

    void apply_adam() {
        const double t = double(iter) / double(std::max(1, config.total_iters));
        const T lr_off = expon_lr(config.lr.position_init * extent,
                                  config.lr.position_final * extent, t);
        const T lr_mlp = expon_lr(config.lr.mlp_init, config.lr.mlp_final, t);

        adam_step_view(
            opt_feature, anchors.size() * kAnchorFeatureDim, config.lr.asg_feature, adam_cfg,
            [&](std::size_t i) -> T& {
                return anchors[i / kAnchorFeatureDim].feature[i % kAnchorFeatureDim];
            },
            [&](std::size_t i) {
                return grads_.feature[i / kAnchorFeatureDim][i % kAnchorFeatureDim];
            });
        adam_step_view(
            opt_scaling, anchors.size() * 3, config.lr.log_scale, adam_cfg,
            [&](std::size_t i) -> T& { return anchors[i / 3].scaling[i % 3]; },
            [&](std::size_t i) { return grads_.scaling[i / 3][i % 3]; });
        // keep the offset stretch positive; log(eta) must stay finite
        for (auto& a : anchors)
            for (int k = 0; k < 3; ++k)
                a.scaling[std::size_t(k)] = std::max(a.scaling[std::size_t(k)], T(1e-5));
        adam_step_view(
            opt_offsets, anchors.size() * kAnchorChildren * 3, lr_off, adam_cfg,
            [&](std::size_t i) -> T& {
                return anchors[i / (kAnchorChildren * 3)]
                    .offsets[(i / 3) % kAnchorChildren][i % 3];
            },
            [&](std::size_t i) {
                return grads_.offsets[i / (kAnchorChildren * 3)][(i / 3) % kAnchorChildren]
                                     [i % 3];
            });

        adam_step(opt_opacity, model.heads.opacity.params.data(), grads_.opacity_params.data(),
                  model.heads.opacity.param_count(), lr_mlp, adam_cfg);
        adam_step(opt_rotation, model.heads.rotation.params.data(),
                  grads_.rotation_params.data(), model.heads.rotation.param_count(), lr_mlp,
                  adam_cfg);
        adam_step(opt_scale_head, model.heads.scale.params.data(), grads_.scale_params.data(),
                  model.heads.scale.param_count(), lr_mlp, adam_cfg);
        adam_step(opt_diffuse, model.heads.diffuse.params.data(), grads_.diffuse_params.data(),
                  model.heads.diffuse.param_count(), lr_mlp, adam_cfg);
        adam_step(opt_theta, model.heads.theta.params.data(), grads_.theta_params.data(),
                  model.heads.theta.param_count(), lr_mlp, adam_cfg);
        adam_step(opt_psi, model.psi.params.data(), grads_.psi_params.data(),
                  model.psi.param_count(), lr_mlp, adam_cfg);
    }
};

}  // namespace specsplat
