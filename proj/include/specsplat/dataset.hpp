#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specsplat/image.hpp"
#include "specsplat/rasterizer.hpp"

// Dataset plumbing: NeRF-Blender-convention loading and a procedural
// desk-scale scene whose ground truth carries a planted anisotropic
// highlight.

namespace specsplat {

enum class Split { kTrain, kTest, kHoldout };

struct DatasetItem {
    Camera<float> cam;
    Image<float> image;
    Split split = Split::kTrain;
    std::string source;
};

struct Dataset {
    std::vector<DatasetItem> items;

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < items.size(); ++i)
            if (items[i].split == s) out.push_back(i);
        return out;
    }
};

// Reads transforms_train.json (and transforms_test.json when present,
// tagging its frames as the test split; otherwise every 8th training frame
// becomes the holdout). Camera-to-world matrices in the OpenGL convention
// are converted to this engine's world-to-camera frame, and RGBA images are
// composited over the given background.
Dataset load_nerf_synthetic(const std::string& dir, Vec3<float> background = {});

// Camera at `eye` looking at `target`, rows right/down/forward.
Camera<float> look_at_camera(Vec3<float> eye, Vec3<float> target, float focal_px, int width,
                             int height, Vec3<float> up = {0.0f, 1.0f, 0.0f});

struct AnisoSceneSpec {
    int num_blobs = 12;
    int train_views = 24;
    int eval_views = 8;
    int resolution = 64;
    float specular_amplitude = 1.2f;
    float sharpness_x = 60.0f;  // planted lobe falloff along its tangent
    float sharpness_y = 8.0f;   // and along its bi-tangent
    Vec3<float> background{};
    std::uint32_t seed = 1;
};

// Procedural desk scene: flattened Gaussian blobs on a slab, all with the
// same up-facing normal, each lit by its own planted anisotropic lobe.
// Lobe azimuths are stratified around the ring so every view direction
// catches a highlight on some blob. Ground-truth colors are per blob and
// per view; images come from the engine's own verified blending, so the
// scene doubles as a renderer oracle.
struct AnisoScene {
    AnisoSceneSpec spec;
    Dataset dataset;
    std::vector<Gaussian<float>> blobs;  // geometry only; sh and features zero
    std::vector<Vec3<float>> albedo;
    Vec3<float> highlight_tint{1.0f, 1.0f, 1.0f};
    std::vector<LobeFrame<float>> lobes;  // planted frames, z is the lobe axis

    Vec3<float> blob_color(std::size_t i, const Camera<float>& cam) const;
    FrameBuffer<float> render_view(const Camera<float>& cam) const;
    std::vector<Vec3<float>> seed_points() const;
};

AnisoScene generate_aniso_scene(const AnisoSceneSpec& spec);

}  // namespace specsplat
