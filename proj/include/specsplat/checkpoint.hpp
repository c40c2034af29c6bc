#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "specsplat/anchor.hpp"
#include "specsplat/trainer.hpp"

// Single-file binary checkpoints: magic SPGS, u32 version, little-endian
// fields, CRC32 trailer. Saves go through a temp file and rename, so a
// failed write never leaves a partial checkpoint at the target path.

namespace specsplat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Variant : std::uint8_t { kVanilla = 0, kAnchor = 1 };

struct Checkpoint {
    Variant variant = Variant::kVanilla;
    std::uint32_t iteration = 0;

    std::vector<Gaussian<float>> gaussians;  // vanilla payload
    AppearanceModel<float> model;

    std::vector<AnchorGaussian<float>> anchors;  // anchor payload
    AnchorModel<float> anchor_model;

    TrainConfig<float> config;
    std::vector<Camera<float>> cameras;  // training rig, indexable at render time
    std::string rng_state;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace specsplat
