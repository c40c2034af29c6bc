#pragma once

#include <string>

#include "specsplat/trainer.hpp"

namespace specsplat {

// Training configuration plus the model knobs that ride along with it.
struct RunConfig {
    TrainConfig<float> train;
    int num_lobes = 4;
    int init_points = 1000;
    float anchor_voxel = 0.05f;  // anchor cell size as a fraction of scene extent
};

// Flat key=value text; '#' starts a comment, blank lines are skipped, keys
// match the field names (booleans accept true/false/on/off/1/0, background
// is r,g,b). Unknown keys and malformed values are errors with the line
// number.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});

}  // namespace specsplat
