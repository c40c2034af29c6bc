#pragma once

#include <string>
#include <vector>

#include "specsplat/geometry.hpp"

namespace specsplat {

// Writes the de-facto splatting-tool PLY layout: position, zero normals,
// f_dc/f_rest spherical-harmonic coefficients (channel-major rest block),
// opacity logit, log scales, and the raw quaternion. ASG features and the
// decoder networks have no slot in this layout, so the export is lossy by
// design; viewers see the diffuse part only.
void export_gs_ply(const std::string& path, const std::vector<Gaussian<float>>& scene);

}  // namespace specsplat
