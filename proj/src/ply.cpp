#include "specsplat/ply.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace specsplat {

void export_gs_ply(const std::string& path, const std::vector<Gaussian<float>>& scene) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("ply: " + path + ": cannot open for writing");

    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << scene.size() << "\n";
    const char* axes[3] = {"x", "y", "z"};
    for (const char* a : axes) out << "property float " << a << "\n";
    for (const char* a : axes) out << "property float n" << a << "\n";
    for (int c = 0; c < 3; ++c) out << "property float f_dc_" << c << "\n";
    for (int i = 0; i < 45; ++i) out << "property float f_rest_" << i << "\n";
    out << "property float opacity\n";
    for (int i = 0; i < 3; ++i) out << "property float scale_" << i << "\n";
    for (int i = 0; i < 4; ++i) out << "property float rot_" << i << "\n";
    out << "end_header\n";

    std::vector<float> row(62);
    for (const auto& g : scene) {
        std::size_t at = 0;
        for (int k = 0; k < 3; ++k) row[at++] = g.position[std::size_t(k)];
        for (int k = 0; k < 3; ++k) row[at++] = 0.0f;  // normals, unused
        for (int c = 0; c < 3; ++c) row[at++] = g.sh_coeffs[0][std::size_t(c)];
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < kShCoeffs; ++k) row[at++] = g.sh_coeffs[std::size_t(k)][std::size_t(c)];
        row[at++] = g.opacity_logit;
        for (int k = 0; k < 3; ++k) row[at++] = g.log_scale[std::size_t(k)];
        for (int k = 0; k < 4; ++k) row[at++] = g.rotation[std::size_t(k)];
        out.write(reinterpret_cast<const char*>(row.data()),
                  std::streamsize(row.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("ply: " + path + ": write failed");
}

}  // namespace specsplat
