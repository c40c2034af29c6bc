#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "specsplat/vec.hpp"

namespace specsplat {

template <typename T>
struct Image {
    int width = 0, height = 0;
    std::vector<Vec3<T>> pixels;

    void resize(int w, int h) {
        width = w;
        height = h;
        pixels.assign(std::size_t(w) * std::size_t(h), Vec3<T>{});
    }
    std::size_t index(int x, int y) const {
        return std::size_t(y) * std::size_t(width) + std::size_t(x);
    }
    Vec3<T>& at(int x, int y) { return pixels[index(x, y)]; }
    const Vec3<T>& at(int x, int y) const { return pixels[index(x, y)]; }
};

// Area-averaging resample to an arbitrary resolution: every output pixel
// integrates the source over its exact footprint, with fractional coverage
// at the edges. Mean intensity is preserved for any scale factor.
template <typename T>
Image<T> resample_area(const Image<T>& src, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1) throw std::invalid_argument("resample: resolution < 1");
    Image<T> out;
    out.resize(new_w, new_h);
    if (src.width == new_w && src.height == new_h) {
        out.pixels = src.pixels;
        return out;
    }
    const double sx = double(src.width) / double(new_w);
    const double sy = double(src.height) / double(new_h);
    for (int oy = 0; oy < new_h; ++oy) {
        const double y0 = oy * sy, y1 = (oy + 1) * sy;
        const int iy0 = int(y0), iy1 = std::min(int(std::ceil(y1)), src.height);
        for (int ox = 0; ox < new_w; ++ox) {
            const double x0 = ox * sx, x1 = (ox + 1) * sx;
            const int ix0 = int(x0), ix1 = std::min(int(std::ceil(x1)), src.width);
            Vec3<double> acc{};
            double area = 0;
            for (int iy = iy0; iy < iy1; ++iy) {
                const double ch = std::min(y1, double(iy + 1)) - std::max(y0, double(iy));
                for (int ix = ix0; ix < ix1; ++ix) {
                    const double cw = std::min(x1, double(ix + 1)) - std::max(x0, double(ix));
                    const double c = cw * ch;
                    const Vec3<T>& p = src.at(ix, iy);
                    acc += c * Vec3<double>{double(p.x), double(p.y), double(p.z)};
                    area += c;
                }
            }
            out.at(ox, oy) = {T(acc.x / area), T(acc.y / area), T(acc.z / area)};
        }
    }
    return out;
}

// 8-bit PNG. Values clamp to [0,1] and round to nearest at write time.
// Reading fills the optional alpha plane when the file carries one
// (opaque = 1); rgb channels come back un-premultiplied.
Image<float> read_png(const std::string& path, std::vector<float>* alpha = nullptr);
void write_png(const std::string& path, const Image<float>& img);

}  // namespace specsplat
