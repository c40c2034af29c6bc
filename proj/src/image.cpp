#include "specsplat/image.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

namespace specsplat {

Image<float> read_png(const std::string& path, std::vector<float>* alpha) {
    png_image pimg;
    std::memset(&pimg, 0, sizeof(pimg));
    pimg.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pimg, path.c_str()))
        throw std::runtime_error("read_png: cannot open '" + path + "': " + pimg.message);

    pimg.format = PNG_FORMAT_RGBA;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(pimg));
    if (!png_image_finish_read(&pimg, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&pimg);
        throw std::runtime_error("read_png: failed decoding '" + path + "': " + pimg.message);
    }

    Image<float> img;
    img.resize(int(pimg.width), int(pimg.height));
    if (alpha) alpha->assign(img.pixels.size(), 1.0f);
    constexpr float kInv = 1.0f / 255.0f;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = {buf[4 * i + 0] * kInv, buf[4 * i + 1] * kInv, buf[4 * i + 2] * kInv};
        if (alpha) (*alpha)[i] = buf[4 * i + 3] * kInv;
    }
    return img;
}

void write_png(const std::string& path, const Image<float>& img) {
    if (img.width < 1 || img.height < 1) throw std::invalid_argument("write_png: empty image");
    std::vector<png_byte> buf(img.pixels.size() * 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            const float v = std::min(1.0f, std::max(0.0f, img.pixels[i][c]));
            buf[3 * i + c] = png_byte(std::lround(v * 255.0f));
        }

    png_image pimg;
    std::memset(&pimg, 0, sizeof(pimg));
    pimg.version = PNG_IMAGE_VERSION;
    pimg.width = png_uint_32(img.width);
    pimg.height = png_uint_32(img.height);
    pimg.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&pimg, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("write_png: failed writing '" + path + "': " + pimg.message);
}

}  // namespace specsplat
