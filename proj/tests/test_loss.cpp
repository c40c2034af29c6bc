#include <doctest.h>

#include <cstdio>
#include <random>

#include "oracles.hpp"
#include "specsplat/image.hpp"
#include "specsplat/loss.hpp"

using namespace specsplat;

namespace {

// Independent SSIM evaluation: direct 2D window sums per pixel, no
// separable passes, kernel normalized as an outer product. Used as the
// reference for the production implementation.
double ssim_ref(const std::vector<Vec3<double>>& a, const std::vector<Vec3<double>>& b, int w,
                int h) {
    double k1[11], sum = 0;
    for (int i = 0; i < 11; ++i) {
        k1[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2.0 * 1.5 * 1.5));
        sum += k1[i];
    }
    double k2[11][11];
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) k2[i][j] = k1[i] * k1[j] / (sum * sum);

    double total = 0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double mu1 = 0, mu2 = 0, m11 = 0, m22 = 0, m12 = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        const int xx = x + dx, yy = y + dy;
                        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                        const double kv = k2[dy + 5][dx + 5];
                        const double va = a[std::size_t(yy) * w + xx][c];
                        const double vb = b[std::size_t(yy) * w + xx][c];
                        mu1 += kv * va;
                        mu2 += kv * vb;
                        m11 += kv * va * va;
                        m22 += kv * vb * vb;
                        m12 += kv * va * vb;
                    }
                const double s11 = m11 - mu1 * mu1;
                const double s22 = m22 - mu2 * mu2;
                const double s12 = m12 - mu1 * mu2;
                total += ((2 * mu1 * mu2 + kSsimC1) * (2 * s12 + kSsimC2)) /
                         ((mu1 * mu1 + mu2 * mu2 + kSsimC1) * (s11 + s22 + kSsimC2));
            }
    return total / (3.0 * w * h);
}

std::vector<Vec3<double>> random_image(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Vec3<double>> img(std::size_t(w) * h);
    for (auto& p : img) p = {uni(rng), uni(rng), uni(rng)};
    return img;
}

}  // namespace

TEST_CASE("loss of an image against itself is zero with zero gradient") {
    std::mt19937_64 rng(11);
    const int w = 23, h = 17;
    const auto img = random_image(rng, w, h);

    std::vector<Vec3<double>> grad;
    const auto res = image_loss<double>(img, img, w, h, 0.2, &grad);
    CHECK(res.l1 == 0.0);
    CHECK(std::abs(res.dssim) < 1e-14);
    CHECK(std::abs(res.total) < 1e-14);
    double worst = 0;
    for (const auto& g : grad)
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(g[c]));
    CHECK(worst < 1e-13);
}

TEST_CASE("constant images: exact l1 term and reference ssim") {
    const int w = 32, h = 24;
    std::vector<Vec3<double>> a(std::size_t(w) * h, Vec3<double>{0.3, 0.5, 0.7});
    std::vector<Vec3<double>> b(std::size_t(w) * h, Vec3<double>{0.4, 0.45, 0.9});

    const auto res = image_loss<double>(a, b, w, h, 0.2, nullptr);
    CHECK(res.l1 == doctest::Approx((0.1 + 0.05 + 0.2) / 3.0).epsilon(1e-12));

    const double s = ssim_ref(a, b, w, h);
    CHECK(res.dssim == doctest::Approx((1.0 - s) / 2.0).epsilon(1e-10));
    CHECK(res.total == doctest::Approx(0.8 * res.l1 + 0.2 * res.dssim).epsilon(1e-12));

    // For constant signals every windowed moment collapses to a closed form
    // in the partial kernel weight W(p) = wx(px) * wy(py): means scale by W,
    // variances become v^2 (W - W^2). Evaluate that scalar formula per pixel
    // without any convolution and compare.
    double k1[11], sum = 0;
    for (int i = 0; i < 11; ++i) {
        k1[i] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5);
        sum += k1[i];
    }
    auto wsum = [&](int p, int n) {
        double acc = 0;
        for (int k = 0; k < 11; ++k) {
            const int q = p + k - 5;
            if (q >= 0 && q < n) acc += k1[k];
        }
        return acc / sum;
    };
    double closed_sum = 0;
    for (int ch = 0; ch < 3; ++ch) {
        const double va = a[0][ch], vb = b[0][ch];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double W = wsum(x, w) * wsum(y, h);
                const double mu1 = va * W, mu2 = vb * W;
                const double cov = W - W * W;
                closed_sum += ((2 * mu1 * mu2 + kSsimC1) * (2 * va * vb * cov + kSsimC2)) /
                              ((mu1 * mu1 + mu2 * mu2 + kSsimC1) *
                               ((va * va + vb * vb) * cov + kSsimC2));
            }
    }
    const double closed_dssim = (1.0 - closed_sum / (3.0 * w * h)) / 2.0;
    CHECK(res.dssim == doctest::Approx(closed_dssim).epsilon(1e-10));
}

TEST_CASE("ssim matches the direct 2d reference on random images") {
    std::mt19937_64 rng(23);
    const int sizes[3][2] = {{17, 13}, {32, 32}, {24, 40}};
    for (const auto& s : sizes) {
        const int w = s[0], h = s[1];
        const auto a = random_image(rng, w, h);
        const auto b = random_image(rng, w, h);
        const auto res = image_loss<double>(a, b, w, h, 1.0, nullptr);
        const double ref = ssim_ref(a, b, w, h);
        CHECK(res.dssim == doctest::Approx((1.0 - ref) / 2.0).epsilon(1e-10));

        double l1 = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            for (int c = 0; c < 3; ++c) l1 += std::abs(a[i][c] - b[i][c]);
        const auto res0 = image_loss<double>(a, b, w, h, 0.0, nullptr);
        CHECK(res0.total == doctest::Approx(l1 / (3.0 * w * h)).epsilon(1e-12));
    }
}

TEST_CASE("loss gradient matches finite differences at random pixels") {
    std::mt19937_64 rng(37);
    const int w = 24, h = 18;
    auto a = random_image(rng, w, h);
    const auto b = random_image(rng, w, h);

    std::vector<Vec3<double>> grad;
    image_loss<double>(a, b, w, h, 0.2, &grad);

    auto scalar = [&]() { return double(image_loss<double>(a, b, w, h, 0.2, nullptr).total); };

    std::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
    std::uniform_int_distribution<int> chan(0, 2);
    testutil::GradCheckStats stats;
    for (int t = 0; t < 20; ++t) {
        const std::size_t i = pick(rng);
        const int c = chan(rng);
        const double fd = testutil::central_diff(scalar, &a[i][c], 1e-5);
        stats.add(grad[i][c], fd, 1e-3, 1e-6);
    }
    CHECK(stats.total == 20);
    CHECK(stats.bad == 0);
    CHECK(stats.worst < 1e-3);
}

TEST_CASE("lambda mixes the two terms linearly") {
    std::mt19937_64 rng(41);
    const int w = 16, h = 16;
    const auto a = random_image(rng, w, h);
    const auto b = random_image(rng, w, h);

    const auto r0 = image_loss<double>(a, b, w, h, 0.0, nullptr);
    const auto r1 = image_loss<double>(a, b, w, h, 1.0, nullptr);
    const auto rm = image_loss<double>(a, b, w, h, 0.2, nullptr);
    CHECK(r0.total == doctest::Approx(r0.l1).epsilon(1e-15));
    CHECK(r1.total == doctest::Approx(r1.dssim).epsilon(1e-15));
    CHECK(rm.total == doctest::Approx(0.8 * rm.l1 + 0.2 * rm.dssim).epsilon(1e-14));
}

TEST_CASE("psnr closed forms and direct mse agreement") {
    const int w = 8, h = 8;
    std::vector<Vec3<double>> a(std::size_t(w) * h, Vec3<double>{0.5, 0.5, 0.5});
    auto b = a;
    CHECK(std::isinf(psnr(a, b)));

    // Uniform error of 0.1 in every channel: MSE = 0.01 -> 20 dB.
    for (auto& p : b) p = {0.6, 0.6, 0.6};
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));

    std::mt19937_64 rng(53);
    const auto x = random_image(rng, 19, 7);
    const auto y = random_image(rng, 19, 7);
    double se = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int c = 0; c < 3; ++c) se += (x[i][c] - y[i][c]) * (x[i][c] - y[i][c]);
    const double direct = 10.0 * std::log10(1.0 / (se / (3.0 * x.size())));
    CHECK(psnr(x, y) == doctest::Approx(direct).epsilon(1e-9));
}

TEST_CASE("loss rejects mismatched resolutions") {
    std::vector<Vec3<double>> a(16 * 16), b(16 * 15);
    CHECK_THROWS_AS(image_loss<double>(a, b, 16, 16, 0.2, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(psnr(a, b), std::invalid_argument);
}

TEST_CASE("area resample preserves means and handles fractional footprints") {
    // Constant image stays constant at any target resolution.
    Image<double> c;
    c.resize(7, 5);
    for (auto& p : c.pixels) p = {0.25, 0.5, 0.75};
    for (const auto [nw, nh] : {std::pair{3, 2}, std::pair{13, 9}, std::pair{7, 5}}) {
        const auto r = resample_area(c, nw, nh);
        for (const auto& p : r.pixels) {
            CHECK(p.x == doctest::Approx(0.25).epsilon(1e-12));
            CHECK(p.y == doctest::Approx(0.5).epsilon(1e-12));
            CHECK(p.z == doctest::Approx(0.75).epsilon(1e-12));
        }
    }

    // 2x downsample of a checkerboard averages to exactly one half.
    Image<double> cb;
    cb.resize(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const double v = ((x + y) & 1) ? 1.0 : 0.0;
            cb.at(x, y) = {v, v, v};
        }
    const auto half = resample_area(cb, 4, 4);
    for (const auto& p : half.pixels) CHECK(p.x == doctest::Approx(0.5).epsilon(1e-12));

    // Integer-factor downsample equals the block mean.
    std::mt19937_64 rng(61);
    Image<double> img;
    img.resize(6, 4);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (auto& p : img.pixels) p = {uni(rng), uni(rng), uni(rng)};
    const auto ds = resample_area(img, 3, 2);
    for (int oy = 0; oy < 2; ++oy)
        for (int ox = 0; ox < 3; ++ox) {
            Vec3<double> mean{};
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) mean += img.at(2 * ox + dx, 2 * oy + dy);
            mean = 0.25 * mean;
            for (int ch = 0; ch < 3; ++ch)
                CHECK(ds.at(ox, oy)[ch] == doctest::Approx(mean[ch]).epsilon(1e-12));
        }

    // Fractional coverage: five columns [0, .25, .5, .75, 1] into two.
    Image<double> row;
    row.resize(5, 1);
    for (int x = 0; x < 5; ++x) row.at(x, 0) = {x / 4.0, x / 4.0, x / 4.0};
    const auto two = resample_area(row, 2, 1);
    CHECK(two.at(0, 0).x == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(two.at(1, 0).x == doctest::Approx(0.8).epsilon(1e-12));

    // Global mean is preserved even for awkward ratios.
    const auto odd = resample_area(img, 5, 3);
    Vec3<double> m_in{}, m_out{};
    for (const auto& p : img.pixels) m_in += p;
    for (const auto& p : odd.pixels) m_out += p;
    m_in = (1.0 / double(img.pixels.size())) * m_in;
    m_out = (1.0 / double(odd.pixels.size())) * m_out;
    for (int ch = 0; ch < 3; ++ch) CHECK(m_out[ch] == doctest::Approx(m_in[ch]).epsilon(1e-12));
}

TEST_CASE("png round trip is exact for quantized values") {
    std::mt19937_64 rng(71);
    Image<float> img;
    img.resize(13, 9);
    std::uniform_int_distribution<int> byte(0, 255);
    std::vector<int> bytes(img.pixels.size() * 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            bytes[3 * i + c] = byte(rng);
            img.pixels[i][c] = bytes[3 * i + c] / 255.0f;
        }

    const std::string path = "loss_png_roundtrip.png";
    write_png(path, img);
    std::vector<float> alpha;
    const auto back = read_png(path, &alpha);
    std::remove(path.c_str());

    REQUIRE(back.width == img.width);
    REQUIRE(back.height == img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        for (int c = 0; c < 3; ++c)
            CHECK(std::lround(back.pixels[i][c] * 255.0f) == bytes[3 * i + c]);
        CHECK(alpha[i] == 1.0f);
    }
}
