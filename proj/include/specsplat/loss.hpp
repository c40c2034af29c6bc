#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "specsplat/vec.hpp"

namespace specsplat {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

template <typename T>
struct LossResult {
    T total = 0;  // (1 - lambda) * l1 + lambda * dssim
    T l1 = 0;
    T dssim = 0;  // (1 - ssim) / 2
};

namespace detail {

template <typename T>
std::vector<T> ssim_kernel() {
    std::vector<T> k(kSsimWindow);
    T sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        k[i] = T(std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma)));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable same-size convolution with zero padding. The kernel is
// symmetric, so this routine is its own adjoint.
template <typename T>
void conv_same(const std::vector<T>& in, int w, int h, const std::vector<T>& ker,
               std::vector<T>& tmp, std::vector<T>& out) {
    const int r = kSsimWindow / 2;
    tmp.assign(in.size(), T(0));
    out.assign(in.size(), T(0));
    for (int y = 0; y < h; ++y) {
        const T* row = in.data() + std::size_t(y) * w;
        T* trow = tmp.data() + std::size_t(y) * w;
        for (int x = 0; x < w; ++x) {
            T acc = 0;
            const int k0 = std::max(0, r - x), k1 = std::min(kSsimWindow, w + r - x);
            for (int k = k0; k < k1; ++k) acc += ker[k] * row[x + k - r];
            trow[x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        const int k0 = std::max(0, r - y), k1 = std::min(kSsimWindow, h + r - y);
        T* orow = out.data() + std::size_t(y) * w;
        for (int k = k0; k < k1; ++k) {
            const T* trow = tmp.data() + std::size_t(y + k - r) * w;
            const T kv = ker[k];
            for (int x = 0; x < w; ++x) orow[x] += kv * trow[x];
        }
    }
}

}  // namespace detail

// Scratch planes reused across calls so the training loop does not
// reallocate every iteration.
template <typename T>
struct LossWorkspace {
    std::vector<T> pa, pb, prod, tmp;
    std::vector<T> ma, mb, caa, cbb, cab;
    std::vector<T> g_ma, g_aa, g_ab, adj;
};

// Photometric training loss between a rendered image and ground truth:
//   (1 - lambda) * mean|a - b|  +  lambda * (1 - SSIM(a, b)) / 2
// SSIM uses an 11x11 Gaussian window (sigma 1.5) applied per channel with
// zero padding, averaged over every pixel and channel. When `dimage` is
// non-null it receives dLoss/d(rendered), computed analytically by running
// the window convolutions in reverse.
template <typename T>
LossResult<T> image_loss(const std::vector<Vec3<T>>& rendered, const std::vector<Vec3<T>>& gt,
                         int width, int height, T lambda_dssim, std::vector<Vec3<T>>* dimage,
                         LossWorkspace<T>& ws) {
    const std::size_t n = std::size_t(width) * std::size_t(height);
    if (width < 1 || height < 1) throw std::invalid_argument("image_loss: empty image");
    if (rendered.size() != n || gt.size() != n)
        throw std::invalid_argument("image_loss: resolution mismatch between rendered and ground truth");

    const auto ker = detail::ssim_kernel<T>();
    const T inv_count = T(1) / (T(3) * T(n));
    const T c1 = T(kSsimC1), c2 = T(kSsimC2);

    if (dimage) dimage->assign(n, Vec3<T>{});

    T l1_sum = 0, ssim_sum = 0;
    for (int ch = 0; ch < 3; ++ch) {
        ws.pa.resize(n);
        ws.pb.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            ws.pa[i] = rendered[i][ch];
            ws.pb[i] = gt[i][ch];
        }

        detail::conv_same(ws.pa, width, height, ker, ws.tmp, ws.ma);
        detail::conv_same(ws.pb, width, height, ker, ws.tmp, ws.mb);
        ws.prod.resize(n);
        for (std::size_t i = 0; i < n; ++i) ws.prod[i] = ws.pa[i] * ws.pa[i];
        detail::conv_same(ws.prod, width, height, ker, ws.tmp, ws.caa);
        for (std::size_t i = 0; i < n; ++i) ws.prod[i] = ws.pb[i] * ws.pb[i];
        detail::conv_same(ws.prod, width, height, ker, ws.tmp, ws.cbb);
        for (std::size_t i = 0; i < n; ++i) ws.prod[i] = ws.pa[i] * ws.pb[i];
        detail::conv_same(ws.prod, width, height, ker, ws.tmp, ws.cab);

        if (dimage) {
            ws.g_ma.assign(n, T(0));
            ws.g_aa.assign(n, T(0));
            ws.g_ab.assign(n, T(0));
        }

        // dLoss/dssim_pixel: the SSIM map is averaged, then flipped and
        // halved by the D-SSIM term.
        const T coef = lambda_dssim * T(-0.5) * inv_count;
        for (std::size_t i = 0; i < n; ++i) {
            l1_sum += std::abs(ws.pa[i] - ws.pb[i]);

            const T ma = ws.ma[i], mb = ws.mb[i];
            const T saa = ws.caa[i] - ma * ma;
            const T sbb = ws.cbb[i] - mb * mb;
            const T sab = ws.cab[i] - ma * mb;
            const T A = 2 * ma * mb + c1, B = 2 * sab + c2;
            const T C = ma * ma + mb * mb + c1, D = saa + sbb + c2;
            const T inv_cd = T(1) / (C * D);
            const T ssim = A * B * inv_cd;
            ssim_sum += ssim;

            if (dimage) {
                const T d_saa = -ssim / D;
                const T d_sab = 2 * A * inv_cd;
                const T d_ma = 2 * mb * B * inv_cd - ssim * 2 * ma / C  // through A, C
                               - d_saa * 2 * ma - d_sab * mb;           // through saa, sab
                ws.g_ma[i] = coef * d_ma;
                ws.g_aa[i] = coef * d_saa;
                ws.g_ab[i] = coef * d_sab;
            }
        }

        if (dimage) {
            auto& out = *dimage;
            const T l1_coef = (T(1) - lambda_dssim) * inv_count;
            detail::conv_same(ws.g_ma, width, height, ker, ws.tmp, ws.adj);
            for (std::size_t i = 0; i < n; ++i) out[i][ch] += ws.adj[i];
            detail::conv_same(ws.g_aa, width, height, ker, ws.tmp, ws.adj);
            for (std::size_t i = 0; i < n; ++i) out[i][ch] += 2 * ws.pa[i] * ws.adj[i];
            detail::conv_same(ws.g_ab, width, height, ker, ws.tmp, ws.adj);
            for (std::size_t i = 0; i < n; ++i) {
                out[i][ch] += ws.pb[i] * ws.adj[i];
                const T diff = ws.pa[i] - ws.pb[i];
                if (diff > 0)
                    out[i][ch] += l1_coef;
                else if (diff < 0)
                    out[i][ch] -= l1_coef;
            }
        }
    }

    LossResult<T> res;
    res.l1 = l1_sum * inv_count;
    res.dssim = (T(1) - ssim_sum * inv_count) / T(2);
    res.total = (T(1) - lambda_dssim) * res.l1 + lambda_dssim * res.dssim;
    return res;
}

template <typename T>
LossResult<T> image_loss(const std::vector<Vec3<T>>& rendered, const std::vector<Vec3<T>>& gt,
                         int width, int height, T lambda_dssim,
                         std::vector<Vec3<T>>* dimage = nullptr) {
    LossWorkspace<T> ws;
    return image_loss(rendered, gt, width, height, lambda_dssim, dimage, ws);
}

// Peak signal-to-noise ratio in dB for [0,1] images. A perfect match has
// zero MSE; report that as +infinity rather than a NaN from log(0).
template <typename T>
T psnr(const std::vector<Vec3<T>>& a, const std::vector<Vec3<T>>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("psnr: resolution mismatch");
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            const double d = double(a[i][c]) - double(b[i][c]);
            se += d * d;
        }
    const double mse = se / (3.0 * double(a.size()));
    if (mse == 0) return std::numeric_limits<T>::infinity();
    return T(10.0 * std::log10(1.0 / mse));
}

}  // namespace specsplat
