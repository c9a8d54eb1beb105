#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "splat/errors.hpp"
#include "splat/image.hpp"

namespace splat {

// 10*log10(1/MSE) over [0,1] images; identical images yield the +infinity
// sentinel so downstream consumers can tell "perfect" from "merely high".
inline double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

// |a AND b| / |a OR b| at the given foreground threshold; two empty masks
// count as perfectly matching.
inline double mask_iou(const Image& a, const Image& b, double threshold = 0.5) {
    require_same_shape(a, b, "mask_iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool fa = a.data[i] > threshold, fb = b.data[i] > threshold;
        inter += fa && fb;
        uni += fa || fb;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

inline constexpr int kSsimRadius = 5;  // 11x11 window
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, 11>& ssim_kernel() {
    static const std::array<double, 11> k = [] {
        std::array<double, 11> v{};
        const double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            v[static_cast<std::size_t>(i)] =
                std::exp(-0.5 * (i - kSsimRadius) * (i - kSsimRadius) / (sigma * sigma));
            sum += v[static_cast<std::size_t>(i)];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return k;
}

// Window weights are renormalized where the 11x11 support is truncated by the
// image border, so SSIM stays well defined down to tiny images. Interior
// pixels see the standard unit-sum Gaussian window.
inline std::vector<double> ssim_axis_normalizer(int extent) {
    const auto& k = ssim_kernel();
    std::vector<double> z(static_cast<std::size_t>(extent), 0.0);
    for (int p = 0; p < extent; ++p)
        for (int j = 0; j < 11; ++j) {
            const int q = p + j - kSsimRadius;
            if (q >= 0 && q < extent) z[static_cast<std::size_t>(p)] += k[static_cast<std::size_t>(j)];
        }
    return z;
}

enum class BlurMode { Normalized, Adjoint };

// Separable truncated-Gaussian blur. Normalized: out_p = sum k_j in_{p+j-5} / Z_p.
// Adjoint: out_q = sum_j k_j (in/Z)_{q+j-5} — the transpose of Normalized
// (kernel symmetry turns correlation into convolution).
inline Image ssim_blur(const Image& src, BlurMode mode) {
    const auto& k = ssim_kernel();
    const auto zx = ssim_axis_normalizer(src.width);
    const auto zy = ssim_axis_normalizer(src.height);
    const int w = src.width, h = src.height, c = src.channels;
    Image tmp(w, h, c), out(w, h, c);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < 11; ++j) {
                    const int q = x + j - kSsimRadius;
                    if (q < 0 || q >= w) continue;
                    double v = src.at(q, y, ch);
                    if (mode == BlurMode::Adjoint) v /= zx[static_cast<std::size_t>(q)];
                    acc += k[static_cast<std::size_t>(j)] * v;
                }
                if (mode == BlurMode::Normalized) acc /= zx[static_cast<std::size_t>(x)];
                tmp.at(x, y, ch) = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int j = 0; j < 11; ++j) {
                    const int q = y + j - kSsimRadius;
                    if (q < 0 || q >= h) continue;
                    double v = tmp.at(x, q, ch);
                    if (mode == BlurMode::Adjoint) v /= zy[static_cast<std::size_t>(q)];
                    acc += k[static_cast<std::size_t>(j)] * v;
                }
                if (mode == BlurMode::Normalized) acc /= zy[static_cast<std::size_t>(y)];
                out.at(x, y, ch) = acc;
            }
    return out;
}

}  // namespace detail

struct SsimResult {
    double value = 0.0;
    Image d_first;  // dSSIM/d(first image)
};

// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5),
// stabilizers C1=0.01^2, C2=0.03^2. with_grad additionally returns the exact
// gradient w.r.t. the first image.
inline SsimResult ssim_with_grad(const Image& a, const Image& b, bool with_grad = true) {
    require_same_shape(a, b, "ssim");
    using detail::BlurMode;
    const int w = a.width, h = a.height, c = a.channels;
    const std::size_t n = a.data.size();

    Image aa(w, h, c), bb(w, h, c), ab(w, h, c);
    for (std::size_t i = 0; i < n; ++i) {
        aa.data[i] = a.data[i] * a.data[i];
        bb.data[i] = b.data[i] * b.data[i];
        ab.data[i] = a.data[i] * b.data[i];
    }
    const Image mu_a = detail::ssim_blur(a, BlurMode::Normalized);
    const Image mu_b = detail::ssim_blur(b, BlurMode::Normalized);
    const Image g_aa = detail::ssim_blur(aa, BlurMode::Normalized);
    const Image g_bb = detail::ssim_blur(bb, BlurMode::Normalized);
    const Image g_ab = detail::ssim_blur(ab, BlurMode::Normalized);

    SsimResult out;
    Image w_mu(w, h, c), w_gaa(w, h, c), w_gab(w, h, c);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double ma = mu_a.data[i], mb = mu_b.data[i];
        const double va = g_aa.data[i] - ma * ma;
        const double vb = g_bb.data[i] - mb * mb;
        const double cov = g_ab.data[i] - ma * mb;
        const double a1 = 2.0 * ma * mb + detail::kSsimC1;
        const double a2 = 2.0 * cov + detail::kSsimC2;
        const double b1 = ma * ma + mb * mb + detail::kSsimC1;
        const double b2 = va + vb + detail::kSsimC2;
        const double s = (a1 * a2) / (b1 * b2);
        total += s;
        if (with_grad) {
            w_mu.data[i] =
                inv_n * (2.0 * mb * (a2 - a1) / (b1 * b2) - 2.0 * ma * s * (1.0 / b1 - 1.0 / b2));
            w_gaa.data[i] = inv_n * (-s / b2);
            w_gab.data[i] = inv_n * (2.0 * a1 / (b1 * b2));
        }
    }
    out.value = total * inv_n;

    if (with_grad) {
        const Image adj_mu = detail::ssim_blur(w_mu, BlurMode::Adjoint);
        const Image adj_gaa = detail::ssim_blur(w_gaa, BlurMode::Adjoint);
        const Image adj_gab = detail::ssim_blur(w_gab, BlurMode::Adjoint);
        out.d_first = Image(w, h, c);
        for (std::size_t i = 0; i < n; ++i)
            out.d_first.data[i] =
                adj_mu.data[i] + 2.0 * a.data[i] * adj_gaa.data[i] + b.data[i] * adj_gab.data[i];
    }
    return out;
}

inline double ssim(const Image& a, const Image& b) { return ssim_with_grad(a, b, false).value; }

}  // namespace splat
