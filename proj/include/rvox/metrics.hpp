#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rvox/image.hpp"

namespace rvox {

/// 10 log10(1 / MSE) at unit dynamic range; identical images report the
/// +infinity sentinel.
inline double psnr(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_window(int radius, double sigma) {
    std::vector<double> w(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        w[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += w[i + radius];
    }
    for (double& v : w) v /= sum;
    return w;
}

// separable Gaussian filter, valid region only
inline std::vector<double> gauss_valid(const std::vector<double>& src, int w, int h, int radius,
                                       const std::vector<double>& kernel, int& ow, int& oh) {
    ow = w - 2 * radius;
    oh = h - 2 * radius;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 2 * radius + 1; ++k) acc += kernel[k] * src[y * w + x + k];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 2 * radius + 1; ++k)
                acc += kernel[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace detail

/// Structural similarity with the standard 11x11 Gaussian window
/// (sigma = 1.5) and C1 = 0.01^2, C2 = 0.03^2 at unit dynamic range,
/// averaged over channels and valid window positions.
inline double ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("ssim: shape mismatch");
    constexpr int radius = 5;
    if (a.width < 11 || a.height < 11)
        throw std::invalid_argument("ssim: image must be at least 11x11");
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const auto kernel = detail::gaussian_window(radius, 1.5);
    const int w = a.width, h = a.height;

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> xa(static_cast<std::size_t>(w) * h), xb(xa.size()), xaa(xa.size()),
            xbb(xa.size()), xab(xa.size());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double va = a.at(x, y, c);
                const double vb = b.at(x, y, c);
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                xa[i] = va;
                xb[i] = vb;
                xaa[i] = va * va;
                xbb[i] = vb * vb;
                xab[i] = va * vb;
            }
        int ow, oh;
        const auto mu_a = detail::gauss_valid(xa, w, h, radius, kernel, ow, oh);
        const auto mu_b = detail::gauss_valid(xb, w, h, radius, kernel, ow, oh);
        const auto m_aa = detail::gauss_valid(xaa, w, h, radius, kernel, ow, oh);
        const auto m_bb = detail::gauss_valid(xbb, w, h, radius, kernel, ow, oh);
        const auto m_ab = detail::gauss_valid(xab, w, h, radius, kernel, ow, oh);
        double acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double va = m_aa[i] - mu_a[i] * mu_a[i];
            const double vb = m_bb[i] - mu_b[i] * mu_b[i];
            const double cov = m_ab[i] - mu_a[i] * mu_b[i];
            acc += (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / a.channels;
}

/// Per-image metric lists plus their arithmetic means.
struct MetricReport {
    std::vector<double> psnr_per_image;
    std::vector<double> ssim_per_image;

    double mean_psnr() const {
        double s = 0.0;
        for (double v : psnr_per_image) s += v;
        return psnr_per_image.empty() ? 0.0 : s / psnr_per_image.size();
    }
    double mean_ssim() const {
        double s = 0.0;
        for (double v : ssim_per_image) s += v;
        return ssim_per_image.empty() ? 0.0 : s / ssim_per_image.size();
    }
};

}  // namespace rvox
