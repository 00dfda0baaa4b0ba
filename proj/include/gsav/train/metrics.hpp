#pragma once

// Image quality metrics: PSNR and single-scale SSIM.

#include "gsav/render/image.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gsav {

inline constexpr double kPsnrCap = 99.0;  // sentinel for identical images

inline double mse(const ImageF& a, const ImageF& b) {
  require_same_shape(a, b, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

// PSNR in dB for images in [0,1]; identical images report the 99 dB cap.
inline double psnr(const ImageF& a, const ImageF& b) {
  const double m = mse(a, b);
  if (m <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

namespace detail {

// 11-tap Gaussian window, sigma 1.5, normalized.
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(11);
    double sum = 0;
    for (int i = 0; i < 11; ++i) {
      const double x = i - 5;
      v[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
      sum += v[static_cast<std::size_t>(i)];
    }
    for (auto& e : v) e /= sum;
    return v;
  }();
  return w;
}

// Separable windowed convolution of one channel; edges clamp.
inline ImageF ssim_blur(const ImageF& img, int channel) {
  const auto& w = ssim_window();
  ImageF tmp(img.width, img.height, 1), out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0;
      for (int k = -5; k <= 5; ++k) {
        const int xx = std::min(img.width - 1, std::max(0, x + k));
        acc += w[static_cast<std::size_t>(k + 5)] * img.at(y, xx, channel);
      }
      tmp.at(y, x, 0) = acc;
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0;
      for (int k = -5; k <= 5; ++k) {
        const int yy = std::min(img.height - 1, std::max(0, y + k));
        acc += w[static_cast<std::size_t>(k + 5)] * tmp.at(yy, x, 0);
      }
      out.at(y, x, 0) = acc;
    }
  return out;
}

}  // namespace detail

// Mean single-scale SSIM per channel; C1 = 0.01^2, C2 = 0.03^2 (unit range).
inline double ssim(const ImageF& a, const ImageF& b) {
  require_same_shape(a, b, "ssim");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (int c = 0; c < a.channels; ++c) {
    ImageF ac(a.width, a.height, 1), bc(a.width, a.height, 1), aa(a.width, a.height, 1),
        bb(a.width, a.height, 1), ab(a.width, a.height, 1);
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const double va = a.at(y, x, c), vb = b.at(y, x, c);
        ac.at(y, x, 0) = va;
        bc.at(y, x, 0) = vb;
        aa.at(y, x, 0) = va * va;
        bb.at(y, x, 0) = vb * vb;
        ab.at(y, x, 0) = va * vb;
      }
    const ImageF mu_a = detail::ssim_blur(ac, 0), mu_b = detail::ssim_blur(bc, 0);
    const ImageF m_aa = detail::ssim_blur(aa, 0), m_bb = detail::ssim_blur(bb, 0),
                 m_ab = detail::ssim_blur(ab, 0);
    double acc = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const double ma = mu_a.at(y, x, 0), mb = mu_b.at(y, x, 0);
        const double va = m_aa.at(y, x, 0) - ma * ma, vb = m_bb.at(y, x, 0) - mb * mb;
        const double cov = m_ab.at(y, x, 0) - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    total += acc / static_cast<double>(a.width * a.height);
  }
  return total / a.channels;
}

}  // namespace gsav
