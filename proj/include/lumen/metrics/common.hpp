#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lumen/common.hpp"
#include "lumen/image.hpp"
#include "lumen/tonemap.hpp"

namespace lumen::metrics {

// Row-major double matrix for metric internals.
struct Mat {
  int h = 0, w = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0.0) {}

  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  std::size_t size() const { return v.size(); }
};

inline double mean(const Mat& m) {
  double s = 0.0;
  for (double x : m.v) s += x;
  return s / static_cast<double>(m.v.size());
}

// Luminance in the 8-bit range [0, 255] used by both metrics.
inline Mat gray255(const LdrImage& img) {
  Mat out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float* p = img.px(x, y);
      out.at(y, x) = 255.0 * (kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2]);
    }
  return out;
}

inline Mat gray_linear(const HdrImage& img) {
  Mat out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float* p = img.px(x, y);
      out.at(y, x) = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
    }
  return out;
}

// Normalized rotationally symmetric Gaussian, like fspecial('gaussian').
inline Mat gaussian_kernel(int size, double sigma) {
  Mat k(size, size);
  const double half = (size - 1) / 2.0;
  double sum = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double dy = y - half, dx = x - half;
      k.at(y, x) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      sum += k.at(y, x);
    }
  for (double& v : k.v) v /= sum;
  return k;
}

// 2-D correlation, no padding; output shrinks by kernel-1.
inline Mat correlate_valid(const Mat& img, const Mat& k) {
  if (img.h < k.h || img.w < k.w) throw InvalidArgument("correlate_valid: kernel exceeds image");
  Mat out(img.h - k.h + 1, img.w - k.w + 1);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double acc = 0.0;
      for (int ky = 0; ky < k.h; ++ky)
        for (int kx = 0; kx < k.w; ++kx) acc += k.at(ky, kx) * img.at(y + ky, x + kx);
      out.at(y, x) = acc;
    }
  return out;
}

// 2-D correlation with replicated borders; same-size output (odd kernels).
inline Mat correlate_same_replicate(const Mat& img, const Mat& k) {
  const int cy = k.h / 2, cx = k.w / 2;
  Mat out(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int ky = 0; ky < k.h; ++ky) {
        int sy = std::clamp(y + ky - cy, 0, img.h - 1);
        for (int kx = 0; kx < k.w; ++kx) {
          int sx = std::clamp(x + kx - cx, 0, img.w - 1);
          acc += k.at(ky, kx) * img.at(sy, sx);
        }
      }
      out.at(y, x) = acc;
    }
  return out;
}

// 2x2 mean with symmetric padding, then stride-2 sampling at even indices.
// This is the multi-scale downsampler of the structural-fidelity pyramid.
inline Mat downsample2_smoothed(const Mat& img) {
  Mat out((img.h + 1) / 2, (img.w + 1) / 2);
  for (int oy = 0; oy < out.h; ++oy)
    for (int ox = 0; ox < out.w; ++ox) {
      int y = oy * 2, x = ox * 2;
      int y1 = std::min(y + 1, img.h - 1), x1 = std::min(x + 1, img.w - 1);
      out.at(oy, ox) = 0.25 * (img.at(y, x) + img.at(y, x1) + img.at(y1, x) + img.at(y1, x1));
    }
  return out;
}

// Non-overlapping 2x2 box average; odd trailing rows/cols are dropped.
inline Mat box_downsample_half(const Mat& img) {
  Mat out(img.h / 2, img.w / 2);
  for (int oy = 0; oy < out.h; ++oy)
    for (int ox = 0; ox < out.w; ++ox) {
      int y = oy * 2, x = ox * 2;
      out.at(oy, ox) =
          0.25 * (img.at(y, x) + img.at(y, x + 1) + img.at(y + 1, x) + img.at(y + 1, x + 1));
    }
  return out;
}

inline double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

inline double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
}

inline double beta_pdf(double x, double a, double b) {
  if (x < 0.0 || x > 1.0) return 0.0;
  double log_b = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_b);
}

}  // namespace lumen::metrics
