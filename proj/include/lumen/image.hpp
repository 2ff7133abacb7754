#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lumen/common.hpp"

namespace lumen {

// Linear-radiance RGB raster. Components are unitless relative radiance,
// finite and non-negative; stored row-major as (R,G,B) float triplets.
struct HdrImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  HdrImage() = default;
  HdrImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  float* px(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* px(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Display-referred RGB raster, components in [0,1].
struct LdrImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;
  int bit_depth_hint = 8;

  LdrImage() = default;
  LdrImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0f) {}

  float* px(int x, int y) { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* px(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Scalar per-pixel plane; carries luminance and exposure fields at 64-bit.
struct LuminanceMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  LuminanceMap() = default;
  LuminanceMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline void validate(const HdrImage& img, const char* what = "HdrImage") {
  if (img.width < 1 || img.height < 1)
    throw InvalidArgument(strfmt("%s: dimensions %dx%d invalid", what, img.width, img.height));
  if (img.data.size() != img.pixel_count() * 3)
    throw InvalidArgument(strfmt("%s: data length %zu != %zu", what, img.data.size(),
                                 img.pixel_count() * 3));
  for (float v : img.data)
    if (!std::isfinite(v) || v < 0.0f)
      throw InvalidArgument(strfmt("%s: component %g outside [0, inf)", what, v));
}

inline void validate(const LdrImage& img, const char* what = "LdrImage") {
  if (img.width < 1 || img.height < 1)
    throw InvalidArgument(strfmt("%s: dimensions %dx%d invalid", what, img.width, img.height));
  if (img.data.size() != img.pixel_count() * 3)
    throw InvalidArgument(strfmt("%s: data length %zu != %zu", what, img.data.size(),
                                 img.pixel_count() * 3));
  for (float v : img.data)
    if (!(v >= 0.0f && v <= 1.0f))
      throw InvalidArgument(strfmt("%s: component %g outside [0,1]", what, v));
}

}  // namespace lumen
