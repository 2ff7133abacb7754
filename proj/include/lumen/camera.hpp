#pragma once

#include <algorithm>
#include <cmath>

#include "lumen/common.hpp"
#include "lumen/image.hpp"
#include "lumen/rng.hpp"
#include "lumen/tonemap.hpp"

// The virtual camera and the geometric augmentations that feed it. A square
// crop of an HDR image is resized to the network input size, optionally
// flipped, exposed with a random shutter speed, and pushed through the
// parametric response min((1+eta) X^gamma / (X^gamma + eta), 1).

namespace lumen {

struct CameraParams {
  double eta = 0.6;    // saturation knee
  double gamma = 0.9;  // response exponent

  void validate() const {
    if (!(eta > 0.0)) throw InvalidArgument(strfmt("eta=%g must be positive", eta));
    if (!(gamma > 0.0)) throw InvalidArgument(strfmt("gamma=%g must be positive", gamma));
  }
};

struct AugmentSpec {
  double crop_fraction = 0.5;  // of the source's short side, in [0.2, 0.6]
  int crop_row = 0;
  int crop_col = 0;
  bool flip_vertical = false;
  bool flip_horizontal = false;
  int out_size = 512;

  int crop_side(int src_w, int src_h) const {
    int short_side = std::min(src_w, src_h);
    return static_cast<int>(std::floor(crop_fraction * short_side));
  }
};

// Square crop followed by bilinear resample to out_size x out_size.
// Bilinear output is a convex combination, so values stay inside the crop's
// [min, max]; a crop that already matches out_size copies pixels bit-exactly.
inline HdrImage crop_resize(const HdrImage& src, const AugmentSpec& spec) {
  validate(src, "crop_resize");
  int side = spec.crop_side(src.width, src.height);
  if (side < 1) throw InvalidArgument(strfmt("crop side %d from fraction %g degenerates", side,
                                             spec.crop_fraction));
  if (spec.out_size < 1) throw InvalidArgument("out_size must be >= 1");
  if (spec.crop_row < 0 || spec.crop_col < 0 || spec.crop_row + side > src.height ||
      spec.crop_col + side > src.width)
    throw InvalidArgument(strfmt("crop %dx%d at (%d,%d) exceeds %dx%d source", side, side,
                                 spec.crop_row, spec.crop_col, src.width, src.height));

  HdrImage out(spec.out_size, spec.out_size);
  const double step = static_cast<double>(side) / spec.out_size;
  for (int oy = 0; oy < spec.out_size; ++oy) {
    double sy = (oy + 0.5) * step - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(side - 1));
    int y0 = static_cast<int>(sy);
    int y1 = std::min(y0 + 1, side - 1);
    double fy = sy - y0;
    for (int ox = 0; ox < spec.out_size; ++ox) {
      double sx = (ox + 0.5) * step - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(side - 1));
      int x0 = static_cast<int>(sx);
      int x1 = std::min(x0 + 1, side - 1);
      double fx = sx - x0;
      const float* p00 = src.px(spec.crop_col + x0, spec.crop_row + y0);
      const float* p01 = src.px(spec.crop_col + x1, spec.crop_row + y0);
      const float* p10 = src.px(spec.crop_col + x0, spec.crop_row + y1);
      const float* p11 = src.px(spec.crop_col + x1, spec.crop_row + y1);
      float* d = out.px(ox, oy);
      for (int c = 0; c < 3; ++c) {
        double top = p00[c] + (p01[c] - p00[c]) * fx;
        double bot = p10[c] + (p11[c] - p10[c]) * fx;
        d[c] = static_cast<float>(top + (bot - top) * fy);
      }
    }
  }
  return out;
}

inline HdrImage flip(const HdrImage& src, bool vertical, bool horizontal) {
  HdrImage out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    int sy = vertical ? src.height - 1 - y : y;
    for (int x = 0; x < src.width; ++x) {
      int sx = horizontal ? src.width - 1 - x : x;
      const float* s = src.px(sx, sy);
      float* d = out.px(x, y);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
    }
  }
  return out;
}

// Exposure X = dt * L(patch) with shutter speed dt = 0.18 * 2^v / G(patch).
inline LuminanceMap compute_exposure(const HdrImage& patch, double v, double epsilon) {
  LuminanceMap lum = luminance(patch);
  double dt = 0.18 * std::exp2(v) / geometric_mean(lum, epsilon);
  LuminanceMap out(lum.width, lum.height);
  for (std::size_t i = 0; i < lum.values.size(); ++i) out.values[i] = dt * lum.values[i];
  return out;
}

// min((1+eta) X^gamma / (X^gamma + eta), 1): monotone nondecreasing, [0,1].
inline LuminanceMap virtual_camera(const LuminanceMap& x, const CameraParams& params) {
  params.validate();
  LuminanceMap out(x.width, x.height);
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    double xg = std::pow(x.values[i], params.gamma);
    out.values[i] = std::min((1.0 + params.eta) * xg / (xg + params.eta), 1.0);
  }
  return out;
}

struct CameraSample {
  CameraParams cam;
  double v = 0.0;  // exposure offset in stops
};

// eta ~ N(0.6, var 0.1), gamma ~ N(0.9, var 0.1), v ~ U[-4,4]. The normals
// are resampled until > 0.05 because nonpositive values break the response
// formula. Draw order is fixed: v, then eta, then gamma.
inline CameraSample sample_camera(Rng& rng) {
  constexpr double kStd = 0.31622776601683794;  // sqrt(0.1)
  constexpr double kFloor = 0.05;
  CameraSample s;
  s.v = rng.uniform(-4.0, 4.0);
  do {
    s.cam.eta = rng.normal(0.6, kStd);
  } while (s.cam.eta <= kFloor);
  do {
    s.cam.gamma = rng.normal(0.9, kStd);
  } while (s.cam.gamma <= kFloor);
  return s;
}

// Crop fraction ~ U[0.2, 0.6]; origin uniform over valid placements; both
// flips with probability 0.5. Requires a source of at least 5x5 pixels so
// the floored crop side stays >= 1.
inline AugmentSpec sample_augment(Rng& rng, int src_w, int src_h, int out_size) {
  if (std::min(src_w, src_h) < 5)
    throw InvalidArgument(strfmt("source %dx%d too small to crop (need >= 5x5)", src_w, src_h));
  AugmentSpec spec;
  spec.out_size = out_size;
  spec.crop_fraction = rng.uniform(0.2, 0.6);
  int side = spec.crop_side(src_w, src_h);
  spec.crop_row = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(src_h - side + 1)));
  spec.crop_col = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(src_w - side + 1)));
  spec.flip_vertical = rng.uniform01() < 0.5;
  spec.flip_horizontal = rng.uniform01() < 0.5;
  return spec;
}

}  // namespace lumen
