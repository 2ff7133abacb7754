#pragma once

#include <algorithm>
#include <cmath>

#include "lumen/common.hpp"
#include "lumen/image.hpp"

// Reinhard's global tone-mapping operator: the scene luminance plane is
// scaled by a/G(E) with G the log-average (geometric mean) luminance, then
// compressed elementwise by X/(1+X). Color is restored afterwards so output
// RGB ratios match the source.

namespace lumen {

struct ToneMapParams {
  double a = 0.18;        // key value; maps average luminance to middle gray
  double epsilon = 1e-6;  // singularity guard inside the log average

  void validate() const {
    if (!(a > 0.0 && a <= 1.0)) throw InvalidArgument(strfmt("key value a=%g outside (0,1]", a));
    if (!(epsilon > 0.0)) throw InvalidArgument(strfmt("epsilon=%g must be positive", epsilon));
  }
};

// Rec. 709 luma weights for linear RGB.
constexpr double kLumaR = 0.2126;
constexpr double kLumaG = 0.7152;
constexpr double kLumaB = 0.0722;

template <class ImageT>
LuminanceMap luminance(const ImageT& img) {
  LuminanceMap out(img.width, img.height);
  const float* p = img.data.data();
  for (double& v : out.values) {
    v = kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2];
    p += 3;
  }
  return out;
}

inline double geometric_mean(const LuminanceMap& map, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument(strfmt("epsilon=%g must be positive", epsilon));
  if (map.values.empty()) throw InvalidArgument("geometric_mean: empty luminance map");
  double sum = 0.0;
  for (double v : map.values) sum += std::log(std::max(v, epsilon));
  return std::exp(sum / static_cast<double>(map.values.size()));
}

inline LuminanceMap reinhard_scale(const LuminanceMap& map, const ToneMapParams& params) {
  params.validate();
  double scale = params.a / geometric_mean(map, params.epsilon);
  LuminanceMap out(map.width, map.height);
  for (std::size_t i = 0; i < map.values.size(); ++i) out.values[i] = scale * map.values[i];
  return out;
}

// X / (1 + X); maps [0, inf) into [0, 1), strictly monotone.
inline LuminanceMap reinhard_curve(const LuminanceMap& x) {
  LuminanceMap out(x.width, x.height);
  for (std::size_t i = 0; i < x.values.size(); ++i) out.values[i] = x.values[i] / (1.0 + x.values[i]);
  return out;
}

// Rebuild RGB around a new luminance plane, keeping per-pixel channel ratios.
// Channels clamp to [0,1]; bright saturated colors may desaturate, which is
// the LDR gamut reality. A pixel whose source luminance is zero becomes
// black when the source is black and the gray (L_out,L_out,L_out) otherwise.
template <class ImageT>
LdrImage reconstruct_color(const ImageT& src, const LuminanceMap& l_in, const LuminanceMap& l_out) {
  if (src.width != l_in.width || src.height != l_in.height || src.width != l_out.width ||
      src.height != l_out.height)
    throw InvalidArgument("reconstruct_color: dimension mismatch");
  LdrImage out(src.width, src.height);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const float* s = src.data.data() + i * 3;
    float* d = out.data.data() + i * 3;
    double li = l_in.values[i];
    double lo = l_out.values[i];
    if (li <= 0.0) {
      bool black = s[0] == 0.0f && s[1] == 0.0f && s[2] == 0.0f;
      double g = black ? 0.0 : std::clamp(lo, 0.0, 1.0);
      d[0] = d[1] = d[2] = static_cast<float>(g);
      continue;
    }
    double ratio = lo / li;
    for (int c = 0; c < 3; ++c)
      d[c] = static_cast<float>(std::clamp(static_cast<double>(s[c]) * ratio, 0.0, 1.0));
  }
  return out;
}

inline LdrImage tonemap_reinhard(const HdrImage& hdr, const ToneMapParams& params = {}) {
  params.validate();
  LuminanceMap l_in = luminance(hdr);
  LuminanceMap l_out = reinhard_curve(reinhard_scale(l_in, params));
  return reconstruct_color(hdr, l_in, l_out);
}

}  // namespace lumen
