#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lumen/common.hpp"
#include "lumen/image.hpp"

namespace lumen {

// Dense NCHW tensor. Training runs at float, gradient checks at double.
template <class T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  T& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  const T& at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  T* plane(int in, int ic) {
    return v.data() + (static_cast<std::size_t>(in) * c + ic) * h * w;
  }
  const T* plane(int in, int ic) const {
    return v.data() + (static_cast<std::size_t>(in) * c + ic) * h * w;
  }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  void fill(T value) { std::fill(v.begin(), v.end(), value); }
};

template <class T>
bool all_finite(const Tensor4<T>& t) {
  for (T x : t.v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

// Packs an RGB raster into a (1,3,H,W) tensor and back.
template <class T>
Tensor4<T> to_tensor(const LdrImage& img) {
  Tensor4<T> t(1, 3, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const float* p = img.px(x, y);
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = static_cast<T>(p[c]);
    }
  return t;
}

template <class T>
LdrImage to_ldr_image(const Tensor4<T>& t, int batch_index = 0) {
  if (t.c != 3) throw InvalidArgument(strfmt("to_ldr_image: want 3 channels, got %d", t.c));
  LdrImage img(t.w, t.h);
  for (int y = 0; y < t.h; ++y)
    for (int x = 0; x < t.w; ++x) {
      float* p = img.px(x, y);
      for (int c = 0; c < 3; ++c) {
        double v = static_cast<double>(t.at(batch_index, c, y, x));
        p[c] = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
      }
    }
  return img;
}

}  // namespace lumen
