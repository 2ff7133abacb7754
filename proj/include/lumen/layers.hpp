#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lumen/common.hpp"
#include "lumen/rng.hpp"
#include "lumen/tensor.hpp"

// Building blocks of the U-Net with explicit forward/backward passes.
// Every layer caches what its backward needs during a training-mode forward;
// eval-mode forwards cache nothing. Weight gradients accumulate until
// zero_grads() so a batch maps to exactly one optimizer step.

namespace lumen {

enum class Mode { kTrain, kEval };

template <class T>
struct ParamRef {
  std::string name;
  std::vector<T>* value = nullptr;
  std::vector<T>* grad = nullptr;  // null for running statistics
  std::vector<int> dims;           // logical shape, row-major
};

// N(0, 2/fan_in) weight initialization.
template <class T>
void he_init(std::vector<T>& weights, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw InvalidArgument("he_init: fan_in must be positive");
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (T& w : weights) w = static_cast<T>(rng.normal(0.0, stddev));
}

// --------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1 (spatial dims preserved)

template <class T>
class Conv3x3 {
 public:
  Conv3x3(int in_ch, int out_ch) : in_ch_(in_ch), out_ch_(out_ch) {
    weight_.assign(static_cast<std::size_t>(out_ch) * in_ch * 9, T(0));
    bias_.assign(out_ch, T(0));
    wgrad_.assign(weight_.size(), T(0));
    bgrad_.assign(bias_.size(), T(0));
  }

  void init(Rng& rng) {
    he_init(weight_, static_cast<std::size_t>(in_ch_) * 9, rng);
    std::fill(bias_.begin(), bias_.end(), T(0));
  }

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    if (x.c != in_ch_)
      throw InvalidArgument(strfmt("conv3x3: input has %d channels, want %d", x.c, in_ch_));
    Tensor4<T> y(x.n, out_ch_, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
      for (int co = 0; co < out_ch_; ++co) {
        T* out = y.plane(n, co);
        const T b = bias_[co];
        for (int i = 0; i < x.h * x.w; ++i) out[i] = b;
        for (int ci = 0; ci < in_ch_; ++ci) {
          const T* in = x.plane(n, ci);
          const T* k = kernel(co, ci);
          accumulate_corr(out, in, k, x.h, x.w);
        }
      }
    if (mode == Mode::kTrain) x_cache_ = x;
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& gy) {
    const Tensor4<T>& x = x_cache_;
    if (x.size() == 0) throw Error("conv3x3: backward without cached forward");
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n) {
      for (int co = 0; co < out_ch_; ++co) {
        const T* g = gy.plane(n, co);
        // bias gradient
        double bsum = 0.0;
        for (int i = 0; i < x.h * x.w; ++i) bsum += static_cast<double>(g[i]);
        bgrad_[co] += static_cast<T>(bsum);
        for (int ci = 0; ci < in_ch_; ++ci) {
          accumulate_scatter(gx.plane(n, ci), g, kernel(co, ci), x.h, x.w);
          accumulate_wgrad(kernel_grad(co, ci), g, x.plane(n, ci), x.h, x.w);
        }
      }
    }
    return gx;
  }

  void zero_grads() {
    std::fill(wgrad_.begin(), wgrad_.end(), T(0));
    std::fill(bgrad_.begin(), bgrad_.end(), T(0));
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight_, &wgrad_, {out_ch_, in_ch_, 3, 3}});
    out.push_back({prefix + ".bias", &bias_, &bgrad_, {out_ch_}});
  }

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  std::vector<T>& weight() { return weight_; }
  std::vector<T>& bias() { return bias_; }

 private:
  T* kernel(int co, int ci) { return weight_.data() + (static_cast<std::size_t>(co) * in_ch_ + ci) * 9; }
  const T* kernel(int co, int ci) const {
    return weight_.data() + (static_cast<std::size_t>(co) * in_ch_ + ci) * 9;
  }
  T* kernel_grad(int co, int ci) {
    return wgrad_.data() + (static_cast<std::size_t>(co) * in_ch_ + ci) * 9;
  }

  // out += corr(in, k) with zero padding 1
  static void accumulate_corr(T* out, const T* in, const T* k, int h, int w) {
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T kv = k[ky * 3 + kx];
        if (kv == T(0)) continue;
        const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
        const int x0 = std::max(0, 1 - kx), x1 = std::min(w, w + 1 - kx);
        for (int y = y0; y < y1; ++y) {
          T* o = out + y * w;
          const T* src = in + (y + ky - 1) * w + (kx - 1);
          for (int x = x0; x < x1; ++x) o[x] += kv * src[x];
        }
      }
  }

  // gx[y+ky-1][x+kx-1] += gy[y][x] * k[ky][kx]
  static void accumulate_scatter(T* gx, const T* gy, const T* k, int h, int w) {
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T kv = k[ky * 3 + kx];
        const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
        const int x0 = std::max(0, 1 - kx), x1 = std::min(w, w + 1 - kx);
        for (int y = y0; y < y1; ++y) {
          const T* g = gy + y * w;
          T* dst = gx + (y + ky - 1) * w + (kx - 1);
          for (int x = x0; x < x1; ++x) dst[x] += g[x] * kv;
        }
      }
  }

  // kg[ky][kx] += sum_yx gy[y][x] * in[y+ky-1][x+kx-1]
  static void accumulate_wgrad(T* kg, const T* gy, const T* in, int h, int w) {
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
        const int x0 = std::max(0, 1 - kx), x1 = std::min(w, w + 1 - kx);
        double acc = 0.0;
        for (int y = y0; y < y1; ++y) {
          const T* g = gy + y * w;
          const T* src = in + (y + ky - 1) * w + (kx - 1);
          for (int x = x0; x < x1; ++x) acc += static_cast<double>(g[x]) * src[x];
        }
        kg[ky * 3 + kx] += static_cast<T>(acc);
      }
  }

  int in_ch_, out_ch_;
  std::vector<T> weight_, bias_, wgrad_, bgrad_;
  Tensor4<T> x_cache_;
};

// --------------------------------------------------------------------------
// Batch normalization over (batch, H, W) per channel

template <class T>
class BatchNorm {
 public:
  explicit BatchNorm(int channels, double delta = 1e-5, double momentum = 0.99)
      : channels_(channels), delta_(delta), momentum_(momentum) {
    scale_.assign(channels, T(1));
    shift_.assign(channels, T(0));
    running_mean_.assign(channels, T(0));
    running_var_.assign(channels, T(1));
    sgrad_.assign(channels, T(0));
    hgrad_.assign(channels, T(0));
  }

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    if (x.c != channels_)
      throw InvalidArgument(strfmt("batchnorm: input has %d channels, want %d", x.c, channels_));
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const std::size_t m = static_cast<std::size_t>(x.n) * x.h * x.w;
    if (mode == Mode::kTrain) {
      if (m < 2)
        throw InvalidArgument("batchnorm: train mode needs more than one element per channel");
      xhat_ = Tensor4<T>(x.n, x.c, x.h, x.w);
      inv_std_.assign(channels_, 0.0);
      for (int c = 0; c < channels_; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int n = 0; n < x.n; ++n) {
          const T* p = x.plane(n, c);
          for (int i = 0; i < x.h * x.w; ++i) {
            sum += p[i];
            sq += static_cast<double>(p[i]) * p[i];
          }
        }
        const double mean = sum / static_cast<double>(m);
        const double var = std::max(0.0, sq / static_cast<double>(m) - mean * mean);  // biased
        const double inv = 1.0 / std::sqrt(var + delta_);
        inv_std_[c] = inv;
        for (int n = 0; n < x.n; ++n) {
          const T* p = x.plane(n, c);
          T* xh = xhat_.plane(n, c);
          T* o = y.plane(n, c);
          for (int i = 0; i < x.h * x.w; ++i) {
            double v = (static_cast<double>(p[i]) - mean) * inv;
            xh[i] = static_cast<T>(v);
            o[i] = static_cast<T>(v * scale_[c] + shift_[c]);
          }
        }
        running_mean_[c] =
            static_cast<T>(momentum_ * running_mean_[c] + (1.0 - momentum_) * mean);
        running_var_[c] = static_cast<T>(momentum_ * running_var_[c] + (1.0 - momentum_) * var);
      }
    } else {
      for (int c = 0; c < channels_; ++c) {
        const double mean = running_mean_[c];
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + delta_);
        for (int n = 0; n < x.n; ++n) {
          const T* p = x.plane(n, c);
          T* o = y.plane(n, c);
          for (int i = 0; i < x.h * x.w; ++i)
            o[i] = static_cast<T>((static_cast<double>(p[i]) - mean) * inv * scale_[c] +
                                  shift_[c]);
        }
      }
    }
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& gy) {
    if (xhat_.size() == 0) throw Error("batchnorm: backward without cached forward");
    const Tensor4<T>& xh = xhat_;
    Tensor4<T> gx(gy.n, gy.c, gy.h, gy.w);
    const double m = static_cast<double>(gy.n) * gy.h * gy.w;
    for (int c = 0; c < channels_; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int n = 0; n < gy.n; ++n) {
        const T* g = gy.plane(n, c);
        const T* x = xh.plane(n, c);
        for (int i = 0; i < gy.h * gy.w; ++i) {
          sum_g += g[i];
          sum_gx += static_cast<double>(g[i]) * x[i];
        }
      }
      sgrad_[c] += static_cast<T>(sum_gx);
      hgrad_[c] += static_cast<T>(sum_g);
      const double inv = inv_std_[c];
      const double gamma = scale_[c];
      for (int n = 0; n < gy.n; ++n) {
        const T* g = gy.plane(n, c);
        const T* x = xh.plane(n, c);
        T* o = gx.plane(n, c);
        for (int i = 0; i < gy.h * gy.w; ++i) {
          double d = m * static_cast<double>(g[i]) - sum_g - static_cast<double>(x[i]) * sum_gx;
          o[i] = static_cast<T>(gamma * inv * d / m);
        }
      }
    }
    return gx;
  }

  void zero_grads() {
    std::fill(sgrad_.begin(), sgrad_.end(), T(0));
    std::fill(hgrad_.begin(), hgrad_.end(), T(0));
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".scale", &scale_, &sgrad_, {channels_}});
    out.push_back({prefix + ".shift", &shift_, &hgrad_, {channels_}});
  }

  void collect_state(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".running_mean", &running_mean_, nullptr, {channels_}});
    out.push_back({prefix + ".running_var", &running_var_, nullptr, {channels_}});
  }

  std::vector<T>& scale() { return scale_; }
  std::vector<T>& shift() { return shift_; }
  std::vector<T>& running_mean() { return running_mean_; }
  std::vector<T>& running_var() { return running_var_; }

 private:
  int channels_;
  double delta_, momentum_;
  std::vector<T> scale_, shift_, running_mean_, running_var_, sgrad_, hgrad_;
  Tensor4<T> xhat_;
  std::vector<double> inv_std_;
};

// --------------------------------------------------------------------------
// 2x2 max pooling, stride 2; ties take the first element in row-major order

template <class T>
class MaxPool2 {
 public:
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
      throw InvalidArgument(strfmt("maxpool2x2: spatial dims %dx%d must be even", x.h, x.w));
    Tensor4<T> y(x.n, x.c, x.h / 2, x.w / 2);
    argmax_.assign(y.size(), 0);
    in_h_ = x.h;
    in_w_ = x.w;
    in_n_ = x.n;
    in_c_ = x.c;
    std::size_t oi = 0;
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c) {
        const T* in = x.plane(n, c);
        T* out = y.plane(n, c);
        for (int oy = 0; oy < y.h; ++oy)
          for (int ox = 0; ox < y.w; ++ox, ++oi) {
            int base_y = oy * 2, base_x = ox * 2;
            T best = in[base_y * x.w + base_x];
            int best_idx = base_y * x.w + base_x;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                int idx = (base_y + dy) * x.w + (base_x + dx);
                if (in[idx] > best) {  // strict: first max wins
                  best = in[idx];
                  best_idx = idx;
                }
              }
            out[oy * y.w + ox] = best;
            argmax_[oi] = best_idx;
          }
      }
    if (mode == Mode::kEval) argmax_.clear();
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& gy) {
    if (argmax_.empty()) throw Error("maxpool2x2: backward without cached forward");
    Tensor4<T> gx(in_n_, in_c_, in_h_, in_w_);
    std::size_t oi = 0;
    for (int n = 0; n < gy.n; ++n)
      for (int c = 0; c < gy.c; ++c) {
        const T* g = gy.plane(n, c);
        T* out = gx.plane(n, c);
        for (int i = 0; i < gy.h * gy.w; ++i, ++oi) out[argmax_[oi]] += g[i];
      }
    return gx;
  }

 private:
  std::vector<int> argmax_;
  int in_h_ = 0, in_w_ = 0, in_n_ = 0, in_c_ = 0;
};

// --------------------------------------------------------------------------
// 4x4 transposed convolution, stride 2, padding 1 (exactly doubles H and W)

template <class T>
class TConv4x4 {
 public:
  TConv4x4(int in_ch, int out_ch) : in_ch_(in_ch), out_ch_(out_ch) {
    weight_.assign(static_cast<std::size_t>(in_ch) * out_ch * 16, T(0));
    bias_.assign(out_ch, T(0));
    wgrad_.assign(weight_.size(), T(0));
    bgrad_.assign(bias_.size(), T(0));
  }

  void init(Rng& rng) {
    he_init(weight_, static_cast<std::size_t>(in_ch_) * 16, rng);
    std::fill(bias_.begin(), bias_.end(), T(0));
  }

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    if (x.c != in_ch_)
      throw InvalidArgument(strfmt("tconv4x4: input has %d channels, want %d", x.c, in_ch_));
    const int oh = x.h * 2, ow = x.w * 2;
    Tensor4<T> y(x.n, out_ch_, oh, ow);
    for (int n = 0; n < x.n; ++n) {
      for (int co = 0; co < out_ch_; ++co) {
        T* out = y.plane(n, co);
        const T b = bias_[co];
        for (int i = 0; i < oh * ow; ++i) out[i] = b;
      }
      for (int ci = 0; ci < in_ch_; ++ci) {
        const T* in = x.plane(n, ci);
        for (int co = 0; co < out_ch_; ++co) {
          T* out = y.plane(n, co);
          const T* k = kernel(ci, co);
          for (int ky = 0; ky < 4; ++ky)
            for (int kx = 0; kx < 4; ++kx) {
              const T kv = k[ky * 4 + kx];
              if (kv == T(0)) continue;
              for (int iy = 0; iy < x.h; ++iy) {
                const int oy = 2 * iy + ky - 1;
                if (oy < 0 || oy >= oh) continue;
                const T* src = in + iy * x.w;
                T* dst = out + oy * ow + (kx - 1);
                for (int ix = 0; ix < x.w; ++ix) {
                  const int ox = 2 * ix + kx - 1;
                  if (ox < 0 || ox >= ow) continue;
                  dst[2 * ix] += kv * src[ix];
                }
              }
            }
        }
      }
    }
    if (mode == Mode::kTrain) x_cache_ = x;
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& gy) {
    const Tensor4<T>& x = x_cache_;
    if (x.size() == 0) throw Error("tconv4x4: backward without cached forward");
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    const int oh = gy.h, ow = gy.w;
    for (int n = 0; n < x.n; ++n) {
      for (int co = 0; co < out_ch_; ++co) {
        const T* g = gy.plane(n, co);
        double bsum = 0.0;
        for (int i = 0; i < oh * ow; ++i) bsum += static_cast<double>(g[i]);
        bgrad_[co] += static_cast<T>(bsum);
      }
      for (int ci = 0; ci < in_ch_; ++ci) {
        const T* in = x.plane(n, ci);
        T* gout = gx.plane(n, ci);
        for (int co = 0; co < out_ch_; ++co) {
          const T* g = gy.plane(n, co);
          const T* k = kernel(ci, co);
          T* kg = kernel_grad(ci, co);
          for (int ky = 0; ky < 4; ++ky)
            for (int kx = 0; kx < 4; ++kx) {
              const T kv = k[ky * 4 + kx];
              double wacc = 0.0;
              for (int iy = 0; iy < x.h; ++iy) {
                const int oy = 2 * iy + ky - 1;
                if (oy < 0 || oy >= oh) continue;
                const T* grow = g + oy * ow;
                const T* irow = in + iy * x.w;
                T* gorow = gout + iy * x.w;
                for (int ix = 0; ix < x.w; ++ix) {
                  const int ox = 2 * ix + kx - 1;
                  if (ox < 0 || ox >= ow) continue;
                  gorow[ix] += grow[ox] * kv;
                  wacc += static_cast<double>(irow[ix]) * grow[ox];
                }
              }
              kg[ky * 4 + kx] += static_cast<T>(wacc);
            }
        }
      }
    }
    return gx;
  }

  void zero_grads() {
    std::fill(wgrad_.begin(), wgrad_.end(), T(0));
    std::fill(bgrad_.begin(), bgrad_.end(), T(0));
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &weight_, &wgrad_, {in_ch_, out_ch_, 4, 4}});
    out.push_back({prefix + ".bias", &bias_, &bgrad_, {out_ch_}});
  }

  std::vector<T>& weight() { return weight_; }
  std::vector<T>& bias() { return bias_; }

 private:
  T* kernel(int ci, int co) {
    return weight_.data() + (static_cast<std::size_t>(ci) * out_ch_ + co) * 16;
  }
  T* kernel_grad(int ci, int co) {
    return wgrad_.data() + (static_cast<std::size_t>(ci) * out_ch_ + co) * 16;
  }

  int in_ch_, out_ch_;
  std::vector<T> weight_, bias_, wgrad_, bgrad_;
  Tensor4<T> x_cache_;
};

// --------------------------------------------------------------------------
// Activations

template <class T>
class ReLU {
 public:
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    if (mode == Mode::kTrain) mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      bool pos = x.v[i] > T(0);
      y.v[i] = pos ? x.v[i] : T(0);
      if (mode == Mode::kTrain) mask_[i] = pos;
    }
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& gy) {
    if (mask_.size() != gy.size()) throw Error("relu: backward without cached forward");
    Tensor4<T> gx(gy.n, gy.c, gy.h, gy.w);
    for (std::size_t i = 0; i < gy.size(); ++i) gx.v[i] = mask_[i] ? gy.v[i] : T(0);
    return gx;
  }

 private:
  std::vector<std::uint8_t> mask_;
};

template <class T>
class Sigmoid {
 public:
  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i)
      y.v[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x.v[i]))));
    if (mode == Mode::kTrain) y_cache_ = y;
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& gy) {
    if (y_cache_.size() != gy.size()) throw Error("sigmoid: backward without cached forward");
    Tensor4<T> gx(gy.n, gy.c, gy.h, gy.w);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const double s = y_cache_.v[i];
      gx.v[i] = static_cast<T>(static_cast<double>(gy.v[i]) * s * (1.0 - s));
    }
    return gx;
  }

 private:
  Tensor4<T> y_cache_;
};

}  // namespace lumen
