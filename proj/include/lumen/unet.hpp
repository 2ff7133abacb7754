#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lumen/common.hpp"
#include "lumen/layers.hpp"
#include "lumen/rng.hpp"
#include "lumen/tensor.hpp"

// Encoder-decoder network with skip connections. Each level runs a block of
// two (conv 3x3 -> ReLU -> batch norm) stages; 2x2 max pooling halves the
// resolution between encoder levels and 4x4 stride-2 transposed convolutions
// (followed by ReLU) double it again on the way up. The transposed-conv
// output is concatenated with the mirrored encoder output before each
// decoder block. A final 3-filter 3x3 convolution plus sigmoid produces the
// output image. At full scale the block widths run
// 32, 64, 128, 256, 512, 1024, 512, 256, 128, 64, 32.

namespace lumen {

struct UNetConfig {
  int in_channels = 3;
  int base_width = 32;
  int depth = 6;        // encoder levels including the bottleneck
  int input_size = 512; // nominal training resolution

  int width_at(int level) const { return base_width << level; }
  int downsample_factor() const { return 1 << (depth - 1); }

  void validate() const {
    if (in_channels < 1) throw InvalidArgument("UNetConfig: in_channels must be >= 1");
    if (base_width < 1) throw InvalidArgument("UNetConfig: base_width must be >= 1");
    if (depth < 2) throw InvalidArgument("UNetConfig: depth must be >= 2");
    if (input_size < downsample_factor() || input_size % downsample_factor() != 0)
      throw InvalidArgument(strfmt("UNetConfig: input_size %d not divisible by %d", input_size,
                                   downsample_factor()));
  }

  // Widths of the conv blocks in forward order: encoder, bottleneck, decoder.
  std::vector<int> channel_trace() const {
    std::vector<int> trace;
    for (int l = 0; l < depth; ++l) trace.push_back(width_at(l));
    for (int l = depth - 2; l >= 0; --l) trace.push_back(width_at(l));
    return trace;
  }
};

namespace detail {

// Concatenates b's channels after a's.
template <class T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw InvalidArgument("concat: spatial/batch dims disagree");
  Tensor4<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int n = 0; n < a.n; ++n) {
    for (int c = 0; c < a.c; ++c)
      std::copy_n(a.plane(n, c), static_cast<std::size_t>(a.h) * a.w, out.plane(n, c));
    for (int c = 0; c < b.c; ++c)
      std::copy_n(b.plane(n, c), static_cast<std::size_t>(b.h) * b.w, out.plane(n, a.c + c));
  }
  return out;
}

template <class T>
void split_channels(const Tensor4<T>& g, int c_first, Tensor4<T>& ga, Tensor4<T>& gb) {
  ga = Tensor4<T>(g.n, c_first, g.h, g.w);
  gb = Tensor4<T>(g.n, g.c - c_first, g.h, g.w);
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < c_first; ++c)
      std::copy_n(g.plane(n, c), static_cast<std::size_t>(g.h) * g.w, ga.plane(n, c));
    for (int c = 0; c < g.c - c_first; ++c)
      std::copy_n(g.plane(n, c_first + c), static_cast<std::size_t>(g.h) * g.w, gb.plane(n, c));
  }
}

}  // namespace detail

// Two stages of conv -> ReLU -> batch norm with a common filter count.
// Batch norm sits after the activation.
template <class T>
class ConvBlock {
 public:
  ConvBlock(int in_ch, int out_ch)
      : conv1_(in_ch, out_ch), bn1_(out_ch), conv2_(out_ch, out_ch), bn2_(out_ch) {}

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
  }

  Tensor4<T> forward(const Tensor4<T>& x, Mode mode) {
    Tensor4<T> t = bn1_.forward(relu1_.forward(conv1_.forward(x, mode), mode), mode);
    return bn2_.forward(relu2_.forward(conv2_.forward(t, mode), mode), mode);
  }

  Tensor4<T> backward(const Tensor4<T>& gy) {
    Tensor4<T> g = conv2_.backward(relu2_.backward(bn2_.backward(gy)));
    return conv1_.backward(relu1_.backward(bn1_.backward(g)));
  }

  void zero_grads() {
    conv1_.zero_grads();
    bn1_.zero_grads();
    conv2_.zero_grads();
    bn2_.zero_grads();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    conv1_.collect_params(prefix + ".conv1", out);
    bn1_.collect_params(prefix + ".bn1", out);
    conv2_.collect_params(prefix + ".conv2", out);
    bn2_.collect_params(prefix + ".bn2", out);
  }

  void collect_state(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    bn1_.collect_state(prefix + ".bn1", out);
    bn2_.collect_state(prefix + ".bn2", out);
  }

  Conv3x3<T>& conv1() { return conv1_; }
  Conv3x3<T>& conv2() { return conv2_; }
  BatchNorm<T>& bn1() { return bn1_; }
  BatchNorm<T>& bn2() { return bn2_; }

 private:
  Conv3x3<T> conv1_;
  ReLU<T> relu1_;
  BatchNorm<T> bn1_;
  Conv3x3<T> conv2_;
  ReLU<T> relu2_;
  BatchNorm<T> bn2_;
};

template <class T>
class UNet {
 public:
  explicit UNet(const UNetConfig& cfg) : cfg_(cfg), out_conv_(cfg.base_width, 3) {
    cfg_.validate();
    for (int l = 0; l < cfg_.depth; ++l) {
      int in_ch = l == 0 ? cfg_.in_channels : cfg_.width_at(l - 1);
      enc_.push_back(std::make_unique<ConvBlock<T>>(in_ch, cfg_.width_at(l)));
    }
    pools_.resize(cfg_.depth - 1);
    for (int i = 0; i < cfg_.depth - 1; ++i) {
      int from = cfg_.width_at(cfg_.depth - 1 - i);
      int to = cfg_.width_at(cfg_.depth - 2 - i);
      ups_.push_back(std::make_unique<TConv4x4<T>>(from, to));
      dec_.push_back(std::make_unique<ConvBlock<T>>(2 * to, to));
    }
    up_relus_.resize(cfg_.depth - 1);
  }

  UNet(const UNetConfig& cfg, Rng& rng) : UNet(cfg) { init(rng); }

  void init(Rng& rng) {
    for (auto& b : enc_) b->init(rng);
    for (auto& u : ups_) u->init(rng);
    for (auto& b : dec_) b->init(rng);
    out_conv_.init(rng);
  }

  const UNetConfig& config() const { return cfg_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  Tensor4<T> forward(const Tensor4<T>& x) {
    if (x.c != cfg_.in_channels)
      throw InvalidArgument(strfmt("unet: input has %d channels, want %d", x.c,
                                   cfg_.in_channels));
    const int f = cfg_.downsample_factor();
    if (x.h % f != 0 || x.w % f != 0)
      throw InvalidArgument(strfmt("unet: spatial dims %dx%d must be multiples of %d", x.h, x.w,
                                   f));
    std::vector<Tensor4<T>> skips;
    Tensor4<T> t = x;
    for (int l = 0; l < cfg_.depth - 1; ++l) {
      t = enc_[l]->forward(t, mode_);
      skips.push_back(t);
      t = pools_[l].forward(t, mode_);
    }
    t = enc_[cfg_.depth - 1]->forward(t, mode_);
    skip_channels_.clear();
    for (int i = 0; i < cfg_.depth - 1; ++i) {
      t = up_relus_[i].forward(ups_[i]->forward(t, mode_), mode_);
      const Tensor4<T>& skip = skips[cfg_.depth - 2 - i];
      skip_channels_.push_back(t.c);
      t = detail::concat_channels(t, skip);
      t = dec_[i]->forward(t, mode_);
    }
    t = out_conv_.forward(t, mode_);
    return out_act_.forward(t, mode_);
  }

  // Returns the gradient w.r.t. the input; parameter gradients accumulate
  // into the layers (zero_grads() first for a fresh step).
  Tensor4<T> backward(const Tensor4<T>& grad_out) {
    Tensor4<T> g = out_conv_.backward(out_act_.backward(grad_out));
    std::vector<Tensor4<T>> skip_grads(cfg_.depth - 1);
    for (int i = cfg_.depth - 2; i >= 0; --i) {
      g = dec_[i]->backward(g);
      Tensor4<T> g_up, g_skip;
      detail::split_channels(g, skip_channels_[i], g_up, g_skip);
      skip_grads[cfg_.depth - 2 - i] = std::move(g_skip);
      g = ups_[i]->backward(up_relus_[i].backward(g_up));
    }
    for (int l = cfg_.depth - 2; l >= 0; --l) {
      g = pools_[l].backward(g);
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += skip_grads[l].v[i];
      g = enc_[l]->backward(g);
    }
    return g;
  }

  void zero_grads() {
    for (auto& b : enc_) b->zero_grads();
    for (auto& u : ups_) u->zero_grads();
    for (auto& b : dec_) b->zero_grads();
    out_conv_.zero_grads();
  }

  // Trainable parameters, in a stable order shared by optimizer state and
  // checkpoints.
  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (int l = 0; l < cfg_.depth; ++l) enc_[l]->collect_params(strfmt("enc%d", l), out);
    for (int i = 0; i < cfg_.depth - 1; ++i) {
      ups_[i]->collect_params(strfmt("up%d", i), out);
      dec_[i]->collect_params(strfmt("dec%d", i), out);
    }
    out_conv_.collect_params("out", out);
    return out;
  }

  // Parameters plus batch-norm running statistics; everything a checkpoint
  // must carry to reproduce inference and resumed training.
  std::vector<ParamRef<T>> state() {
    std::vector<ParamRef<T>> out = params();
    for (int l = 0; l < cfg_.depth; ++l) enc_[l]->collect_state(strfmt("enc%d", l), out);
    for (int i = 0; i < cfg_.depth - 1; ++i) dec_[i]->collect_state(strfmt("dec%d", i), out);
    return out;
  }

  ConvBlock<T>& encoder_block(int l) { return *enc_[l]; }
  ConvBlock<T>& decoder_block(int i) { return *dec_[i]; }
  TConv4x4<T>& up(int i) { return *ups_[i]; }
  Conv3x3<T>& out_conv() { return out_conv_; }

 private:
  UNetConfig cfg_;
  std::vector<std::unique_ptr<ConvBlock<T>>> enc_;
  std::vector<MaxPool2<T>> pools_;
  std::vector<std::unique_ptr<TConv4x4<T>>> ups_;
  std::vector<ReLU<T>> up_relus_;
  std::vector<std::unique_ptr<ConvBlock<T>>> dec_;
  Conv3x3<T> out_conv_;
  Sigmoid<T> out_act_;
  Mode mode_ = Mode::kTrain;
  std::vector<int> skip_channels_;
};

}  // namespace lumen
