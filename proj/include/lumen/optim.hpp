#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lumen/common.hpp"
#include "lumen/layers.hpp"
#include "lumen/tensor.hpp"

namespace lumen {

// Mean squared error over all elements; gradient is 2(pred - target)/N.
template <class T>
struct MseResult {
  double loss = 0.0;
  Tensor4<T> grad;
};

template <class T>
MseResult<T> mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
  if (!pred.same_shape(target))
    throw InvalidArgument(strfmt("mse_loss: shape (%d,%d,%d,%d) vs (%d,%d,%d,%d)", pred.n,
                                 pred.c, pred.h, pred.w, target.n, target.c, target.h,
                                 target.w));
  MseResult<T> r;
  r.grad = Tensor4<T>(pred.n, pred.c, pred.h, pred.w);
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
    acc += d * d;
    r.grad.v[i] = static_cast<T>(2.0 * d / n);
  }
  r.loss = acc / n;
  return r;
}

struct AdamConfig {
  double alpha = 0.002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double delta = 1e-8;
};

// Adam with bias correction. Moment buffers align with the parameter list
// order, which is stable across runs and checkpoints.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return t_; }

  void step(const std::vector<ParamRef<T>>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].value->size(), T(0));
        v_[i].assign(params[i].value->size(), T(0));
      }
    }
    if (m_.size() != params.size()) throw InvalidArgument("adam: parameter list changed size");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const ParamRef<T>& p = params[i];
      if (!p.grad) continue;
      std::vector<T>& theta = *p.value;
      std::vector<T>& g = *p.grad;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        if (!std::isfinite(gk))
          throw Error(strfmt("adam: non-finite gradient in '%s'", p.name.c_str()));
        const double m = cfg_.beta1 * static_cast<double>(m_[i][k]) + (1.0 - cfg_.beta1) * gk;
        const double v = cfg_.beta2 * static_cast<double>(v_[i][k]) + (1.0 - cfg_.beta2) * gk * gk;
        m_[i][k] = static_cast<T>(m);
        v_[i][k] = static_cast<T>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        theta[k] = static_cast<T>(static_cast<double>(theta[k]) -
                                  cfg_.alpha * mhat / (std::sqrt(vhat) + cfg_.delta));
      }
    }
  }

  // Serialized moment buffers, for checkpoint resume.
  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  void set_step_count(std::uint64_t t) { t_ = t; }
  void ensure_buffers(const std::vector<ParamRef<T>>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].value->size(), T(0));
        v_[i].assign(params[i].value->size(), T(0));
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace lumen
