#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "frl/tensor.hpp"

namespace frl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. One state object per optimised parameter set;
// parameters are updated in place.
template <typename T>
class AdamT {
 public:
  explicit AdamT(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  int64_t steps() const { return t_; }

  // `params` and `grads` must line up index-for-index, with stable order
  // across calls.
  void step(std::vector<TensorT<T>*>& params, const std::vector<const std::vector<T>*>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i]->numel(), T(0));
        v_[i].assign(params[i]->numel(), T(0));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = *params[i]->data;
      const auto& g = *grads[i];
      if (g.size() != p.size())
        throw std::invalid_argument("adam: gradient size does not match parameter");
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < p.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const double mhat = static_cast<double>(m[j]) / bc1;
        const double vhat = static_cast<double>(v[j]) / bc2;
        p[j] = static_cast<T>(static_cast<double>(p[j]) -
                              cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        if (!std::isfinite(static_cast<double>(p[j])))
          throw std::runtime_error("adam: parameter became non-finite");
      }
    }
  }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

using Adam = AdamT<float>;

}  // namespace frl
