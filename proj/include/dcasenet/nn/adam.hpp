// SPDX-License-Identifier: Apache-2.0
//
// Adam with bias correction:
//   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
//   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// The epsilon sits outside the square root. Gradients are zeroed after a
// step so losses can accumulate freely between steps.

#pragma once

#include <cmath>
#include <map>

#include "dcasenet/nn/tensor.hpp"

namespace dcasenet::nn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates for one parameter tensor.
template <typename S>
struct AdamSlot {
  VecX<S> m, v;
};

/// One Adam update on a bare tensor pair; the optimizer class applies this
/// per parameter. Exposed for direct recurrence tests.
template <typename S>
void adam_step(VecX<S>& theta, const VecX<S>& grad, VecX<S>& m, VecX<S>& v, long long t,
               const AdamConfig& cfg = {}) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  m = (S(cfg.beta1) * m.array() + S(1.0 - cfg.beta1) * grad.array()).matrix();
  v = (S(cfg.beta2) * v.array() + S(1.0 - cfg.beta2) * grad.array().square()).matrix();
  theta.array() -=
      S(cfg.lr) * (m.array() / S(bc1)) / ((v.array() / S(bc2)).sqrt() + S(cfg.eps));
}

template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(ParamRefs<S> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (Parameter<S>* p : params_) {
      if (!p->trainable) continue;
      slots_[p->name] = AdamSlot<S>{VecX<S>::Zero(p->value.numel()),
                                    VecX<S>::Zero(p->value.numel())};
    }
  }

  /// Applies one update from the accumulated gradients, then zeroes them.
  void step() {
    ++t_;
    for (Parameter<S>* p : params_) {
      if (!p->trainable) {
        p->zero_grad();
        continue;
      }
      require(p->grad.all_finite(), Errc::non_finite_gradient,
              "gradient of " + p->name + " is not finite");
      AdamSlot<S>& s = slots_.at(p->name);
      adam_step(p->value.flat(), p->grad.flat(), s.m, s.v, t_, cfg_);
      p->zero_grad();
    }
  }

  long long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const std::map<std::string, AdamSlot<S>>& slots() const { return slots_; }

  /// Restores moment estimates and step count (used when resuming).
  void restore(long long t, std::map<std::string, AdamSlot<S>> slots) {
    t_ = t;
    for (auto& [name, slot] : slots) {
      auto it = slots_.find(name);
      require(it != slots_.end(), Errc::incompatible_checkpoint,
              "optimizer state for unknown parameter " + name);
      require(slot.m.size() == it->second.m.size(), Errc::incompatible_checkpoint,
              "optimizer state size mismatch for " + name);
      it->second = std::move(slot);
    }
  }

 private:
  ParamRefs<S> params_;
  AdamConfig cfg_;
  std::map<std::string, AdamSlot<S>> slots_;
  long long t_ = 0;
};

}  // namespace dcasenet::nn
