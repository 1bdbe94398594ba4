// SPDX-License-Identifier: Apache-2.0
//
// Central-difference verification of analytic gradients. The loss callable
// takes a with_grad flag: it must always return the loss, and accumulate
// parameter gradients only when the flag is set. Two flag-less evaluations
// must agree bitwise, otherwise the check refuses to run (a stochastic loss
// would make the differences meaningless).

#pragma once

#include <algorithm>
#include <cmath>

#include "dcasenet/nn/tensor.hpp"

namespace dcasenet::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  Index elements_checked = 0;
};

/// Compares accumulated analytic gradients against central differences of
/// `loss` for every trainable parameter. With `max_per_param >= 0` only a
/// random subset of each tensor is probed (an engine is then required).
/// Elements where both gradients sit below `zero_guard` count as exact:
/// directions the loss provably ignores (a bias feeding a normalization
/// layer, say) read as pure rounding noise on both sides.
template <typename S, typename LossFn>
GradCheckReport finite_difference_check(const ParamRefs<S>& params, LossFn&& loss,
                                        double h = 1e-5, Index max_per_param = -1,
                                        Rng* rng = nullptr, double zero_guard = 1e-6) {
  const double l1 = loss(false);
  const double l2 = loss(false);
  require(l1 == l2, Errc::non_deterministic_loss,
          "loss evaluations differ: " + std::to_string(l1) + " vs " + std::to_string(l2));

  for (Parameter<S>* p : params) p->zero_grad();
  loss(true);
  std::vector<VecX<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter<S>* p : params) analytic.push_back(p->grad.flat().template cast<double>());

  GradCheckReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<S>* p = params[pi];
    if (!p->trainable) continue;
    std::vector<Index> idx;
    if (max_per_param < 0 || p->value.numel() <= max_per_param) {
      idx.resize(static_cast<std::size_t>(p->value.numel()));
      std::iota(idx.begin(), idx.end(), Index{0});
    } else {
      require(rng != nullptr, Errc::invalid_argument, "sampled grad check needs an engine");
      std::uniform_int_distribution<Index> pick(0, p->value.numel() - 1);
      for (Index k = 0; k < max_per_param; ++k) idx.push_back(pick(*rng));
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    }
    for (Index i : idx) {
      const S saved = p->value.flat()[i];
      p->value.flat()[i] = saved + static_cast<S>(h);
      const double lp = loss(false);
      p->value.flat()[i] = saved - static_cast<S>(h);
      const double lm = loss(false);
      p->value.flat()[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[pi][i];
      const double mag = std::max(std::abs(a), std::abs(numeric));
      const double rel = mag <= zero_guard ? 0.0 : std::abs(a - numeric) / mag;
      ++rep.elements_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p->name;
        rep.worst_index = i;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  for (Parameter<S>* p : params) p->zero_grad();
  return rep;
}

}  // namespace dcasenet::nn
