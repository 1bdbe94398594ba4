// SPDX-License-Identifier: Apache-2.0
//
// Multi-task loss and mixup. The combined objective is the unweighted sum
// of the active per-task terms: softmax cross-entropy over scene logits
// (mean over the batch) and binary cross-entropy over tagging and event
// probabilities (mean over every matrix element). Targets are dense float
// matrices so mixup can blend them.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcasenet/model.hpp"

namespace dcasenet {

/// Per-batch targets; empty fields mean the task is inactive. Scene targets
/// are rows on the class simplex (one-hot before mixup), event targets live
/// at the pooled frame rate, rows sample-major like the model output.
template <typename S>
struct LabelBatch {
  MatX<S> asc;
  MatX<S> tag;
  MatX<S> sed;
};

template <typename S>
MatX<S> one_hot(const std::vector<int>& labels, Index n_classes) {
  MatX<S> out = MatX<S>::Zero(static_cast<Index>(labels.size()), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < n_classes, Errc::invalid_argument,
            "class index out of range: " + std::to_string(labels[i]));
    out(static_cast<Index>(i), labels[i]) = S(1);
  }
  return out;
}

template <typename S>
struct LossResult {
  double total = 0.0;
  double asc = 0.0;
  double tag = 0.0;
  double sed = 0.0;
  ModelOutputs<S> grads;  // d(total)/d(outputs), shaped like the outputs
};

namespace detail {

constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy and its gradient; probabilities are clamped to
/// [1e-7, 1-1e-7] and the clamp's zero derivative carries into the backward
/// pass so the analytic gradient matches the computed loss exactly.
template <typename S>
double bce_mean(const MatX<S>& probs, const MatX<S>& targets, MatX<S>& grad) {
  require(probs.rows() == targets.rows() && probs.cols() == targets.cols(),
          Errc::shape_mismatch, "targets do not match predictions");
  const double inv_m = 1.0 / static_cast<double>(probs.size());
  grad.resize(probs.rows(), probs.cols());
  double loss = 0.0;
  for (Index i = 0; i < probs.rows(); ++i) {
    for (Index j = 0; j < probs.cols(); ++j) {
      const double y = targets(i, j);
      const double p = probs(i, j);
      const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      loss -= y * std::log(q) + (1.0 - y) * std::log1p(-q);
      const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
      grad(i, j) = clamped ? S(0) : static_cast<S>(inv_m * (q - y) / (q * (1.0 - q)));
    }
  }
  return loss * inv_m;
}

/// Mean softmax cross-entropy on logits with simplex-valued targets; the
/// gradient w.r.t. logits is (softmax - target) / batch.
template <typename S>
double ce_mean(const MatX<S>& logits, const MatX<S>& targets, MatX<S>& grad) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          Errc::shape_mismatch, "targets do not match predictions");
  const Index n = logits.rows();
  double loss = 0.0;
  MatX<S> p = nn::softmax_rows(logits);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < logits.cols(); ++c) {
      const double y = targets(i, c);
      if (y != 0.0)
        loss -= y * std::log(std::max(static_cast<double>(p(i, c)), kProbClamp));
    }
  }
  grad = (p - targets) * static_cast<S>(1.0 / n);
  return loss / static_cast<double>(n);
}

}  // namespace detail

/// Sums the active task losses; a task is active when both the model output
/// and the target field are non-empty, and the two must agree.
template <typename S>
LossResult<S> multi_task_loss(const ModelOutputs<S>& out, const LabelBatch<S>& labels) {
  require((out.asc_logits.size() > 0) == (labels.asc.size() > 0), Errc::missing_labels,
          "scene outputs and targets must be active together");
  require((out.tag_probs.size() > 0) == (labels.tag.size() > 0), Errc::missing_labels,
          "tagging outputs and targets must be active together");
  require((out.sed_probs.size() > 0) == (labels.sed.size() > 0), Errc::missing_labels,
          "event outputs and targets must be active together");
  require(out.asc_logits.size() + out.tag_probs.size() + out.sed_probs.size() > 0,
          Errc::invalid_argument, "loss needs at least one active task");
  LossResult<S> r;
  r.grads.sed_frames = out.sed_frames;
  if (out.asc_logits.size() > 0)
    r.asc = detail::ce_mean(out.asc_logits, labels.asc, r.grads.asc_logits);
  if (out.tag_probs.size() > 0)
    r.tag = detail::bce_mean(out.tag_probs, labels.tag, r.grads.tag_probs);
  if (out.sed_probs.size() > 0)
    r.sed = detail::bce_mean(out.sed_probs, labels.sed, r.grads.sed_probs);
  r.total = r.asc + r.tag + r.sed;
  return r;
}

/// Beta(alpha, alpha) draw via two gamma variates.
inline double sample_mixup_lambda(double alpha, Rng& rng) {
  require(alpha > 0.0, Errc::invalid_argument, "mixup alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  return (a + b) > 0.0 ? a / (a + b) : 0.5;
}

/// Blends the batch with a shuffled copy of itself using a fixed lambda:
/// x <- l*x + (1-l)*x[perm], same for every active target field. Event
/// target rows move in per-sample blocks.
template <typename S>
void mixup_batch_with(nn::Tensor<S>& x, LabelBatch<S>& labels, double lambda, Rng& rng) {
  require(lambda >= 0.0 && lambda <= 1.0, Errc::invalid_argument, "lambda must be in [0,1]");
  const Index n = x.dim(0);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const S l = static_cast<S>(lambda), r = static_cast<S>(1.0 - lambda);
  const Index stride = x.numel() / n;
  nn::Tensor<S> x0 = x;
  for (Index i = 0; i < n; ++i) {
    x.rows_block(i, 1, stride) =
        l * x0.rows_block(i, 1, stride) + r * x0.rows_block(perm[static_cast<std::size_t>(i)], 1, stride);
  }
  auto mix_rows = [&](MatX<S>& m, Index rows_per_sample) {
    if (m.size() == 0) return;
    MatX<S> m0 = m;
    for (Index i = 0; i < n; ++i) {
      m.middleRows(i * rows_per_sample, rows_per_sample) =
          l * m0.middleRows(i * rows_per_sample, rows_per_sample) +
          r * m0.middleRows(perm[static_cast<std::size_t>(i)] * rows_per_sample, rows_per_sample);
    }
  };
  mix_rows(labels.asc, 1);
  mix_rows(labels.tag, 1);
  if (labels.sed.size() > 0) mix_rows(labels.sed, labels.sed.rows() / n);
}

/// Draws lambda from Beta(alpha, alpha) and applies mixup in place.
template <typename S>
double mixup_batch(nn::Tensor<S>& x, LabelBatch<S>& labels, double alpha, Rng& rng) {
  const double lambda = sample_mixup_lambda(alpha, rng);
  mixup_batch_with(x, labels, lambda, rng);
  return lambda;
}

}  // namespace dcasenet
