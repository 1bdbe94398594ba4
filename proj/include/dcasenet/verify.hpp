// SPDX-License-Identifier: Apache-2.0
//
// Canned finite-difference scenarios run in double precision: each builds a
// small module (or a full tiny model), scalarizes its output against a
// fixed random projection, and compares analytic gradients with central
// differences. Isolated kernels must agree to 1e-4, the full multi-task
// models to 1e-3 (their loss chains many nonlinear stages, so differences
// lose a little more precision).

#pragma once

#include "dcasenet/loss.hpp"
#include "dcasenet/nn/gradcheck.hpp"

namespace dcasenet::verify {

struct CheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  Index elements_checked = 0;
  std::string worst_param;

  bool pass() const { return max_rel_err <= tolerance; }
};

constexpr double kIsolatedTol = 1e-4;
constexpr double kModelTol = 1e-3;

namespace detail {

inline nn::Tensor<double> random_tensor(std::vector<Index> shape, Rng& rng, double scale = 1.0) {
  nn::Tensor<double> t(std::move(shape));
  std::normal_distribution<double> gauss(0.0, scale);
  for (Index i = 0; i < t.numel(); ++i) t.flat()[i] = gauss(rng);
  return t;
}

inline MatX<double> random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  MatX<double> m(rows, cols);
  std::normal_distribution<double> gauss(0.0, scale);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

template <typename LossFn>
CheckResult run(const std::string& name, double tol, const nn::ParamRefs<double>& params,
                LossFn&& loss, Index max_per_param = -1, Rng* rng = nullptr) {
  nn::GradCheckReport rep =
      nn::finite_difference_check(params, std::forward<LossFn>(loss), 1e-5, max_per_param, rng);
  return CheckResult{name, rep.max_rel_err, tol, rep.elements_checked, rep.worst_param};
}

}  // namespace detail

inline CheckResult check_linear(std::uint64_t seed) {
  Rng rng(sub_seed(seed, 1));
  nn::Linear<double> lin("lin", 5, 4);
  lin.init(rng);
  MatX<double> x = detail::random_matrix(3, 5, rng);
  MatX<double> proj = detail::random_matrix(3, 4, rng);
  nn::ParamRefs<double> params;
  lin.collect(params);
  auto loss = [&](bool with_grad) {
    MatX<double> y = lin.forward(x);
    if (with_grad) lin.backward(proj);
    return y.cwiseProduct(proj).sum();
  };
  return detail::run("linear", kIsolatedTol, params, loss);
}

inline CheckResult check_conv_block(std::uint64_t seed) {
  Rng rng(sub_seed(seed, 2));
  nn::ConvBlock<double> block("conv", 2, 3, 2, 2);
  block.init(rng);
  nn::Tensor<double> x = detail::random_tensor({2, 2, 6, 8}, rng);
  nn::Tensor<double> proj = detail::random_tensor({2, 3, 3, 4}, rng);
  nn::ParamRefs<double> params;
  block.collect(params);
  auto loss = [&](bool with_grad) {
    nn::Tensor<double> y = block.forward(x, nn::Mode::Train);
    if (with_grad) block.backward(proj);
    return y.flat().dot(proj.flat());
  };
  return detail::run("conv_block", kIsolatedTol, params, loss);
}

inline CheckResult check_residual_block(std::uint64_t seed) {
  Rng rng(sub_seed(seed, 3));
  nn::ResidualConvBlock<double> block("res", 1, 3);
  block.init(rng);
  nn::Tensor<double> x = detail::random_tensor({2, 1, 5, 6}, rng);
  nn::Tensor<double> proj = detail::random_tensor({2, 3, 5, 6}, rng);
  nn::ParamRefs<double> params;
  block.collect(params);
  auto loss = [&](bool with_grad) {
    nn::Tensor<double> y = block.forward(x, nn::Mode::Train);
    if (with_grad) block.backward(proj);
    return y.flat().dot(proj.flat());
  };
  return detail::run("residual_block", kIsolatedTol, params, loss);
}

inline CheckResult check_batchnorm(std::uint64_t seed) {
  Rng rng(sub_seed(seed, 4));
  nn::BatchNorm2d<double> bn("bn", 3);
  // shift gamma/beta off their init so the check exercises generic values
  std::normal_distribution<double> gauss(0.0, 0.3);
  for (Index i = 0; i < 3; ++i) {
    bn.gamma().value.flat()[i] = 1.0 + gauss(rng);
    bn.beta().value.flat()[i] = gauss(rng);
  }
  nn::Tensor<double> x = detail::random_tensor({3, 3, 4, 5}, rng);
  nn::Tensor<double> proj = detail::random_tensor({3, 3, 4, 5}, rng);
  nn::ParamRefs<double> params;
  bn.collect(params);
  auto loss = [&](bool with_grad) {
    nn::Tensor<double> y = bn.forward(x, nn::Mode::Train);
    if (with_grad) bn.backward(proj);
    return y.flat().dot(proj.flat());
  };
  return detail::run("batchnorm", kIsolatedTol, params, loss);
}

inline CheckResult check_dense_block(std::uint64_t seed) {
  Rng rng(sub_seed(seed, 5));
  nn::DenseBlock<double> block("dense", 6, 7, /*dropout=*/0.0);
  block.init(rng);
  MatX<double> x = detail::random_matrix(4, 6, rng);
  MatX<double> proj = detail::random_matrix(4, 7, rng);
  nn::ParamRefs<double> params;
  block.collect(params);
  auto loss = [&](bool with_grad) {
    MatX<double> y = block.forward(x, nn::Mode::Train, nullptr);
    if (with_grad) block.backward(proj);
    return y.cwiseProduct(proj).sum();
  };
  return detail::run("dense_block", kIsolatedTol, params, loss);
}

inline CheckResult check_bigru(std::uint64_t seed) {
  Rng rng(sub_seed(seed, 6));
  nn::BiGru<double> gru("gru", 4, 3);
  gru.init(rng);
  const Index n = 2, t = 5;
  MatX<double> x = detail::random_matrix(n * t, 4, rng);
  MatX<double> proj = detail::random_matrix(n * t, 6, rng);
  nn::ParamRefs<double> params;
  gru.collect(params);
  auto loss = [&](bool with_grad) {
    MatX<double> y = gru.forward(x, n, t);
    if (with_grad) gru.backward(proj);
    return y.cwiseProduct(proj).sum();
  };
  return detail::run("bigru", kIsolatedTol, params, loss);
}

/// Tiny configuration exercising every path of one variant.
inline ArchitectureConfig tiny_check_config(int variant) {
  ArchitectureConfig cfg;
  cfg.variant = variant;
  cfg.n_mels = 12;
  cfg.channels = {2, 3};
  cfg.time_pool = {2, 1};
  cfg.freq_pool = {2, 2};
  cfg.gru_hidden = 4;
  cfg.head_hidden = 6;
  cfg.asc_classes = 3;
  cfg.tag_classes = 4;
  cfg.sed_classes = 2;
  cfg.dropout = 0.0;  // the difference quotient needs a deterministic loss
  cfg.v1_res_channels = 3;
  cfg.v3_branch_channels = 3;
  return cfg;
}

inline CheckResult check_full_model(int variant, std::uint64_t seed, Index max_per_param = -1) {
  Rng rng(sub_seed(seed, 16 + static_cast<std::uint64_t>(variant)));
  ArchitectureConfig cfg = tiny_check_config(variant);
  DcaseNet<double> model(cfg, seed);
  const Index n = 2, t = 8;
  const Index tp = cfg.pooled_frames(t);
  nn::Tensor<double> x = detail::random_tensor({n, 1, t, cfg.n_mels}, rng, 3.0);

  LabelBatch<double> labels;
  labels.asc = one_hot<double>({0, 2}, cfg.asc_classes);
  labels.tag = MatX<double>::Zero(n, cfg.tag_classes);
  labels.sed = MatX<double>::Zero(n * tp, cfg.sed_classes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < labels.tag.rows(); ++i)
    for (Index j = 0; j < labels.tag.cols(); ++j) labels.tag(i, j) = u(rng) < 0.4 ? 1.0 : 0.0;
  for (Index i = 0; i < labels.sed.rows(); ++i)
    for (Index j = 0; j < labels.sed.cols(); ++j) labels.sed(i, j) = u(rng) < 0.3 ? 1.0 : 0.0;

  const std::set<Task> tasks{Task::ASC, Task::TAG, Task::SED};
  auto loss = [&](bool with_grad) {
    ModelOutputs<double> out = model.forward(x, tasks, Mode::Train, nullptr);
    LossResult<double> r = multi_task_loss(out, labels);
    if (with_grad) model.backward(r.grads);
    return r.total;
  };
  Rng pick_rng(sub_seed(seed, 99));
  return detail::run("model_v" + std::to_string(variant), kModelTol, model.parameters(), loss,
                     max_per_param, &pick_rng);
}

inline std::vector<CheckResult> run_all_checks(std::uint64_t seed, Index model_max_per_param = 24) {
  std::vector<CheckResult> out;
  out.push_back(check_linear(seed));
  out.push_back(check_conv_block(seed));
  out.push_back(check_residual_block(seed));
  out.push_back(check_batchnorm(seed));
  out.push_back(check_dense_block(seed));
  out.push_back(check_bigru(seed));
  for (int v = 1; v <= 3; ++v) out.push_back(check_full_model(v, seed, model_max_per_param));
  return out;
}

}  // namespace dcasenet::verify
