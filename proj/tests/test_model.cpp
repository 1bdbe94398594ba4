// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "dcasenet/loss.hpp"
#include "dcasenet/model.hpp"
#include "dcasenet/verify.hpp"

using namespace dcasenet;
using nn::Mode;
using nn::Tensor;

namespace {

Tensor<float> random_input(const ArchitectureConfig& cfg, Index n, Index frames,
                           std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 3.0);
  Tensor<float> x({n, 1, frames, cfg.n_mels});
  for (Index i = 0; i < x.numel(); ++i) x.flat()[i] = static_cast<float>(d(rng));
  return x;
}

}  // namespace

TEST_CASE("architecture config pooling arithmetic") {
  const ArchitectureConfig cfg;  // full-scale defaults
  CHECK(cfg.time_pool_total() == 4);
  CHECK(cfg.pooled_bands() == 8);
  // floors apply per stage: 499 -> 249 -> 124 -> 124 -> 124
  CHECK(cfg.pooled_frames(499) == 124);
  CHECK(cfg.pooled_frames(500) == 125);
  CHECK(cfg.pooled_frames(8) == 2);
}

TEST_CASE("architecture config validation") {
  ArchitectureConfig cfg = verify::tiny_check_config(1);
  CHECK_NOTHROW(cfg.validate());
  cfg.variant = 4;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = verify::tiny_check_config(1);
  cfg.time_pool.pop_back();
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = verify::tiny_check_config(1);
  cfg.channels.clear();
  cfg.time_pool.clear();
  cfg.freq_pool.clear();
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = verify::tiny_check_config(1);
  cfg.asc_classes = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = verify::tiny_check_config(1);
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("model forward produces task-shaped outputs") {
  for (int variant = 1; variant <= 3; ++variant) {
    const ArchitectureConfig cfg = verify::tiny_check_config(variant);
    DcaseNet<float> model(cfg, 7);
    const Tensor<float> x = random_input(cfg, 2, 8, 11);

    const auto out = model.forward(x, {Task::ASC, Task::TAG, Task::SED}, Mode::Train, nullptr);
    INFO("variant ", variant);
    CHECK(out.asc_logits.rows() == 2);
    CHECK(out.asc_logits.cols() == cfg.asc_classes);
    CHECK(out.tag_probs.rows() == 2);
    CHECK(out.tag_probs.cols() == cfg.tag_classes);
    CHECK(out.sed_frames == cfg.pooled_frames(8));
    CHECK(out.sed_probs.rows() == 2 * out.sed_frames);
    CHECK(out.sed_probs.cols() == cfg.sed_classes);
    CHECK(out.tag_probs.minCoeff() > 0.0);
    CHECK(out.tag_probs.maxCoeff() < 1.0);
    CHECK(out.sed_probs.minCoeff() > 0.0);
    CHECK(out.sed_probs.maxCoeff() < 1.0);
    CHECK(out.asc_logits.allFinite());
  }
}

TEST_CASE("single-task forwards leave other outputs empty") {
  const ArchitectureConfig cfg = verify::tiny_check_config(2);
  DcaseNet<float> model(cfg, 7);
  const Tensor<float> x = random_input(cfg, 2, 8, 11);
  const auto out = model.forward(x, {Task::ASC}, Mode::Train, nullptr);
  CHECK(out.asc_logits.size() > 0);
  CHECK(out.tag_probs.size() == 0);
  CHECK(out.sed_probs.size() == 0);
}

TEST_CASE("scene logits do not depend on which other tasks run") {
  for (int variant = 1; variant <= 3; ++variant) {
    const ArchitectureConfig cfg = verify::tiny_check_config(variant);
    DcaseNet<float> model(cfg, 13);
    const Tensor<float> x = random_input(cfg, 2, 8, 17);
    // one training pass seeds the normalization statistics for eval mode
    model.forward(x, {Task::ASC, Task::TAG, Task::SED}, Mode::Train, nullptr);

    const auto alone = model.forward(x, {Task::ASC}, Mode::Eval, nullptr);
    const auto joint = model.forward(x, {Task::ASC, Task::TAG, Task::SED}, Mode::Eval, nullptr);
    INFO("variant ", variant);
    CHECK(alone.asc_logits == joint.asc_logits);
  }
}

TEST_CASE("parameter names are unique and seeds reproduce initialization") {
  for (int variant = 1; variant <= 3; ++variant) {
    const ArchitectureConfig cfg = verify::tiny_check_config(variant);
    DcaseNet<float> a(cfg, 42), b(cfg, 42), c(cfg, 43);
    auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());

    std::set<std::string> names;
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      names.insert(pa[i]->name);
      all_equal &= pa[i]->value.flat() == pb[i]->value.flat();
      any_diff |= pa[i]->value.flat() != pc[i]->value.flat();
    }
    CHECK(names.size() == pa.size());
    CHECK(all_equal);
    CHECK(any_diff);
  }
}

TEST_CASE("variant three carries more parameters than variant two") {
  // tiny configs share every size except the variant wiring
  DcaseNet<float> v2(verify::tiny_check_config(2), 1);
  DcaseNet<float> v3(verify::tiny_check_config(3), 1);
  CHECK(v3.param_count() > v2.param_count());
}

TEST_CASE("training-mode dropout needs an engine") {
  ArchitectureConfig cfg = verify::tiny_check_config(1);
  cfg.dropout = 0.4;
  DcaseNet<float> model(cfg, 3);
  const Tensor<float> x = random_input(cfg, 1, 8, 5);
  CHECK_THROWS_AS(model.forward(x, {Task::TAG}, Mode::Train, nullptr), Error);
  Rng rng(9);
  CHECK_NOTHROW(model.forward(x, {Task::TAG}, Mode::Train, &rng));
}

TEST_CASE("model rejects malformed inputs and gradients") {
  const ArchitectureConfig cfg = verify::tiny_check_config(1);
  DcaseNet<float> model(cfg, 3);
  Tensor<float> bad({1, 2, 8, cfg.n_mels});  // two channel planes
  CHECK_THROWS_AS(model.forward(bad, {Task::ASC}, Mode::Train, nullptr), Error);
  Tensor<float> wrong_mels({1, 1, 8, cfg.n_mels + 1});
  CHECK_THROWS_AS(model.forward(wrong_mels, {Task::ASC}, Mode::Train, nullptr), Error);

  const Tensor<float> x = random_input(cfg, 1, 8, 5);
  model.forward(x, {Task::ASC}, Mode::Train, nullptr);
  ModelOutputs<float> grads;
  grads.asc_logits = MatX<float>::Ones(2, cfg.asc_classes);  // batch mismatch
  CHECK_THROWS_AS(model.backward(grads), Error);
}

TEST_CASE("cross entropy worked example") {
  ModelOutputs<double> out;
  out.asc_logits = MatX<double>(2, 3);
  out.asc_logits << 1.0, 2.0, 3.0, 0.5, -0.5, 0.0;
  LabelBatch<double> labels;
  labels.asc = one_hot<double>({2, 0}, 3);

  const auto r = multi_task_loss(out, labels);
  CHECK(r.total == doctest::Approx(0.5439378175430574).epsilon(1e-12));
  CHECK(r.asc == r.total);
  CHECK(r.tag == 0.0);
  // gradient is (softmax - target) / batch
  CHECK(r.grads.asc_logits(0, 0) == doctest::Approx(0.09003057317038048 / 2).epsilon(1e-9));
  CHECK(r.grads.asc_logits(0, 2) ==
        doctest::Approx((0.665240955774822 - 1.0) / 2).epsilon(1e-9));
  CHECK(r.grads.tag_probs.size() == 0);
}

TEST_CASE("binary cross entropy worked example with clamping") {
  ModelOutputs<double> out;
  out.tag_probs = MatX<double>(1, 2);
  out.tag_probs << 0.9, 0.1;
  LabelBatch<double> labels;
  labels.tag = MatX<double>(1, 2);
  labels.tag << 1.0, 0.0;

  const auto r = multi_task_loss(out, labels);
  CHECK(r.total == doctest::Approx(0.10536051565782628).epsilon(1e-12));

  // a probability beyond the clamp contributes the clamped loss, zero grad
  out.tag_probs << 1e-9, 0.5;
  labels.tag << 0.0, 1.0;
  const auto rc = multi_task_loss(out, labels);
  CHECK(rc.total == doctest::Approx((1.0000000494736474e-07 - std::log(0.5)) / 2.0).epsilon(1e-12));
  CHECK(rc.grads.tag_probs(0, 0) == 0.0);
  CHECK(rc.grads.tag_probs(0, 1) == doctest::Approx(-1.0).epsilon(1e-9));  // -1/p / M
}

TEST_CASE("loss demands matching active tasks") {
  ModelOutputs<double> out;
  out.asc_logits = MatX<double>::Zero(1, 3);
  LabelBatch<double> labels;  // no targets
  CHECK_THROWS_AS(multi_task_loss(out, labels), Error);
  out.asc_logits.resize(0, 0);
  CHECK_THROWS_AS(multi_task_loss(out, labels), Error);  // nothing active
}

TEST_CASE("multi-task loss sums the three parts") {
  ModelOutputs<double> out;
  out.asc_logits = MatX<double>(1, 3);
  out.asc_logits << 1.0, 2.0, 3.0;
  out.tag_probs = MatX<double>(1, 2);
  out.tag_probs << 0.9, 0.1;
  out.sed_probs = MatX<double>(2, 2);
  out.sed_probs << 0.5, 0.5, 0.5, 0.5;
  out.sed_frames = 2;
  LabelBatch<double> labels;
  labels.asc = one_hot<double>({2}, 3);
  labels.tag = MatX<double>(1, 2);
  labels.tag << 1.0, 0.0;
  labels.sed = MatX<double>::Zero(2, 2);

  const auto r = multi_task_loss(out, labels);
  CHECK(r.asc == doctest::Approx(0.40760596444438013).epsilon(1e-12));
  CHECK(r.tag == doctest::Approx(0.10536051565782628).epsilon(1e-12));
  CHECK(r.sed == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
  CHECK(r.total == doctest::Approx(r.asc + r.tag + r.sed).epsilon(1e-12));
  CHECK(r.grads.sed_frames == 2);
}

TEST_CASE("mixup with lambda one is the identity") {
  Rng rng(31);
  Tensor<float> x({2, 1, 4, 3});
  x.flat().setLinSpaced(24, 0.0f, 23.0f);
  const VecX<float> before = x.flat();
  LabelBatch<float> labels;
  labels.asc = one_hot<float>({0, 1}, 2);
  const MatX<float> asc_before = labels.asc;

  mixup_batch_with(x, labels, 1.0, rng);
  CHECK(x.flat() == before);
  CHECK(labels.asc == asc_before);
}

TEST_CASE("mixup keeps scene targets on the simplex and aligns features") {
  Rng rng(33);
  const double lambda = 0.3;
  // two constant feature blocks make the convex combination readable
  Tensor<float> x({2, 1, 2, 2});
  x.flat() << 1.0f, 1.0f, 1.0f, 1.0f, 5.0f, 5.0f, 5.0f, 5.0f;
  LabelBatch<float> labels;
  labels.asc = one_hot<float>({0, 1}, 2);
  labels.tag = MatX<float>(2, 2);
  labels.tag << 1.0f, 0.0f, 0.0f, 1.0f;
  labels.sed = MatX<float>(4, 1);  // two frames per sample
  labels.sed << 1.0f, 1.0f, 0.0f, 0.0f;

  mixup_batch_with(x, labels, lambda, rng);

  for (Index i = 0; i < 2; ++i) {
    CHECK(labels.asc.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    // read the partner from the scene target and check features match it
    const double w_self = labels.asc(i, i);
    const double expect = w_self * (i == 0 ? 1.0 : 5.0) + (1.0 - w_self) * (i == 0 ? 5.0 : 1.0);
    CHECK(x.at(i, 0, 0, 0) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(labels.tag(i, i) == doctest::Approx(w_self).epsilon(1e-6));
    CHECK(labels.sed(i * 2, 0) == doctest::Approx(i == 0 ? w_self : 1.0 - w_self).epsilon(1e-6));
  }
}

TEST_CASE("mixup lambda sampling is deterministic, in range, and validated") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const double la = sample_mixup_lambda(0.2, a);
    const double lb = sample_mixup_lambda(0.2, b);
    CHECK(la == lb);
    CHECK(la >= 0.0);
    CHECK(la <= 1.0);
  }
  Rng rng(6);
  CHECK_THROWS_AS(sample_mixup_lambda(0.0, rng), Error);
}
