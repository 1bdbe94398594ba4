// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dcasenet/checkpoint.hpp"
#include "dcasenet/verify.hpp"

using namespace dcasenet;
using nn::AdamOptimizer;
using nn::AdamSlot;
using nn::Mode;
using nn::Tensor;

namespace {

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

Tensor<float> small_input(const ArchitectureConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<float> x({2, 1, 8, cfg.n_mels});
  for (Index i = 0; i < x.numel(); ++i) x.flat()[i] = static_cast<float>(d(rng));
  return x;
}

}  // namespace

TEST_CASE("config hash tracks config content") {
  ArchitectureConfig a = verify::tiny_check_config(1);
  ArchitectureConfig b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.gru_hidden += 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(a == a);
  CHECK(!(a == b));
}

TEST_CASE("checkpoint round trip restores every parameter bitwise") {
  const ArchitectureConfig cfg = verify::tiny_check_config(3);
  DcaseNet<float> model(cfg, 101);
  const std::string path = temp_file("dcn_ckpt_rt.dcn");
  save_checkpoint(path, cfg, 5, {Task::ASC, Task::SED}, model.parameters());

  DcaseNet<float> other(cfg, 999);  // different init, then overwritten
  const CheckpointMeta meta = load_checkpoint(path, other.parameters());
  CHECK(meta.epoch == 5);
  CHECK(meta.tasks == std::vector<Task>{Task::ASC, Task::SED});
  CHECK(meta.config == cfg);
  CHECK(!meta.has_optimizer);

  auto pa = model.parameters();
  auto pb = other.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->value.flat() == pb[i]->value.flat());
  }
  std::filesystem::remove(path);
}

TEST_CASE("save, load, save reproduces the file byte for byte") {
  const ArchitectureConfig cfg = verify::tiny_check_config(2);
  DcaseNet<float> model(cfg, 7);

  // take one optimizer step so moments are non-trivial
  AdamOptimizer<float> opt(model.parameters());
  const Tensor<float> x = small_input(cfg, 3);
  auto out = model.forward(x, {Task::ASC}, Mode::Train, nullptr);
  LabelBatch<float> labels;
  labels.asc = one_hot<float>({0, 1}, cfg.asc_classes);
  auto r = multi_task_loss(out, labels);
  model.backward(r.grads);
  opt.step();

  const std::string p1 = temp_file("dcn_ckpt_a.dcn");
  const std::string p2 = temp_file("dcn_ckpt_b.dcn");
  save_checkpoint(p1, cfg, 1, {Task::ASC}, model.parameters(), &opt);

  DcaseNet<float> copy(cfg, 8);
  std::map<std::string, AdamSlot<float>> slots;
  const CheckpointMeta meta = load_checkpoint(p1, copy.parameters(), &slots);
  CHECK(meta.has_optimizer);
  CHECK(meta.adam_t == 1);
  CHECK(!slots.empty());

  AdamOptimizer<float> opt2(copy.parameters());
  opt2.restore(meta.adam_t, std::move(slots));
  save_checkpoint(p2, cfg, 1, {Task::ASC}, copy.parameters(), &opt2);

  CHECK(read_bytes(p1) == read_bytes(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("peek reads the header without parameters") {
  const ArchitectureConfig cfg = verify::tiny_check_config(1);
  DcaseNet<float> model(cfg, 55);
  const std::string path = temp_file("dcn_ckpt_peek.dcn");
  save_checkpoint(path, cfg, 9, {Task::TAG}, model.parameters());
  const CheckpointMeta meta = peek_checkpoint(path);
  CHECK(meta.epoch == 9);
  CHECK(meta.config.variant == 1);
  CHECK(meta.tasks == std::vector<Task>{Task::TAG});
  std::filesystem::remove(path);
}

TEST_CASE("loading rejects mismatched parameter sets") {
  const ArchitectureConfig cfg = verify::tiny_check_config(1);
  DcaseNet<float> model(cfg, 3);
  const std::string path = temp_file("dcn_ckpt_mismatch.dcn");
  save_checkpoint(path, cfg, 0, {Task::ASC}, model.parameters());

  // a different variant neither covers nor matches the stored tensor set
  DcaseNet<float> other(verify::tiny_check_config(3), 3);
  try {
    load_checkpoint(path, other.parameters());
    FAIL("expected incompatible_checkpoint");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::incompatible_checkpoint);
  }

  // same layer names but a different shape must also fail
  ArchitectureConfig wider = cfg;
  wider.gru_hidden += 2;
  DcaseNet<float> reshaped(wider, 3);
  CHECK_THROWS_AS(load_checkpoint(path, reshaped.parameters()), Error);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt files are rejected") {
  const std::string path = temp_file("dcn_ckpt_corrupt.dcn");
  {
    std::ofstream f(path, std::ios::binary);
    f << "DCN1garbage";
  }
  const ArchitectureConfig cfg = verify::tiny_check_config(1);
  DcaseNet<float> model(cfg, 3);
  CHECK_THROWS_AS(load_checkpoint(path, model.parameters()), Error);
  CHECK_THROWS_AS(peek_checkpoint(path), Error);

  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS(peek_checkpoint(path), Error);
  CHECK_THROWS_AS(peek_checkpoint(temp_file("dcn_ckpt_missing.dcn")), Error);
  std::filesystem::remove(path);
}

TEST_CASE("truncated payload is rejected") {
  const ArchitectureConfig cfg = verify::tiny_check_config(1);
  DcaseNet<float> model(cfg, 3);
  const std::string path = temp_file("dcn_ckpt_trunc.dcn");
  save_checkpoint(path, cfg, 0, {Task::ASC}, model.parameters());
  const std::string bytes = read_bytes(path);
  {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
  }
  CHECK_THROWS_AS(load_checkpoint(path, model.parameters()), Error);
  std::filesystem::remove(path);
}

TEST_CASE("running statistics travel with the checkpoint") {
  const ArchitectureConfig cfg = verify::tiny_check_config(1);
  DcaseNet<float> model(cfg, 21);
  const Tensor<float> x = small_input(cfg, 4);
  model.forward(x, {Task::ASC}, Mode::Train, nullptr);  // moves running stats

  const std::string path = temp_file("dcn_ckpt_stats.dcn");
  save_checkpoint(path, cfg, 0, {Task::ASC}, model.parameters());

  DcaseNet<float> fresh(cfg, 22);
  load_checkpoint(path, fresh.parameters());
  // a fresh model cannot run eval mode; a restored one can
  CHECK_NOTHROW(fresh.forward(x, {Task::ASC}, Mode::Eval, nullptr));
  std::filesystem::remove(path);
}
