// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace dcasenet {
namespace {

constexpr char kMagic[4] = {'D', 'C', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  require(bool(is), Errc::io_error, "truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_blob(std::ostream& os, const VecX<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(sizeof(float)) * v.size());
}

void read_blob(std::istream& is, VecX<float>& v) {
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(float)) * v.size());
  require(bool(is), Errc::io_error, "truncated checkpoint tensor data");
}

std::vector<nn::Parameter<float>*> sorted_by_name(const nn::ParamRefs<float>& params) {
  std::vector<nn::Parameter<float>*> v(params.begin(), params.end());
  std::sort(v.begin(), v.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });
  for (std::size_t i = 1; i < v.size(); ++i)
    require(v[i - 1]->name != v[i]->name, Errc::invalid_argument,
            "duplicate parameter name " + v[i]->name);
  return v;
}

nlohmann::json read_header(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  require(bool(is) && std::memcmp(magic, kMagic, 4) == 0, Errc::incompatible_checkpoint,
          "not a checkpoint file");
  const std::uint32_t version = read_u32(is);
  require(version == kVersion, Errc::incompatible_checkpoint,
          "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t len = read_u32(is);
  std::string text(len, '\0');
  is.read(text.data(), len);
  require(bool(is), Errc::io_error, "truncated checkpoint header");
  nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded(), Errc::incompatible_checkpoint, "checkpoint header is not valid JSON");
  return j;
}

CheckpointMeta meta_from_header(const nlohmann::json& j) {
  CheckpointMeta meta;
  meta.config = j.at("config").get<ArchitectureConfig>();
  const std::uint64_t stored = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
  require(stored == config_hash(meta.config), Errc::incompatible_checkpoint,
          "config hash mismatch");
  meta.epoch = j.at("epoch").get<int>();
  for (const auto& t : j.at("tasks")) meta.tasks.push_back(task_from_name(t.get<std::string>()));
  if (j.contains("adam") && !j.at("adam").is_null()) {
    meta.has_optimizer = true;
    meta.adam_t = j.at("adam").at("t").get<long long>();
  }
  return meta;
}

}  // namespace

void to_json(nlohmann::json& j, const ArchitectureConfig& c) {
  j = nlohmann::json{{"variant", c.variant},
                     {"n_mels", c.n_mels},
                     {"channels", c.channels},
                     {"time_pool", c.time_pool},
                     {"freq_pool", c.freq_pool},
                     {"gru_hidden", c.gru_hidden},
                     {"head_hidden", c.head_hidden},
                     {"asc_classes", c.asc_classes},
                     {"tag_classes", c.tag_classes},
                     {"sed_classes", c.sed_classes},
                     {"dropout", c.dropout},
                     {"v1_res_channels", c.v1_res_channels},
                     {"v3_branch_channels", c.v3_branch_channels},
                     {"input_shift", c.input_shift},
                     {"input_scale", c.input_scale}};
}

void from_json(const nlohmann::json& j, ArchitectureConfig& c) {
  c = ArchitectureConfig{};
  j.at("variant").get_to(c.variant);
  j.at("n_mels").get_to(c.n_mels);
  j.at("channels").get_to(c.channels);
  j.at("time_pool").get_to(c.time_pool);
  j.at("freq_pool").get_to(c.freq_pool);
  j.at("gru_hidden").get_to(c.gru_hidden);
  j.at("head_hidden").get_to(c.head_hidden);
  j.at("asc_classes").get_to(c.asc_classes);
  j.at("tag_classes").get_to(c.tag_classes);
  j.at("sed_classes").get_to(c.sed_classes);
  j.at("dropout").get_to(c.dropout);
  j.at("v1_res_channels").get_to(c.v1_res_channels);
  j.at("v3_branch_channels").get_to(c.v3_branch_channels);
  j.at("input_shift").get_to(c.input_shift);
  j.at("input_scale").get_to(c.input_scale);
  c.validate();
}

std::uint64_t config_hash(const ArchitectureConfig& c) {
  const std::string s = nlohmann::json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const std::string& path, const ArchitectureConfig& cfg, int epoch,
                     const std::vector<Task>& tasks, const nn::ParamRefs<float>& params,
                     const nn::AdamOptimizer<float>* optimizer) {
  auto sorted = sorted_by_name(params);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto* p : sorted) {
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"trainable", p->trainable}});
  }
  nlohmann::json tasks_j = nlohmann::json::array();
  for (Task t : tasks) tasks_j.push_back(task_name(t));
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  nlohmann::json header{{"config", cfg},
                        {"config_hash", hash_hex},
                        {"epoch", epoch},
                        {"tasks", tasks_j},
                        {"tensors", tensors},
                        {"adam", nullptr}};
  if (optimizer != nullptr) {
    header["adam"] = {{"t", optimizer->step_count()}};
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(bool(os), Errc::io_error, "cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : sorted) write_blob(os, p->value.flat());
  if (optimizer != nullptr) {
    for (const auto* p : sorted) {
      if (!p->trainable) continue;
      const auto& slot = optimizer->slots().at(p->name);
      write_blob(os, slot.m);
      write_blob(os, slot.v);
    }
  }
  os.flush();
  require(bool(os), Errc::io_error, "short write: " + path);
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), Errc::file_not_found, "cannot open: " + path);
  return meta_from_header(read_header(is));
}

CheckpointMeta load_checkpoint(const std::string& path, const nn::ParamRefs<float>& params,
                               std::map<std::string, nn::AdamSlot<float>>* adam_slots) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), Errc::file_not_found, "cannot open: " + path);
  nlohmann::json header = read_header(is);
  CheckpointMeta meta = meta_from_header(header);

  std::map<std::string, nn::Parameter<float>*> by_name;
  for (auto* p : params) by_name[p->name] = p;
  const auto& tensors = header.at("tensors");
  require(tensors.size() == by_name.size(), Errc::incompatible_checkpoint,
          "checkpoint lists " + std::to_string(tensors.size()) + " tensors, model has " +
              std::to_string(by_name.size()));
  std::vector<nn::Parameter<float>*> ordered;
  for (const auto& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    auto it = by_name.find(name);
    require(it != by_name.end(), Errc::incompatible_checkpoint,
            "checkpoint tensor " + name + " not present in model");
    const auto shape = t.at("shape").get<std::vector<Index>>();
    require(shape == it->second->value.shape(), Errc::incompatible_checkpoint,
            "shape mismatch for " + name);
    ordered.push_back(it->second);
  }
  for (auto* p : ordered) read_blob(is, p->value.flat());
  if (meta.has_optimizer && adam_slots != nullptr) {
    for (auto* p : ordered) {
      if (!p->trainable) continue;
      nn::AdamSlot<float> slot{VecX<float>::Zero(p->value.numel()),
                               VecX<float>::Zero(p->value.numel())};
      read_blob(is, slot.m);
      read_blob(is, slot.v);
      (*adam_slots)[p->name] = std::move(slot);
    }
  }
  return meta;
}

}  // namespace dcasenet
