// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container: "DCN1" magic, format version, a length-prefixed
// JSON header (sorted keys, so serialization is deterministic), then raw
// little-endian float32 blobs for every tensor the header lists, model
// parameters first, optimizer moments after. A save -> load -> save round
// trip reproduces the file byte for byte.

#pragma once

#include <json.hpp>

#include "dcasenet/model.hpp"
#include "dcasenet/nn/adam.hpp"

namespace dcasenet {

void to_json(nlohmann::json& j, const ArchitectureConfig& c);
void from_json(const nlohmann::json& j, ArchitectureConfig& c);

/// FNV-1a over the canonical JSON serialization of a config.
std::uint64_t config_hash(const ArchitectureConfig& c);

struct CheckpointMeta {
  ArchitectureConfig config;
  int epoch = 0;
  std::vector<Task> tasks;
  bool has_optimizer = false;
  long long adam_t = 0;
};

/// Writes parameters (and, when given, optimizer state) to `path`.
void save_checkpoint(const std::string& path, const ArchitectureConfig& cfg, int epoch,
                     const std::vector<Task>& tasks, const nn::ParamRefs<float>& params,
                     const nn::AdamOptimizer<float>* optimizer = nullptr);

/// Reads only the header.
CheckpointMeta peek_checkpoint(const std::string& path);

/// Overwrites `params` (matched by name; the sets and shapes must agree
/// exactly) and optionally returns optimizer moments keyed by parameter.
CheckpointMeta load_checkpoint(const std::string& path, const nn::ParamRefs<float>& params,
                               std::map<std::string, nn::AdamSlot<float>>* adam_slots = nullptr);

}  // namespace dcasenet
