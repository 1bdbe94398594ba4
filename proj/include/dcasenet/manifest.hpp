// SPDX-License-Identifier: Apache-2.0
//
// JSONL dataset manifests: one entry per line, labels keyed by task.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dcasenet/common.hpp"

namespace dcasenet {

enum class Task { ASC, TAG, SED };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::ASC: return "ASC";
    case Task::TAG: return "TAG";
    case Task::SED: return "SED";
  }
  return "?";
}

Task task_from_name(const std::string& name);

/// Annotated sound event in seconds, [onset, offset).
struct Event {
  double onset = 0.0;
  double offset = 0.0;
  int cls = 0;

  bool operator==(const Event&) const = default;
};

/// One dataset item. Exactly the label fields of its task are present:
/// ASC -> scene_id, TAG -> tags, SED -> events.
struct ManifestEntry {
  std::string path;
  Task task = Task::ASC;
  std::optional<int> scene_id;
  std::optional<std::vector<int>> tags;
  std::optional<std::vector<Event>> events;

  bool operator==(const ManifestEntry&) const = default;
};

/// Serializes one entry to a single JSON line (no trailing newline).
std::string manifest_entry_to_json(const ManifestEntry& e);

/// Parses one JSON line; validates task/label-field consistency and
/// 0 <= onset < offset for every event.
ManifestEntry manifest_entry_from_json(const std::string& line);

std::vector<ManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

}  // namespace dcasenet
