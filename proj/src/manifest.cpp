// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/manifest.hpp"

#include <cctype>
#include <fstream>

#include <json.hpp>

namespace dcasenet {

using nlohmann::ordered_json;

Task task_from_name(const std::string& name) {
  std::string up = name;
  for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "ASC") return Task::ASC;
  if (up == "TAG") return Task::TAG;
  if (up == "SED") return Task::SED;
  fail(Errc::invalid_manifest, "unknown task '" + name + "'");
}

std::string manifest_entry_to_json(const ManifestEntry& e) {
  ordered_json j;
  j["path"] = e.path;
  j["task"] = task_name(e.task);
  if (e.scene_id) j["scene_id"] = *e.scene_id;
  if (e.tags) j["tags"] = *e.tags;
  if (e.events) {
    ordered_json evs = ordered_json::array();
    for (const auto& ev : *e.events) {
      evs.push_back(ordered_json{{"onset", ev.onset}, {"offset", ev.offset}, {"class", ev.cls}});
    }
    j["events"] = evs;
  }
  return j.dump();
}

ManifestEntry manifest_entry_from_json(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const std::exception& ex) {
    fail(Errc::invalid_manifest, std::string("bad JSON: ") + ex.what());
  }
  ManifestEntry e;
  require(j.contains("path") && j.contains("task"), Errc::invalid_manifest,
          "entry needs 'path' and 'task'");
  e.path = j.at("path").get<std::string>();
  e.task = task_from_name(j.at("task").get<std::string>());
  if (j.contains("scene_id")) e.scene_id = j.at("scene_id").get<int>();
  if (j.contains("tags")) e.tags = j.at("tags").get<std::vector<int>>();
  if (j.contains("events")) {
    std::vector<Event> evs;
    for (const auto& je : j.at("events")) {
      Event ev;
      ev.onset = je.at("onset").get<double>();
      ev.offset = je.at("offset").get<double>();
      ev.cls = je.at("class").get<int>();
      require(ev.onset >= 0.0 && ev.onset < ev.offset, Errc::invalid_manifest,
              "event must satisfy 0 <= onset < offset");
      evs.push_back(ev);
    }
    e.events = std::move(evs);
  }

  const bool has_scene = e.scene_id.has_value();
  const bool has_tags = e.tags.has_value();
  const bool has_events = e.events.has_value();
  switch (e.task) {
    case Task::ASC:
      require(has_scene && !has_tags && !has_events, Errc::invalid_manifest,
              "ASC entry must carry exactly scene_id: " + e.path);
      break;
    case Task::TAG:
      require(!has_scene && has_tags && !has_events, Errc::invalid_manifest,
              "TAG entry must carry exactly tags: " + e.path);
      break;
    case Task::SED:
      require(!has_scene && !has_tags && has_events, Errc::invalid_manifest,
              "SED entry must carry exactly events: " + e.path);
      break;
  }
  return e;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::file_not_found, path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    entries.push_back(manifest_entry_from_json(line));
  }
  return entries;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot open for write: " + path);
  for (const auto& e : entries) out << manifest_entry_to_json(e) << '\n';
}

}  // namespace dcasenet
