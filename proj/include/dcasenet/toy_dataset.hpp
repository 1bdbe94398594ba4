// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic corpus: scenes are tone mixtures, tags are tone
// sets, sound events are pure-tone bursts at annotated intervals. Small
// enough for desk-scale training runs, separable enough to learn quickly.

#pragma once

#include <string>
#include <vector>

#include "dcasenet/manifest.hpp"

namespace dcasenet {

struct ToyDatasetSpec {
  std::uint64_t seed = 1234;
  int sample_rate = 24000;

  int asc_scenes = 4;
  int asc_train_per_scene = 6;
  int asc_eval_per_scene = 2;
  double asc_duration_s = 2.5;

  int tag_classes = 6;
  int tag_train_segments = 24;
  int tag_eval_segments = 8;
  double tag_duration_s = 2.5;
  int tag_max_tags = 3;

  int sed_classes = 4;
  int sed_train_segments = 12;
  int sed_eval_segments = 4;
  double sed_duration_s = 6.0;
  int sed_events_per_segment = 5;

  double tone_amp = 0.2;
  double noise_amp = 0.01;

  /// Class -> tone frequency maps; filled with defaults when empty.
  std::vector<double> tag_tone_hz;
  std::vector<double> sed_tone_hz;
  std::vector<std::vector<double>> scene_tones_hz;
};

struct ToyDataset {
  std::string dir;
  std::string asc_train_manifest, asc_eval_manifest;
  std::string tag_train_manifest, tag_eval_manifest;
  std::string sed_train_manifest, sed_eval_manifest;
  std::vector<ManifestEntry> entries;  // all entries, train + eval
};

/// Default tone bank; index may be fractional for interleaved banks.
double toy_tone_hz(double index);

/// Generates WAV files and JSONL manifests under out_dir.
/// Deterministic for a given spec (including seed).
/// Errors: invalid_config for zero classes/counts or non-positive durations.
ToyDataset synthesize_toy_dataset(const ToyDatasetSpec& spec, const std::string& out_dir);

}  // namespace dcasenet
