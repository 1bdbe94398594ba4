// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/toy_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "dcasenet/wav.hpp"

namespace dcasenet {

namespace fs = std::filesystem;

double toy_tone_hz(double index) { return 300.0 * std::pow(2.0, 0.42 * index); }

namespace {

struct ToneBank {
  std::vector<double> tag_hz;
  std::vector<double> sed_hz;
  std::vector<std::vector<double>> scene_hz;
};

ToneBank resolve_tones(const ToyDatasetSpec& s) {
  ToneBank b;
  b.tag_hz = s.tag_tone_hz;
  if (b.tag_hz.empty()) {
    for (int j = 0; j < s.tag_classes; ++j) b.tag_hz.push_back(toy_tone_hz(j + 0.5));
  }
  b.sed_hz = s.sed_tone_hz;
  if (b.sed_hz.empty()) {
    for (int k = 0; k < s.sed_classes; ++k) b.sed_hz.push_back(toy_tone_hz(2.0 * k + 0.25));
  }
  b.scene_hz = s.scene_tones_hz;
  if (b.scene_hz.empty()) {
    for (int sc = 0; sc < s.asc_scenes; ++sc) {
      b.scene_hz.push_back({toy_tone_hz(sc), toy_tone_hz(sc + 5.75)});
    }
  }
  require(static_cast<int>(b.tag_hz.size()) == s.tag_classes, Errc::invalid_config,
          "tag tone map size must match tag_classes");
  require(static_cast<int>(b.sed_hz.size()) == s.sed_classes, Errc::invalid_config,
          "sed tone map size must match sed_classes");
  require(static_cast<int>(b.scene_hz.size()) == s.asc_scenes, Errc::invalid_config,
          "scene tone map size must match asc_scenes");
  const double nyquist = s.sample_rate / 2.0;
  auto in_band = [&](double f) { return f > 0.0 && f < nyquist; };
  for (double f : b.tag_hz) require(in_band(f), Errc::invalid_config, "tag tone out of band");
  for (double f : b.sed_hz) require(in_band(f), Errc::invalid_config, "sed tone out of band");
  for (const auto& pair : b.scene_hz)
    for (double f : pair) require(in_band(f), Errc::invalid_config, "scene tone out of band");
  return b;
}

void add_tone(VecX<double>& x, int sr, double hz, double amp, double phase, Index begin, Index end,
              Index ramp) {
  for (Index i = begin; i < end; ++i) {
    double env = 1.0;
    if (i - begin < ramp) env = 0.5 - 0.5 * std::cos(M_PI * (i - begin) / static_cast<double>(ramp));
    if (end - 1 - i < ramp)
      env = std::min(env, 0.5 - 0.5 * std::cos(M_PI * (end - 1 - i) / static_cast<double>(ramp)));
    x[i] += amp * env * std::sin(2.0 * M_PI * hz * i / sr + phase);
  }
}

void add_noise(VecX<double>& x, double amp, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index i = 0; i < x.size(); ++i) x[i] += amp * u(rng);
}

void finalize_and_write(VecX<double>& x, int sr, const std::string& path) {
  const double peak = x.cwiseAbs().maxCoeff();
  if (peak > 0.99) x *= 0.99 / peak;
  audio::Waveform w{std::move(x), sr};
  audio::write_wav_pcm16(path, w);
}

}  // namespace

ToyDataset synthesize_toy_dataset(const ToyDatasetSpec& spec, const std::string& out_dir) {
  require(spec.sample_rate > 0, Errc::invalid_config, "sample_rate must be positive");
  require(spec.asc_scenes > 0 && spec.tag_classes > 0 && spec.sed_classes > 0, Errc::invalid_config,
          "class counts must be positive");
  require(spec.asc_duration_s > 0 && spec.tag_duration_s > 0 && spec.sed_duration_s > 0,
          Errc::invalid_config, "durations must be positive");
  require(spec.asc_train_per_scene > 0 && spec.tag_train_segments > 0 && spec.sed_train_segments > 0,
          Errc::invalid_config, "segment counts must be positive");
  require(spec.tag_max_tags >= 1, Errc::invalid_config, "tag_max_tags must be >= 1");

  const ToneBank tones = resolve_tones(spec);
  fs::create_directories(out_dir);

  ToyDataset out;
  out.dir = out_dir;
  const int sr = spec.sample_rate;
  const Index ramp = sr / 100;  // 10 ms fade for event bursts
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * M_PI);

  auto segment_path = [&](const char* stem, int idx) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03d.wav", stem, idx);
    return (fs::path(out_dir) / name).string();
  };

  // ---- ASC: each scene is a fixed pair of tones with per-segment jitter ----
  auto make_asc = [&](bool eval, std::vector<ManifestEntry>& dst) {
    const int per_scene = eval ? spec.asc_eval_per_scene : spec.asc_train_per_scene;
    const char* stem = eval ? "asc_eval" : "asc_train";
    int idx = 0;
    for (int sc = 0; sc < spec.asc_scenes; ++sc) {
      for (int k = 0; k < per_scene; ++k, ++idx) {
        Rng rng(sub_seed(spec.seed, (eval ? 1000000u : 0u) + 17u * idx + 3u));
        const Index n = static_cast<Index>(std::llround(spec.asc_duration_s * sr));
        VecX<double> x = VecX<double>::Zero(n);
        std::uniform_real_distribution<double> jitter(0.8, 1.2);
        for (double hz : tones.scene_hz[sc]) {
          add_tone(x, sr, hz, spec.tone_amp * jitter(rng), uphase(rng), 0, n, ramp);
        }
        add_noise(x, spec.noise_amp, rng);
        const std::string path = segment_path(stem, idx);
        finalize_and_write(x, sr, path);
        ManifestEntry e;
        e.path = path;
        e.task = Task::ASC;
        e.scene_id = sc;
        dst.push_back(e);
      }
    }
  };

  // ---- TAG: random tag subset, each tag contributes its tone throughout ----
  auto make_tag = [&](bool eval, std::vector<ManifestEntry>& dst) {
    const int count = eval ? spec.tag_eval_segments : spec.tag_train_segments;
    const char* stem = eval ? "tag_eval" : "tag_train";
    for (int idx = 0; idx < count; ++idx) {
      Rng rng(sub_seed(spec.seed, (eval ? 2000000u : 3000000u) + 31u * idx + 7u));
      const Index n = static_cast<Index>(std::llround(spec.tag_duration_s * sr));
      VecX<double> x = VecX<double>::Zero(n);
      const int max_tags = std::min(spec.tag_max_tags, spec.tag_classes);
      std::uniform_int_distribution<int> ucount(1, max_tags);
      const int n_tags = ucount(rng);
      std::vector<int> all(spec.tag_classes);
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      std::vector<int> chosen(all.begin(), all.begin() + n_tags);
      std::sort(chosen.begin(), chosen.end());
      for (int tag : chosen) add_tone(x, sr, tones.tag_hz[tag], spec.tone_amp, uphase(rng), 0, n, ramp);
      add_noise(x, spec.noise_amp, rng);
      const std::string path = segment_path(stem, idx);
      finalize_and_write(x, sr, path);
      ManifestEntry e;
      e.path = path;
      e.task = Task::TAG;
      e.tags = chosen;
      dst.push_back(e);
    }
  };

  // ---- SED: non-overlapping tone bursts over a noise floor ----
  auto make_sed = [&](bool eval, std::vector<ManifestEntry>& dst) {
    const int count = eval ? spec.sed_eval_segments : spec.sed_train_segments;
    const char* stem = eval ? "sed_eval" : "sed_train";
    for (int idx = 0; idx < count; ++idx) {
      Rng rng(sub_seed(spec.seed, (eval ? 4000000u : 5000000u) + 43u * idx + 11u));
      const Index n = static_cast<Index>(std::llround(spec.sed_duration_s * sr));
      VecX<double> x = VecX<double>::Zero(n);
      add_noise(x, spec.noise_amp, rng);
      std::uniform_int_distribution<int> ucls(0, spec.sed_classes - 1);
      std::uniform_real_distribution<double> udur(0.6, 1.1);
      std::uniform_real_distribution<double> ugap(0.1, 0.35);
      std::vector<Event> events;
      double t = ugap(rng);
      for (int ev = 0; ev < spec.sed_events_per_segment; ++ev) {
        const double dur = udur(rng);
        if (t + dur > spec.sed_duration_s - 0.05) break;
        const int cls = ucls(rng);
        const auto begin = static_cast<Index>(std::llround(t * sr));
        const auto end = static_cast<Index>(std::llround((t + dur) * sr));
        add_tone(x, sr, tones.sed_hz[cls], spec.tone_amp * 1.5, uphase(rng), begin, end, ramp);
        events.push_back({t, t + dur, cls});
        t += dur + ugap(rng);
      }
      const std::string path = segment_path(stem, idx);
      finalize_and_write(x, sr, path);
      ManifestEntry e;
      e.path = path;
      e.task = Task::SED;
      e.events = std::move(events);
      dst.push_back(e);
    }
  };

  std::vector<ManifestEntry> asc_train, asc_eval, tag_train, tag_eval, sed_train, sed_eval;
  make_asc(false, asc_train);
  make_asc(true, asc_eval);
  make_tag(false, tag_train);
  make_tag(true, tag_eval);
  make_sed(false, sed_train);
  make_sed(true, sed_eval);

  auto write = [&](const char* name, const std::vector<ManifestEntry>& entries) {
    const std::string path = (fs::path(out_dir) / name).string();
    save_manifest(path, entries);
    out.entries.insert(out.entries.end(), entries.begin(), entries.end());
    return path;
  };
  out.asc_train_manifest = write("asc_train.jsonl", asc_train);
  out.asc_eval_manifest = write("asc_eval.jsonl", asc_eval);
  out.tag_train_manifest = write("tag_train.jsonl", tag_train);
  out.tag_eval_manifest = write("tag_eval.jsonl", tag_eval);
  out.sed_train_manifest = write("sed_train.jsonl", sed_train);
  out.sed_eval_manifest = write("sed_eval.jsonl", sed_eval);
  return out;
}

}  // namespace dcasenet
