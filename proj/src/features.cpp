// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/features.hpp"

#include <cstring>
#include <fstream>

namespace dcasenet::features {

audio::Waveform random_crop_waveform(const audio::Waveform& w, double crop_s, Rng& rng,
                                     Index* offset_samples) {
  require(crop_s > 0.0, Errc::invalid_argument, "crop_s must be positive");
  require(w.samples.size() > 0, Errc::empty_audio, "cannot crop an empty waveform");
  const Index out_len = static_cast<Index>(std::llround(crop_s * w.sample_rate));
  require(out_len > 0, Errc::invalid_argument, "crop is shorter than one sample");

  audio::Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(out_len);
  const Index in_len = w.samples.size();
  Index off = 0;
  if (in_len >= out_len) {
    std::uniform_int_distribution<Index> uoff(0, in_len - out_len);
    off = uoff(rng);
    out.samples = w.samples.segment(off, out_len);
  } else {
    for (Index i = 0; i < out_len; ++i) out.samples[i] = w.samples[i % in_len];
  }
  if (offset_samples != nullptr) *offset_samples = off;
  return out;
}

void write_feature_cache(const std::string& path, const MelSpectrogram<double>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io_error, "cannot open for write: " + path);
  const auto frames = static_cast<std::uint32_t>(m.frames());
  const auto bands = static_cast<std::uint32_t>(m.bands());
  const auto hop = static_cast<float>(m.frame_hop_s);
  out.write(reinterpret_cast<const char*>(&frames), 4);
  out.write(reinterpret_cast<const char*>(&bands), 4);
  out.write(reinterpret_cast<const char*>(&hop), 4);
  for (Index f = 0; f < m.frames(); ++f) {
    for (Index b = 0; b < m.bands(); ++b) {
      const auto v = static_cast<float>(m.values(f, b));
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  if (!out) fail(Errc::io_error, "short write: " + path);
}

MelSpectrogram<float> read_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::file_not_found, path);
  std::uint32_t frames = 0, bands = 0;
  float hop = 0.0f;
  in.read(reinterpret_cast<char*>(&frames), 4);
  in.read(reinterpret_cast<char*>(&bands), 4);
  in.read(reinterpret_cast<char*>(&hop), 4);
  require(static_cast<bool>(in), Errc::io_error, "truncated header: " + path);
  MelSpectrogram<float> m;
  m.frame_hop_s = hop;
  m.values.resize(static_cast<Index>(frames), static_cast<Index>(bands));
  in.read(reinterpret_cast<char*>(m.values.data()),
          static_cast<std::streamsize>(sizeof(float) * frames * bands));
  require(static_cast<bool>(in), Errc::io_error, "truncated payload: " + path);
  return m;
}

}  // namespace dcasenet::features
