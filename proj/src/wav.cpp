// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace dcasenet::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;  // assumes little-endian host
}

template <typename T>
void append_le(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::file_not_found, path);
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> data(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(data.data()), size);
  if (!in) fail(Errc::io_error, "short read: " + path);
  return data;
}

void write_riff(const std::string& path, std::uint16_t fmt, std::uint16_t bits, int sample_rate,
                const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> out;
  const std::uint16_t channels = 1;
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(36 + payload.size()));
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  append_le<std::uint32_t>(out, 16);
  append_le<std::uint16_t>(out, fmt);
  append_le<std::uint16_t>(out, channels);
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate * block_align));
  append_le<std::uint16_t>(out, block_align);
  append_le<std::uint16_t>(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());

  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::io_error, "cannot open for write: " + path);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) fail(Errc::io_error, "short write: " + path);
}

}  // namespace

Waveform load_wav(const std::string& path) {
  const auto data = read_file(path);
  require(data.size() >= 12 && std::memcmp(data.data(), "RIFF", 4) == 0 &&
              std::memcmp(data.data() + 8, "WAVE", 4) == 0,
          Errc::unsupported_wav, "not a RIFF/WAVE file: " + path);

  std::uint16_t fmt = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  const unsigned char* payload = nullptr;
  std::size_t payload_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const char* id = reinterpret_cast<const char*>(data.data() + pos);
    const std::uint32_t chunk_size = read_le<std::uint32_t>(data.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + chunk_size > data.size()) break;
    if (std::memcmp(id, "fmt ", 4) == 0 && chunk_size >= 16) {
      fmt = read_le<std::uint16_t>(data.data() + body);
      channels = read_le<std::uint16_t>(data.data() + body + 2);
      sample_rate = read_le<std::uint32_t>(data.data() + body + 4);
      bits = read_le<std::uint16_t>(data.data() + body + 14);
      if (fmt == kFormatExtensible && chunk_size >= 40) {
        // sub-format GUID starts with the effective format tag
        fmt = read_le<std::uint16_t>(data.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload = data.data() + body;
      payload_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }

  require(have_fmt && payload != nullptr, Errc::unsupported_wav, "missing fmt/data chunk: " + path);
  require(channels >= 1 && channels <= 2, Errc::unsupported_wav,
          "unsupported channel count " + std::to_string(channels) + ": " + path);
  const bool pcm16 = fmt == kFormatPcm && bits == 16;
  const bool f32 = fmt == kFormatFloat && bits == 32;
  require(pcm16 || f32, Errc::unsupported_wav,
          "unsupported encoding (format " + std::to_string(fmt) + ", " + std::to_string(bits) +
              " bit): " + path);
  require(sample_rate > 0, Errc::unsupported_wav, "zero sample rate: " + path);

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = payload_size / frame_bytes;
  require(frames > 0, Errc::empty_audio, "zero-length payload: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  w.samples.resize(static_cast<Index>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      const unsigned char* sp = payload + (i * channels + c) * bytes_per_sample;
      if (pcm16) {
        acc += read_le<std::int16_t>(sp) / 32768.0;
      } else {
        acc += read_le<float>(sp);
      }
    }
    w.samples[static_cast<Index>(i)] = acc / channels;
  }
  require(w.samples.allFinite(), Errc::unsupported_wav, "non-finite samples: " + path);
  return w;
}

void write_wav_pcm16(const std::string& path, const Waveform& w) {
  require(w.sample_rate > 0, Errc::invalid_argument, "sample_rate must be positive");
  std::vector<unsigned char> payload;
  payload.reserve(static_cast<std::size_t>(w.samples.size()) * 2);
  for (Index i = 0; i < w.samples.size(); ++i) {
    const double scaled = std::round(w.samples[i] * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    append_le<std::int16_t>(payload, v);
  }
  write_riff(path, kFormatPcm, 16, w.sample_rate, payload);
}

void write_wav_float32(const std::string& path, const Waveform& w) {
  require(w.sample_rate > 0, Errc::invalid_argument, "sample_rate must be positive");
  std::vector<unsigned char> payload;
  payload.reserve(static_cast<std::size_t>(w.samples.size()) * 4);
  for (Index i = 0; i < w.samples.size(); ++i) {
    append_le<float>(payload, static_cast<float>(w.samples[i]));
  }
  write_riff(path, kFormatFloat, 32, w.sample_rate, payload);
}

}  // namespace dcasenet::audio
