// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dcasenet/resample.hpp"
#include "dcasenet/wav.hpp"

using namespace dcasenet;
using namespace dcasenet::audio;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Waveform sine(double freq_hz, double amp, double dur_s, int rate) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<Index>(std::llround(dur_s * rate)));
  for (Index i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = amp * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / rate);
  }
  return w;
}

/// Single-bin Goertzel-style DFT magnitude (normalized); oracle for tone energy.
double tone_magnitude(const VecX<double>& x, double freq_hz, int rate) {
  std::complex<double> acc(0.0, 0.0);
  for (Index i = 0; i < x.size(); ++i) {
    const double ph = -2.0 * M_PI * freq_hz * static_cast<double>(i) / rate;
    acc += x[i] * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return 2.0 * std::abs(acc) / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("pcm16 round trip stays within one quantization step") {
  Rng rng(7);
  std::uniform_real_distribution<double> amp(-0.999, 0.999);
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(4000);
  for (Index i = 0; i < w.samples.size(); ++i) w.samples[i] = amp(rng);

  const std::string path = temp_path("dcn_pcm16.wav");
  write_wav_pcm16(path, w);
  const Waveform back = load_wav(path);

  REQUIRE(back.sample_rate == w.sample_rate);
  REQUIRE(back.samples.size() == w.samples.size());
  CHECK((back.samples - w.samples).cwiseAbs().maxCoeff() <= 1.0 / 32768.0);
  std::remove(path.c_str());
}

TEST_CASE("float32 round trip is exact at float precision") {
  Waveform w = sine(440.0, 0.5, 0.1, 24000);
  const std::string path = temp_path("dcn_f32.wav");
  write_wav_float32(path, w);
  const Waveform back = load_wav(path);

  REQUIRE(back.samples.size() == w.samples.size());
  for (Index i = 0; i < w.samples.size(); ++i) {
    CHECK(back.samples[i] == static_cast<double>(static_cast<float>(w.samples[i])));
  }
  std::remove(path.c_str());
}

TEST_CASE("pcm16 writer clamps out-of-range samples") {
  Waveform w;
  w.sample_rate = 8000;
  w.samples.resize(3);
  w.samples << 1.5, -1.5, 0.0;
  const std::string path = temp_path("dcn_clip.wav");
  write_wav_pcm16(path, w);
  const Waveform back = load_wav(path);
  CHECK(back.samples[0] == doctest::Approx(32767.0 / 32768.0));
  CHECK(back.samples[1] == doctest::Approx(-1.0));
  CHECK(back.samples[2] == doctest::Approx(0.0));
  std::remove(path.c_str());
}

TEST_CASE("stereo pcm16 input is averaged to mono") {
  // hand-built stereo RIFF: two frames, L/R = (+0.25, -0.25) then (0.5, 0.5)
  const std::string path = temp_path("dcn_stereo.wav");
  {
    const std::int16_t frames[4] = {8192, -8192, 16384, 16384};
    const std::uint32_t data_bytes = sizeof(frames);
    std::ofstream f(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    f.write("RIFF", 4);
    u32(36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(1);      // PCM
    u16(2);      // stereo
    u32(8000);   // sample rate
    u32(8000 * 4);
    u16(4);
    u16(16);
    f.write("data", 4);
    u32(data_bytes);
    f.write(reinterpret_cast<const char*>(frames), data_bytes);
  }
  const Waveform w = load_wav(path);
  REQUIRE(w.samples.size() == 2);
  CHECK(w.samples[0] == doctest::Approx(0.0));
  CHECK(w.samples[1] == doctest::Approx(16384.0 / 32768.0));
  std::remove(path.c_str());
}

TEST_CASE("load_wav error codes") {
  try {
    load_wav(temp_path("dcn_missing.wav"));
    FAIL("expected file_not_found");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::file_not_found);
  }

  const std::string bad = temp_path("dcn_bad.wav");
  {
    std::ofstream f(bad, std::ios::binary);
    f << "this is not a wav file at all, just text padding to pass 44 bytes....";
  }
  try {
    load_wav(bad);
    FAIL("expected unsupported_wav");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unsupported_wav);
  }
  std::remove(bad.c_str());
}

TEST_CASE("resample is the identity at equal rates") {
  const Waveform w = sine(1000.0, 0.4, 0.05, 24000);
  const Waveform same = resample(w, 24000);
  CHECK(same.sample_rate == 24000);
  CHECK(same.samples == w.samples);
}

TEST_CASE("resample output length follows the rate ratio") {
  Waveform w;
  w.sample_rate = 44100;
  w.samples = VecX<double>::Zero(44100);
  CHECK(resample(w, 24000).samples.size() == 24000);

  w.sample_rate = 48000;
  w.samples = VecX<double>::Zero(12345);
  CHECK(resample(w, 24000).samples.size() == 6173);  // llround(12345/2)

  w.sample_rate = 8000;
  w.samples = VecX<double>::Zero(800);
  CHECK(resample(w, 24000).samples.size() == 2400);
}

TEST_CASE("downsampling preserves a passband tone") {
  // 1 kHz is far below both Nyquist limits; interior samples should match
  // an analytically generated tone at the target rate
  const Waveform src = sine(1000.0, 0.5, 0.5, 48000);
  const Waveform out = resample(src, 24000);
  const Waveform ref = sine(1000.0, 0.5, 0.5, 24000);
  REQUIRE(out.samples.size() == ref.samples.size());

  const Index guard = 64;  // filter edge effects
  double max_err = 0.0;
  for (Index i = guard; i < out.samples.size() - guard; ++i) {
    max_err = std::max(max_err, std::abs(out.samples[i] - ref.samples[i]));
  }
  CHECK(max_err < 5e-4);
}

TEST_CASE("upsampling preserves a passband tone") {
  const Waveform src = sine(700.0, 0.5, 0.5, 8000);
  const Waveform out = resample(src, 24000);
  const Waveform ref = sine(700.0, 0.5, 0.5, 24000);
  REQUIRE(out.samples.size() == ref.samples.size());

  const Index guard = 200;
  double max_err = 0.0;
  for (Index i = guard; i < out.samples.size() - guard; ++i) {
    max_err = std::max(max_err, std::abs(out.samples[i] - ref.samples[i]));
  }
  CHECK(max_err < 5e-4);
}

TEST_CASE("downsampling rejects out-of-band energy") {
  // 16 kHz tone at 44.1 kHz lies above the 12 kHz target Nyquist; after
  // resampling its energy must drop by orders of magnitude
  const Waveform src = sine(16000.0, 0.5, 0.5, 44100);
  const Waveform out = resample(src, 24000);
  const Index n = out.samples.size();
  const VecX<double> interior = out.samples.segment(n / 4, n / 2);
  // no narrowband image survives anywhere near the folded frequency
  const double folded = tone_magnitude(interior, 24000.0 - 16000.0, 24000);
  CHECK(folded < 1e-3);
  CHECK(interior.cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("resample validates its inputs") {
  Waveform w;
  w.sample_rate = 24000;
  CHECK_THROWS_AS(resample(w, 24000), Error);  // empty
  w.samples = VecX<double>::Zero(10);
  CHECK_THROWS_AS(resample(w, 0), Error);
}
