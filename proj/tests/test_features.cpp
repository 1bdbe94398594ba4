// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <random>
#include <vector>

#include "dcasenet/features.hpp"
#include "dcasenet/fft.hpp"

using namespace dcasenet;
using namespace dcasenet::features;
using dcasenet::audio::Waveform;

namespace {

Waveform noise(double amp, double dur_s, int rate, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> d(-amp, amp);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<Index>(std::llround(dur_s * rate)));
  for (Index i = 0; i < w.samples.size(); ++i) w.samples[i] = d(rng);
  return w;
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

/// O(n^2) reference DFT.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) /
                        static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("real FFT matches a naive DFT") {
  Rng rng(99);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (Index n : {4, 16, 64, 256}) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = d(rng);

    RealFft<double> fft(n);
    std::vector<std::complex<double>> got(static_cast<std::size_t>(fft.bins()));
    fft.forward(x.data(), got.data());

    const auto want = naive_dft(x);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(std::abs(got[k] - want[k]) < 1e-9 * static_cast<double>(n));
    }
  }
}

TEST_CASE("ten seconds at 24 kHz yields 499 frames of 128 bands") {
  const FeatureConfig cfg;  // defaults
  CHECK(cfg.win_samples() == 960);
  CHECK(cfg.hop_samples() == 480);
  CHECK(frame_count(240000, 960, 480) == 499);

  const auto mel = log_mel_spectrogram<double>(noise(0.1, 10.0, 24000, 3), cfg);
  CHECK(mel.frames() == 499);
  CHECK(mel.bands() == 128);
  CHECK(mel.frame_hop_s == doctest::Approx(0.020));
}

TEST_CASE("frame count drops samples that do not fill a window") {
  CHECK(frame_count(960, 960, 480) == 1);
  CHECK(frame_count(1439, 960, 480) == 1);
  CHECK(frame_count(1440, 960, 480) == 2);
  CHECK(frame_count(959, 960, 480) == 0);
}

TEST_CASE("silence maps to the log floor everywhere") {
  Waveform w;
  w.sample_rate = 24000;
  w.samples = VecX<double>::Zero(24000);
  const FeatureConfig cfg;
  const auto mel = log_mel_spectrogram<double>(w, cfg);
  const double floor_log = std::log(cfg.log_floor);
  CHECK((mel.values.array() - floor_log).abs().maxCoeff() == 0.0);
}

TEST_CASE("scaling the waveform shifts log energies by twice the log gain") {
  const Waveform base = noise(0.3, 1.0, 24000, 11);
  Waveform scaled = base;
  const double c = 3.7;
  scaled.samples *= c;

  const FeatureConfig cfg;
  const auto a = log_mel_spectrogram<double>(base, cfg);
  const auto b = log_mel_spectrogram<double>(scaled, cfg);
  const double shift = 2.0 * std::log(c);
  CHECK((b.values - a.values).array().abs().maxCoeff() ==
        doctest::Approx(shift).epsilon(1e-9));
  CHECK((b.values - a.values).array().abs().minCoeff() ==
        doctest::Approx(shift).epsilon(1e-9));
}

TEST_CASE("mel filterbank geometry") {
  FeatureConfig cfg;
  cfg.n_mels = 32;
  const MatX<double> fb = mel_filterbank<double>(cfg);
  REQUIRE(fb.rows() == 32);
  REQUIRE(fb.cols() == cfg.n_fft / 2 + 1);
  CHECK(fb.minCoeff() >= 0.0);
  CHECK(fb.maxCoeff() <= 1.0 + 1e-12);
  for (Index m = 0; m < fb.rows(); ++m) {
    CHECK(fb.row(m).sum() > 0.0);            // every triangle catches bins
    CHECK(fb.row(m).maxCoeff() > 0.5);       // near-unit peaks on the grid
  }
  // triangles are local: the first filter must not reach Nyquist
  CHECK(fb(0, fb.cols() - 1) == 0.0);
  CHECK(fb(fb.rows() - 1, 0) == 0.0);
  // HTK mapping round trip
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-10));
  CHECK(hz_to_mel(1000.0) == doctest::Approx(1000.0).epsilon(2e-3));
}

TEST_CASE("a pure tone lands in its mel band") {
  FeatureConfig cfg;
  cfg.n_mels = 40;
  for (Index band : {Index{4}, Index{17}, Index{33}}) {
    const double hz = mel_band_center_hz(cfg, band);
    const auto mel = log_mel_spectrogram<double>(sine(hz, 0.5, 0.5, 24000), cfg);
    const VecX<double> mean = mel.values.colwise().mean();
    Index peak = 0;
    mean.maxCoeff(&peak);
    CHECK(peak == band);
  }
}

TEST_CASE("feature cache round trip") {
  const auto mel = log_mel_spectrogram<double>(noise(0.2, 0.8, 24000, 21), FeatureConfig{});
  const std::string path =
      (std::filesystem::temp_directory_path() / "dcn_cache.melspec").string();
  write_feature_cache(path, mel);
  const auto back = read_feature_cache(path);

  REQUIRE(back.frames() == mel.frames());
  REQUIRE(back.bands() == mel.bands());
  CHECK(back.frame_hop_s == doctest::Approx(mel.frame_hop_s));
  for (Index f = 0; f < mel.frames(); ++f) {
    for (Index b = 0; b < mel.bands(); ++b) {
      CHECK(back.values(f, b) == static_cast<float>(mel.values(f, b)));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("random crops have exact length and in-range offsets") {
  const Waveform w = noise(0.1, 2.0, 24000, 31);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    Index offset = -1;
    const Waveform crop = random_crop_waveform(w, 0.5, rng, &offset);
    REQUIRE(crop.samples.size() == 12000);
    CHECK(offset >= 0);
    CHECK(offset <= w.samples.size() - 12000);
    CHECK(crop.samples == w.samples.segment(offset, 12000));
  }
}

TEST_CASE("short inputs are tiled to the crop length") {
  Waveform w;
  w.sample_rate = 24000;
  w.samples.resize(1000);
  for (Index i = 0; i < 1000; ++i) w.samples[i] = static_cast<double>(i);
  Rng rng(6);
  Index offset = -1;
  const Waveform crop = random_crop_waveform(w, 0.1, rng, &offset);  // 2400 samples
  REQUIRE(crop.samples.size() == 2400);
  CHECK(offset == 0);
  for (Index i = 0; i < 2400; ++i) CHECK(crop.samples[i] == w.samples[i % 1000]);
}

TEST_CASE("crops are deterministic for a given generator state") {
  const Waveform w = noise(0.1, 3.0, 24000, 41);
  Rng a(77), b(77);
  for (int i = 0; i < 10; ++i) {
    const Waveform ca = random_crop_waveform(w, 1.0, a);
    const Waveform cb = random_crop_waveform(w, 1.0, b);
    CHECK(ca.samples == cb.samples);
  }
}

TEST_CASE("extractor validates inputs") {
  MelExtractor<double> extract{FeatureConfig{}};
  Waveform wrong_rate = noise(0.1, 0.5, 16000, 51);
  CHECK_THROWS_AS(extract(wrong_rate), Error);

  Waveform too_short;
  too_short.sample_rate = 24000;
  too_short.samples = VecX<double>::Zero(100);
  CHECK_THROWS_AS(extract(too_short), Error);

  FeatureConfig bad;
  bad.n_mels = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = FeatureConfig{};
  bad.hop_ms = 50.0;  // hop above window
  CHECK_THROWS_AS(bad.validate(), Error);
}
