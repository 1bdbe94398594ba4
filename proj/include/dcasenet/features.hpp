// SPDX-License-Identifier: Apache-2.0
//
// Log-mel spectrogram extraction and random training crops.
//
// Conventions, fixed so outputs are comparable across implementations:
// periodic Hann window, no center padding (first frame starts at sample 0),
// power-spectrum mel energies, HTK mel scale spanning 0 Hz to Nyquist,
// natural log with a floor on power values.

#pragma once

#include <string>

#include "dcasenet/common.hpp"
#include "dcasenet/fft.hpp"
#include "dcasenet/wav.hpp"

namespace dcasenet::features {

struct FeatureConfig {
  int n_fft = 2048;
  double win_ms = 40.0;
  double hop_ms = 20.0;
  int n_mels = 128;
  int sample_rate = 24000;
  double log_floor = 1e-10;

  int win_samples() const { return static_cast<int>(std::lround(win_ms * sample_rate / 1000.0)); }
  int hop_samples() const { return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0)); }

  void validate() const {
    require(sample_rate > 0, Errc::invalid_config, "sample_rate must be positive");
    require(win_ms > hop_ms && hop_ms > 0, Errc::invalid_config, "need win_ms > hop_ms > 0");
    require(n_mels >= 1 && n_mels <= n_fft / 2 + 1, Errc::invalid_config,
            "need 1 <= n_mels <= n_fft/2 + 1");
    require(win_samples() <= n_fft, Errc::invalid_config, "window exceeds n_fft");
    require(log_floor > 0, Errc::invalid_config, "log_floor must be positive");
  }
};

template <typename S>
struct MelSpectrogram {
  MatX<S> values;  // frames x n_mels, natural-log mel power
  double frame_hop_s = 0.020;

  Index frames() const { return values.rows(); }
  Index bands() const { return values.cols(); }
};

inline Index frame_count(Index samples, Index win, Index hop) {
  return samples < win ? 0 : (samples - win) / hop + 1;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filterbank, n_mels x (n_fft/2 + 1), unnormalized (peak 1).
template <typename S>
MatX<S> mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const Index bins = cfg.n_fft / 2 + 1;
  const double f_high = cfg.sample_rate / 2.0;
  const double mel_high = hz_to_mel(f_high);
  VecX<double> edges(cfg.n_mels + 2);
  for (Index b = 0; b < edges.size(); ++b) {
    edges[b] = mel_to_hz(mel_high * static_cast<double>(b) / (cfg.n_mels + 1));
  }
  MatX<S> fb = MatX<S>::Zero(cfg.n_mels, bins);
  for (Index m = 0; m < cfg.n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    for (Index k = 0; k < bins; ++k) {
      const double fk = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double rise = (fk - f0) / (f1 - f0);
      const double fall = (f2 - fk) / (f2 - f1);
      const double wgt = std::min(rise, fall);
      if (wgt > 0.0) fb(m, k) = static_cast<S>(wgt);
    }
  }
  return fb;
}

/// Center frequency (Hz) of mel band b under this configuration.
inline double mel_band_center_hz(const FeatureConfig& cfg, Index band) {
  const double mel_high = hz_to_mel(cfg.sample_rate / 2.0);
  return mel_to_hz(mel_high * static_cast<double>(band + 1) / (cfg.n_mels + 1));
}

/// Reusable extractor; precomputes window, filterbank, and FFT tables.
/// One instance per thread (the FFT scratch buffer is not shareable).
template <typename S>
class MelExtractor {
 public:
  explicit MelExtractor(const FeatureConfig& cfg)
      : cfg_(cfg), fft_(cfg.n_fft), filters_(mel_filterbank<S>(cfg)) {
    cfg_.validate();
    const int win = cfg_.win_samples();
    window_.resize(win);
    for (int i = 0; i < win; ++i) {
      window_[i] = static_cast<S>(0.5 - 0.5 * std::cos(2.0 * M_PI * i / win));
    }
    frame_.resize(cfg_.n_fft);
    spectrum_.resize(static_cast<std::size_t>(fft_.bins()));
  }

  const FeatureConfig& config() const { return cfg_; }

  MelSpectrogram<S> operator()(const audio::Waveform& w) {
    require(w.sample_rate == cfg_.sample_rate, Errc::wrong_sample_rate,
            "waveform is " + std::to_string(w.sample_rate) + " Hz, config expects " +
                std::to_string(cfg_.sample_rate));
    const Index win = cfg_.win_samples();
    const Index hop = cfg_.hop_samples();
    const Index frames = frame_count(w.samples.size(), win, hop);
    require(frames >= 1, Errc::segment_too_short,
            "segment shorter than one window (" + std::to_string(win) + " samples)");

    MatX<S> power(frames, fft_.bins());
    for (Index f = 0; f < frames; ++f) {
      const Index start = f * hop;
      for (Index i = 0; i < win; ++i) {
        frame_[i] = static_cast<S>(w.samples[start + i]) * window_[i];
      }
      frame_.tail(cfg_.n_fft - win).setZero();
      fft_.forward(frame_.data(), spectrum_.data());
      for (Index k = 0; k < fft_.bins(); ++k) {
        power(f, k) = std::norm(spectrum_[static_cast<std::size_t>(k)]);
      }
    }

    MelSpectrogram<S> out;
    out.frame_hop_s = cfg_.hop_ms / 1000.0;
    out.values = (power * filters_.transpose())
                     .array()
                     .max(static_cast<S>(cfg_.log_floor))
                     .log()
                     .matrix();
    return out;
  }

 private:
  FeatureConfig cfg_;
  RealFft<S> fft_;
  MatX<S> filters_;
  VecX<S> window_;
  VecX<S> frame_;
  std::vector<std::complex<S>> spectrum_;
};

template <typename S>
MelSpectrogram<S> log_mel_spectrogram(const audio::Waveform& w, const FeatureConfig& cfg) {
  MelExtractor<S> extract(cfg);
  return extract(w);
}

/// Crop of exactly crop_s * sample_rate samples at a uniformly random
/// offset; shorter inputs are tiled then truncated (offset 0). The chosen
/// offset feeds event-label alignment during training.
audio::Waveform random_crop_waveform(const audio::Waveform& w, double crop_s, Rng& rng,
                                     Index* offset_samples = nullptr);

/// Binary spectrogram cache: u32 frames, u32 bands, f32 hop_s header, then
/// frames*bands little-endian f32 values, row-major.
void write_feature_cache(const std::string& path, const MelSpectrogram<double>& m);
MelSpectrogram<float> read_feature_cache(const std::string& path);

}  // namespace dcasenet::features
