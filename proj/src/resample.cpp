// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/resample.hpp"

#include <cmath>
#include <numeric>

namespace dcasenet::audio {

namespace {

double bessel_i0(double x) {
  // power series; converges quickly for the beta values used here
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (k * static_cast<double>(k));
    sum += term;
    if (term < sum * 1e-18) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

/// Prototype lowpass split into L phases of kTapsPerPhase taps each.
/// phases(p, t) = h[t*L + p], h designed at the upsampled rate in_rate*L.
/// The center sits on tap length/2 so the group delay is an integer number
/// of upsampled-grid samples, matching the compensation in resample().
MatX<double> design_phases(int up_factor, double cutoff_frac) {
  const int length = kTapsPerPhase * up_factor;
  const double center = length / 2.0;
  const double i0_beta = bessel_i0(kKaiserBeta);
  MatX<double> phases(up_factor, kTapsPerPhase);
  for (int n = 0; n < length; ++n) {
    const double m = (n - center) / center;  // in [-1, 1]
    const double window = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - m * m))) / i0_beta;
    const double h = up_factor * cutoff_frac * sinc(cutoff_frac * (n - center)) * window;
    phases(n % up_factor, n / up_factor) = h;
  }
  return phases;
}

}  // namespace

Waveform resample(const Waveform& w, int out_rate) {
  require(w.sample_rate > 0 && out_rate > 0, Errc::invalid_argument, "sample rates must be positive");
  require(w.samples.size() > 0, Errc::empty_audio, "cannot resample an empty waveform");
  if (w.sample_rate == out_rate) return w;

  const int g = std::gcd(w.sample_rate, out_rate);
  const int up = out_rate / g;    // L
  const int down = w.sample_rate / g;  // M
  // pass band ends at the lower of the two Nyquist frequencies
  const double cutoff_frac =
      static_cast<double>(std::min(w.sample_rate, out_rate)) / (static_cast<double>(w.sample_rate) * up);
  const MatX<double> phases = design_phases(up, cutoff_frac);

  const Index in_len = w.samples.size();
  const Index out_len = static_cast<Index>(
      std::llround(static_cast<double>(in_len) * out_rate / w.sample_rate));

  Waveform out;
  out.sample_rate = out_rate;
  out.samples.resize(out_len);
  const std::int64_t delay = static_cast<std::int64_t>(kTapsPerPhase / 2) * up;
  for (Index j = 0; j < out_len; ++j) {
    const std::int64_t u = static_cast<std::int64_t>(j) * down + delay;
    const int phase = static_cast<int>(u % up);
    const std::int64_t base = u / up;
    double acc = 0.0;
    for (int t = 0; t < kTapsPerPhase; ++t) {
      const std::int64_t idx = base - t;
      if (idx >= 0 && idx < in_len) acc += phases(phase, t) * w.samples[idx];
    }
    out.samples[j] = acc;
  }
  return out;
}

}  // namespace dcasenet::audio
