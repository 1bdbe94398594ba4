// SPDX-License-Identifier: Apache-2.0
//
// Band-limited sample-rate conversion: polyphase windowed-sinc interpolation
// with 64 taps per phase and a Kaiser window (beta = 8.6).

#pragma once

#include "dcasenet/common.hpp"
#include "dcasenet/wav.hpp"

namespace dcasenet::audio {

inline constexpr int kTargetSampleRate = 24000;
inline constexpr int kTapsPerPhase = 64;
inline constexpr double kKaiserBeta = 8.6;

/// Resamples to an arbitrary target rate. An input already at the target
/// rate is returned unchanged (bitwise), which also makes the operation
/// idempotent.
Waveform resample(const Waveform& w, int out_rate);

inline Waveform resample_to_24k(const Waveform& w) { return resample(w, kTargetSampleRate); }

}  // namespace dcasenet::audio
