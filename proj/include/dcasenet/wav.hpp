// SPDX-License-Identifier: Apache-2.0
//
// RIFF/WAVE reader and writer for PCM16 and IEEE float32 payloads.

#pragma once

#include <string>

#include "dcasenet/common.hpp"

namespace dcasenet::audio {

/// Mono sample buffer in [-1, 1] with its sample rate.
struct Waveform {
  VecX<double> samples;
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// Loads a PCM WAV file (16-bit int or 32-bit float, 1-2 channels).
/// 16-bit values map to v/32768; stereo is averaged to mono.
/// Errors: file_not_found, unsupported_wav, empty_audio.
Waveform load_wav(const std::string& path);

/// Writes a mono waveform as PCM16 (samples rounded, clamped to the int16 range).
void write_wav_pcm16(const std::string& path, const Waveform& w);

/// Writes a mono waveform as IEEE float32.
void write_wav_float32(const std::string& path, const Waveform& w);

}  // namespace dcasenet::audio
