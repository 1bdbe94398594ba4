// SPDX-License-Identifier: Apache-2.0
//
// Shared scalar-templated Eigen aliases, error type, and RNG conventions.

#pragma once

#include <Eigen/Dense>

#include <random>
#include <stdexcept>
#include <string>

namespace dcasenet {

using Index = Eigen::Index;

/// Dense row-major matrix; row-major keeps matrix views consistent with the
/// flat NCHW tensor layout used by the NN kernels.
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using ArrX2 = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using MapMat = Eigen::Map<MatX<S>>;

template <typename S>
using ConstMapMat = Eigen::Map<const MatX<S>>;

/// All randomness flows through caller-owned engines seeded from run configs.
using Rng = std::mt19937_64;

enum class Errc {
  file_not_found,
  unsupported_wav,
  empty_audio,
  invalid_argument,
  invalid_manifest,
  wrong_sample_rate,
  segment_too_short,
  shape_mismatch,
  eval_before_stats,
  non_finite_gradient,
  non_deterministic_loss,
  missing_labels,
  misaligned_rolls,
  incompatible_checkpoint,
  invalid_config,
  io_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::file_not_found: return "file_not_found";
    case Errc::unsupported_wav: return "unsupported_wav";
    case Errc::empty_audio: return "empty_audio";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::invalid_manifest: return "invalid_manifest";
    case Errc::wrong_sample_rate: return "wrong_sample_rate";
    case Errc::segment_too_short: return "segment_too_short";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::eval_before_stats: return "eval_before_stats";
    case Errc::non_finite_gradient: return "non_finite_gradient";
    case Errc::non_deterministic_loss: return "non_deterministic_loss";
    case Errc::missing_labels: return "missing_labels";
    case Errc::misaligned_rolls: return "misaligned_rolls";
    case Errc::incompatible_checkpoint: return "incompatible_checkpoint";
    case Errc::invalid_config: return "invalid_config";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

/// Library-wide exception carrying a machine-readable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

/// Derive an independent sub-seed from a master seed and a stream tag, so
/// that e.g. weight init and batch sampling never share an engine.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace dcasenet
