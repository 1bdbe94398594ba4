// SPDX-License-Identifier: Apache-2.0
//
// Iterative radix-2 FFT with precomputed twiddles, plus a real-input
// transform via the packed half-length trick.

#pragma once

#include <complex>
#include <vector>

#include "dcasenet/common.hpp"

namespace dcasenet {

template <typename S>
class Fft {
 public:
  explicit Fft(Index n) : n_(n) {
    require(n >= 2 && (n & (n - 1)) == 0, Errc::invalid_argument, "FFT size must be a power of two");
    twiddle_.resize(static_cast<std::size_t>(n / 2));
    for (Index j = 0; j < n / 2; ++j) {
      const double a = -2.0 * M_PI * static_cast<double>(j) / static_cast<double>(n);
      twiddle_[static_cast<std::size_t>(j)] = {static_cast<S>(std::cos(a)), static_cast<S>(std::sin(a))};
    }
    bitrev_.resize(static_cast<std::size_t>(n));
    Index bits = 0;
    while ((Index{1} << bits) < n) ++bits;
    for (Index i = 0; i < n; ++i) {
      Index r = 0;
      for (Index b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
      bitrev_[static_cast<std::size_t>(i)] = r;
    }
  }

  Index size() const { return n_; }

  /// In-place forward DFT of n complex points.
  void forward(std::complex<S>* a) const {
    for (Index i = 0; i < n_; ++i) {
      const Index j = bitrev_[static_cast<std::size_t>(i)];
      if (i < j) std::swap(a[i], a[j]);
    }
    for (Index len = 2; len <= n_; len <<= 1) {
      const Index half = len >> 1;
      const Index step = n_ / len;
      for (Index base = 0; base < n_; base += len) {
        for (Index k = 0; k < half; ++k) {
          const std::complex<S> w = twiddle_[static_cast<std::size_t>(k * step)];
          const std::complex<S> u = a[base + k];
          const std::complex<S> v = a[base + k + half] * w;
          a[base + k] = u + v;
          a[base + k + half] = u - v;
        }
      }
    }
  }

 private:
  Index n_;
  std::vector<std::complex<S>> twiddle_;
  std::vector<Index> bitrev_;
};

/// Real-input FFT of size n (power of two, n >= 4) producing n/2 + 1 bins.
/// Runs a complex FFT of size n/2 over packed even/odd samples.
template <typename S>
class RealFft {
 public:
  explicit RealFft(Index n) : n_(n), half_(n / 2), fft_(n / 2) {
    require(n >= 4 && (n & (n - 1)) == 0, Errc::invalid_argument,
            "real FFT size must be a power of two >= 4");
    unpack_.resize(static_cast<std::size_t>(half_ + 1));
    for (Index k = 0; k <= half_; ++k) {
      const double a = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      unpack_[static_cast<std::size_t>(k)] = {static_cast<S>(std::cos(a)), static_cast<S>(std::sin(a))};
    }
    work_.resize(static_cast<std::size_t>(half_));
  }

  Index size() const { return n_; }
  Index bins() const { return half_ + 1; }

  /// out must hold n/2 + 1 complex bins. Not thread-safe (scratch buffer).
  void forward(const S* in, std::complex<S>* out) {
    for (Index i = 0; i < half_; ++i) {
      work_[static_cast<std::size_t>(i)] = {in[2 * i], in[2 * i + 1]};
    }
    fft_.forward(work_.data());
    const auto zget = [&](Index k) { return k == half_ ? work_[0] : work_[static_cast<std::size_t>(k)]; };
    for (Index k = 0; k <= half_; ++k) {
      const std::complex<S> zk = zget(k);
      const std::complex<S> zc = std::conj(zget(half_ - k));
      const std::complex<S> even = S(0.5) * (zk + zc);
      const std::complex<S> odd = std::complex<S>(0, -0.5) * (zk - zc);
      out[k] = even + unpack_[static_cast<std::size_t>(k)] * odd;
    }
  }

 private:
  Index n_, half_;
  Fft<S> fft_;
  std::vector<std::complex<S>> unpack_;
  std::vector<std::complex<S>> work_;
};

}  // namespace dcasenet
