// SPDX-License-Identifier: Apache-2.0
//
// Weight initialization: Kaiming-uniform for conv/dense weights,
// orthogonal for recurrent matrices, zeros for biases.

#pragma once

#include <Eigen/QR>

#include "dcasenet/nn/tensor.hpp"

namespace dcasenet::nn {

template <typename S>
void kaiming_uniform(Tensor<S>& t, Index fan_in, Rng& rng) {
  require(fan_in > 0, Errc::invalid_argument, "fan_in must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index i = 0; i < t.numel(); ++i) t.flat()[i] = static_cast<S>(u(rng));
}

/// Fills a rows x cols matrix with an orthogonal (or row/column-orthonormal)
/// basis from the QR of a Gaussian matrix, sign-fixed on R's diagonal.
template <typename S>
void orthogonal(MapMat<S> w, Rng& rng) {
  const Index rows = w.rows(), cols = w.cols();
  const bool tall = rows >= cols;
  const Index big = std::max(rows, cols), small = std::min(rows, cols);
  MatX<double> a(big, small);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) a(i, j) = gauss(rng);
  Eigen::HouseholderQR<MatX<double>> qr(a);
  MatX<double> q = qr.householderQ() * MatX<double>::Identity(big, small);
  const MatX<double> r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
  for (Index j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  if (tall) {
    w = q.cast<S>();
  } else {
    w = q.transpose().cast<S>();
  }
}

/// Recurrent weight block (rows = gates*hidden, cols = hidden): each
/// hidden x hidden gate block gets its own orthogonal matrix.
template <typename S>
void orthogonal_gates(Tensor<S>& t, Index hidden, Rng& rng) {
  auto m = t.matrix(t.dim(0), t.dim(1));
  require(m.rows() % hidden == 0, Errc::invalid_argument, "rows must be a multiple of hidden");
  for (Index g = 0; g < m.rows() / hidden; ++g) {
    MapMat<S> block(m.data() + g * hidden * m.cols(), hidden, m.cols());
    orthogonal<S>(block, rng);
  }
}

}  // namespace dcasenet::nn
