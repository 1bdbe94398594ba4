// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense tensor over a flat row-major Eigen buffer, plus the
// parameter record (value, gradient, trainable flag) shared by every layer.

#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "dcasenet/common.hpp"

namespace dcasenet::nn {

template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    for (Index d : shape_) require(d > 0, Errc::invalid_argument, "tensor extents must be positive");
    data_ = VecX<S>::Zero(numel_of(shape_));
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  const std::vector<Index>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index numel() const { return data_.size(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  VecX<S>& flat() { return data_; }
  const VecX<S>& flat() const { return data_; }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.allFinite(); }

  // NCHW element access
  S& at(Index n, Index c, Index h, Index w) {
    return data_[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }
  S at(Index n, Index c, Index h, Index w) const {
    return data_[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }

  /// Row-major matrix view over the flat buffer.
  MapMat<S> matrix(Index rows, Index cols) {
    require(rows * cols == numel(), Errc::shape_mismatch, "matrix view size mismatch");
    return MapMat<S>(data_.data(), rows, cols);
  }
  ConstMapMat<S> matrix(Index rows, Index cols) const {
    require(rows * cols == numel(), Errc::shape_mismatch, "matrix view size mismatch");
    return ConstMapMat<S>(data_.data(), rows, cols);
  }

  /// Contiguous sub-block of `rows` leading-dimension slices, viewed as a
  /// matrix. Valid for any tensor whose trailing dims multiply to `cols`.
  MapMat<S> rows_block(Index first_row, Index rows, Index cols) {
    return MapMat<S>(data_.data() + first_row * cols, rows, cols);
  }
  ConstMapMat<S> rows_block(Index first_row, Index rows, Index cols) const {
    return ConstMapMat<S>(data_.data() + first_row * cols, rows, cols);
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    out.flat() = data_.template cast<T>();
    return out;
  }

  static Index numel_of(const std::vector<Index>& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<Index>());
  }

 private:
  std::vector<Index> shape_;
  VecX<S> data_;
};

template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, std::vector<Index> shape, bool train = true)
      : name(std::move(n)), value(shape), grad(std::move(shape)), trainable(train) {}

  void zero_grad() { grad.set_zero(); }
};

template <typename S>
using ParamRefs = std::vector<Parameter<S>*>;

}  // namespace dcasenet::nn
