// SPDX-License-Identifier: Apache-2.0
//
// Gated recurrent units with full backpropagation through time.
//
// Gate math (reset applied after the recurrent matmul, gates stacked [r;z;n]):
//   r  = sigmoid(x W_ir' + b_ir + h W_hr' + b_hr)
//   z  = sigmoid(x W_iz' + b_iz + h W_hz' + b_hz)
//   c  = h W_hn' + b_hn
//   n  = tanh(x W_in' + b_in + r . c)
//   h' = (1 - z) . n + z . h
//
// Sequences run time-major internally so the input projections for all
// steps collapse into one GEMM.

#pragma once

#include "dcasenet/nn/init.hpp"
#include "dcasenet/nn/tensor.hpp"

namespace dcasenet::nn {

/// Single-direction GRU over a time-major batch. Initial hidden state is
/// zero. Row t*batch+i of the input holds features of sample i at step t.
template <typename S>
class Gru {
 public:
  Gru(std::string name, Index input, Index hidden)
      : w_ih_(name + ".w_ih", {3 * hidden, input}),
        w_hh_(name + ".w_hh", {3 * hidden, hidden}),
        b_ih_(name + ".b_ih", {3 * hidden}),
        b_hh_(name + ".b_hh", {3 * hidden}),
        in_(input),
        h_(hidden) {}

  void init(Rng& rng) {
    kaiming_uniform(w_ih_.value, in_, rng);
    orthogonal_gates(w_hh_.value, h_, rng);
  }

  Index hidden_size() const { return h_; }
  Index input_size() const { return in_; }

  MatX<S> forward(const MatX<S>& x_tm, Index t_steps, Index batch) {
    require(x_tm.rows() == t_steps * batch && x_tm.cols() == in_, Errc::shape_mismatch,
            w_ih_.name + ": bad sequence shape");
    t_ = t_steps;
    n_ = batch;
    x_ = x_tm;
    auto wih = w_ih_.value.matrix(3 * h_, in_);
    auto whh = w_hh_.value.matrix(3 * h_, h_);
    MatX<S> pre_ih = x_tm * wih.transpose();
    pre_ih.rowwise() += b_ih_.value.flat().transpose();

    r_.resize(t_ * n_, h_);
    z_.resize(t_ * n_, h_);
    nn_.resize(t_ * n_, h_);
    c_.resize(t_ * n_, h_);
    hprev_.resize(t_ * n_, h_);
    MatX<S> out(t_ * n_, h_);
    MatX<S> h = MatX<S>::Zero(n_, h_);
    for (Index t = 0; t < t_; ++t) {
      hprev_.middleRows(t * n_, n_) = h;
      MatX<S> pre_hh = h * whh.transpose();
      pre_hh.rowwise() += b_hh_.value.flat().transpose();
      auto gi = pre_ih.middleRows(t * n_, n_);
      auto r = r_.middleRows(t * n_, n_);
      auto z = z_.middleRows(t * n_, n_);
      auto n = nn_.middleRows(t * n_, n_);
      auto c = c_.middleRows(t * n_, n_);
      r = sigmoid_arr(gi.leftCols(h_) + pre_hh.leftCols(h_));
      z = sigmoid_arr(gi.middleCols(h_, h_) + pre_hh.middleCols(h_, h_));
      c = pre_hh.rightCols(h_);
      n = (gi.rightCols(h_).array() + r.array() * c.array()).tanh().matrix();
      h = ((S(1) - z.array()) * n.array() + z.array() * h.array()).matrix();
      out.middleRows(t * n_, n_) = h;
    }
    return out;
  }

  MatX<S> backward(const MatX<S>& dy_tm) {
    auto wih = w_ih_.value.matrix(3 * h_, in_);
    auto whh = w_hh_.value.matrix(3 * h_, h_);
    auto dwhh = w_hh_.grad.matrix(3 * h_, h_);
    MatX<S> d_ih_all(t_ * n_, 3 * h_);
    MatX<S> dh = MatX<S>::Zero(n_, h_);
    MatX<S> d_hh_t(n_, 3 * h_);
    for (Index t = t_ - 1; t >= 0; --t) {
      dh += dy_tm.middleRows(t * n_, n_);
      auto r = r_.middleRows(t * n_, n_).array();
      auto z = z_.middleRows(t * n_, n_).array();
      auto n = nn_.middleRows(t * n_, n_).array();
      auto c = c_.middleRows(t * n_, n_).array();
      auto hp = hprev_.middleRows(t * n_, n_);
      ArrX2<S> dz = dh.array() * (hp.array() - n);
      ArrX2<S> dan = dh.array() * (S(1) - z) * (S(1) - n * n);
      ArrX2<S> dar = dan * c * r * (S(1) - r);
      auto d_ih_t = d_ih_all.middleRows(t * n_, n_);
      d_ih_t.leftCols(h_) = dar.matrix();
      d_ih_t.middleCols(h_, h_) = (dz * z * (S(1) - z)).matrix();
      d_ih_t.rightCols(h_) = dan.matrix();
      d_hh_t.leftCols(h_) = d_ih_t.leftCols(h_);
      d_hh_t.middleCols(h_, h_) = d_ih_t.middleCols(h_, h_);
      d_hh_t.rightCols(h_) = (dan * r).matrix();
      dwhh.noalias() += d_hh_t.transpose() * hp;
      b_hh_.grad.flat() += d_hh_t.colwise().sum().transpose();
      dh = (dh.array() * z).matrix();
      dh.noalias() += d_hh_t * whh;
    }
    w_ih_.grad.matrix(3 * h_, in_).noalias() += d_ih_all.transpose() * x_;
    b_ih_.grad.flat() += d_ih_all.colwise().sum().transpose();
    return d_ih_all * wih;
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&w_ih_);
    out.push_back(&w_hh_);
    out.push_back(&b_ih_);
    out.push_back(&b_hh_);
  }

  Parameter<S>& w_ih() { return w_ih_; }
  Parameter<S>& w_hh() { return w_hh_; }
  Parameter<S>& b_ih() { return b_ih_; }
  Parameter<S>& b_hh() { return b_hh_; }

 private:
  template <typename E>
  static MatX<S> sigmoid_arr(const E& e) {
    return ((-e.array()).exp() + S(1)).inverse().matrix();
  }

  Parameter<S> w_ih_, w_hh_, b_ih_, b_hh_;
  Index in_, h_;
  Index t_ = 0, n_ = 0;
  MatX<S> x_, r_, z_, nn_, c_, hprev_;
};

/// Bidirectional GRU over a batch-major frame matrix. Row i*t_steps+t of
/// the input holds features of sample i at step t; the output concatenates
/// forward and backward hidden states, same row order, width 2*hidden.
template <typename S>
class BiGru {
 public:
  BiGru(std::string name, Index input, Index hidden)
      : fwd_(name + ".fwd", input, hidden), bwd_(name + ".bwd", input, hidden) {}

  void init(Rng& rng) {
    fwd_.init(rng);
    bwd_.init(rng);
  }

  Index out_features() const { return 2 * fwd_.hidden_size(); }

  MatX<S> forward(const MatX<S>& x_bm, Index batch, Index t_steps) {
    n_ = batch;
    t_ = t_steps;
    const Index h = fwd_.hidden_size();
    MatX<S> x_tm = to_time_major(x_bm, false);
    MatX<S> x_tm_rev = to_time_major(x_bm, true);
    MatX<S> yf = fwd_.forward(x_tm, t_, n_);
    MatX<S> yb_rev = bwd_.forward(x_tm_rev, t_, n_);
    MatX<S> out(n_ * t_, 2 * h);
    for (Index t = 0; t < t_; ++t) {
      for (Index i = 0; i < n_; ++i) {
        out.row(i * t_ + t).head(h) = yf.row(t * n_ + i);
        out.row(i * t_ + t).tail(h) = yb_rev.row((t_ - 1 - t) * n_ + i);
      }
    }
    return out;
  }

  MatX<S> backward(const MatX<S>& dy_bm) {
    const Index h = fwd_.hidden_size();
    MatX<S> dyf(t_ * n_, h), dyb_rev(t_ * n_, h);
    for (Index t = 0; t < t_; ++t) {
      for (Index i = 0; i < n_; ++i) {
        dyf.row(t * n_ + i) = dy_bm.row(i * t_ + t).head(h);
        dyb_rev.row((t_ - 1 - t) * n_ + i) = dy_bm.row(i * t_ + t).tail(h);
      }
    }
    MatX<S> dx_tm = fwd_.backward(dyf);
    MatX<S> dx_tm_rev = bwd_.backward(dyb_rev);
    MatX<S> dx(n_ * t_, dx_tm.cols());
    for (Index t = 0; t < t_; ++t) {
      for (Index i = 0; i < n_; ++i) {
        dx.row(i * t_ + t) =
            dx_tm.row(t * n_ + i) + dx_tm_rev.row((t_ - 1 - t) * n_ + i);
      }
    }
    return dx;
  }

  void collect(ParamRefs<S>& out) {
    fwd_.collect(out);
    bwd_.collect(out);
  }

 private:
  MatX<S> to_time_major(const MatX<S>& x_bm, bool reversed) const {
    MatX<S> out(t_ * n_, x_bm.cols());
    for (Index t = 0; t < t_; ++t) {
      const Index src_t = reversed ? t_ - 1 - t : t;
      for (Index i = 0; i < n_; ++i) out.row(t * n_ + i) = x_bm.row(i * t_ + src_t);
    }
    return out;
  }

  Gru<S> fwd_, bwd_;
  Index n_ = 0, t_ = 0;
};

}  // namespace dcasenet::nn
