// SPDX-License-Identifier: Apache-2.0
//
// NN kernels with exact backward passes. Layers cache what their backward
// needs during forward; gradients accumulate into Parameter::grad so a
// model can sum several loss paths before one optimizer step.

#pragma once

#include "dcasenet/nn/init.hpp"
#include "dcasenet/nn/tensor.hpp"

namespace dcasenet::nn {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------------------
// expression-friendly activations

template <typename S>
MatX<S> sigmoid(const MatX<S>& x) {
  return ((-x.array()).exp() + S(1)).inverse().matrix();
}

/// Numerically stable row-wise softmax.
template <typename S>
MatX<S> softmax_rows(const MatX<S>& x) {
  MatX<S> y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  return y.array().colwise() / y.rowwise().sum().array();
}

/// Cached ReLU mask usable on any flat buffer.
template <typename S>
struct Relu {
  ArrX<S> mask;

  void apply_flat(S* p, Index n) {
    Eigen::Map<ArrX<S>> a(p, n);
    mask = (a > S(0)).template cast<S>();
    a *= mask;
  }
  void backward_flat(S* p, Index n) const {
    Eigen::Map<ArrX<S>> a(p, n);
    a *= mask;
  }
  void apply(VecX<S>& v) { apply_flat(v.data(), v.size()); }
  void apply(MatX<S>& m) { apply_flat(m.data(), m.size()); }
  void backward(VecX<S>& v) const { backward_flat(v.data(), v.size()); }
  void backward(MatX<S>& m) const { backward_flat(m.data(), m.size()); }
};

// ---------------------------------------------------------------------------

template <typename S>
class Linear {
 public:
  Linear(std::string name, Index in, Index out)
      : weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}), in_(in), out_(out) {}

  void init(Rng& rng) { kaiming_uniform(weight_.value, in_, rng); }

  Index in_features() const { return in_; }
  Index out_features() const { return out_; }

  MatX<S> forward(const MatX<S>& x) {
    require(x.cols() == in_, Errc::shape_mismatch,
            weight_.name + ": input has " + std::to_string(x.cols()) + " features, expected " +
                std::to_string(in_));
    x_ = x;
    MatX<S> y = x * weight_.value.matrix(out_, in_).transpose();
    y.rowwise() += VecX<S>(bias_.value.flat()).transpose();
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    auto w = weight_.value.matrix(out_, in_);
    weight_.grad.matrix(out_, in_) += dy.transpose() * x_;
    bias_.grad.flat() += dy.colwise().sum().transpose();
    return dy * w;
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter<S>& weight() { return weight_; }
  Parameter<S>& bias() { return bias_; }

 private:
  Parameter<S> weight_, bias_;
  Index in_, out_;
  MatX<S> x_;
};

// ---------------------------------------------------------------------------

/// 2-D convolution, stride 1, odd kernel, same padding (im2col + GEMM).
template <typename S>
class Conv2d {
 public:
  Conv2d(std::string name, Index in_ch, Index out_ch, Index kernel = 3)
      : weight_(name + ".weight", {out_ch, in_ch, kernel, kernel}),
        bias_(name + ".bias", {out_ch}),
        in_ch_(in_ch),
        out_ch_(out_ch),
        k_(kernel),
        pad_(kernel / 2) {
    require(kernel % 2 == 1, Errc::invalid_argument, "kernel must be odd");
  }

  void init(Rng& rng) { kaiming_uniform(weight_.value, in_ch_ * k_ * k_, rng); }

  Tensor<S> forward(const Tensor<S>& x) {
    require(x.rank() == 4 && x.dim(1) == in_ch_, Errc::shape_mismatch,
            weight_.name + ": expected NCHW input with " + std::to_string(in_ch_) + " channels");
    x_ = x;
    const Index n = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor<S> y({n, out_ch_, h, w});
    MatX<S> col(in_ch_ * k_ * k_, h * w);
    auto wmat = weight_.value.matrix(out_ch_, in_ch_ * k_ * k_);
    const VecX<S> b = bias_.value.flat();
    for (Index i = 0; i < n; ++i) {
      im2col(x, i, col);
      auto yi = y.rows_block(i * out_ch_, out_ch_, h * w);
      yi.noalias() = wmat * col;
      yi.colwise() += b;
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Index n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    Tensor<S> dx(x_.shape());
    MatX<S> col(in_ch_ * k_ * k_, h * w);
    MatX<S> dcol(in_ch_ * k_ * k_, h * w);
    auto wmat = weight_.value.matrix(out_ch_, in_ch_ * k_ * k_);
    auto dwmat = weight_.grad.matrix(out_ch_, in_ch_ * k_ * k_);
    for (Index i = 0; i < n; ++i) {
      im2col(x_, i, col);
      auto dyi = dy.rows_block(i * out_ch_, out_ch_, h * w);
      dwmat.noalias() += dyi * col.transpose();
      bias_.grad.flat() += dyi.rowwise().sum();
      dcol.noalias() = wmat.transpose() * dyi;
      col2im_add(dcol, dx, i);
    }
    return dx;
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Index out_channels() const { return out_ch_; }
  Parameter<S>& weight() { return weight_; }
  Parameter<S>& bias() { return bias_; }

 private:
  void im2col(const Tensor<S>& x, Index sample, MatX<S>& col) const {
    const Index h = x.dim(2), w = x.dim(3);
    for (Index c = 0; c < in_ch_; ++c) {
      for (Index dy = 0; dy < k_; ++dy) {
        for (Index dx = 0; dx < k_; ++dx) {
          const Index row = (c * k_ + dy) * k_ + dx;
          for (Index y = 0; y < h; ++y) {
            const Index yy = y + dy - pad_;
            S* dst = col.data() + row * (h * w) + y * w;
            if (yy < 0 || yy >= h) {
              std::fill(dst, dst + w, S(0));
              continue;
            }
            const S* src = x.data() + ((sample * in_ch_ + c) * h + yy) * w;
            for (Index xx = 0; xx < w; ++xx) {
              const Index sx = xx + dx - pad_;
              dst[xx] = (sx >= 0 && sx < w) ? src[sx] : S(0);
            }
          }
        }
      }
    }
  }

  void col2im_add(const MatX<S>& dcol, Tensor<S>& dx, Index sample) const {
    const Index h = dx.dim(2), w = dx.dim(3);
    for (Index c = 0; c < in_ch_; ++c) {
      for (Index dy = 0; dy < k_; ++dy) {
        for (Index dxk = 0; dxk < k_; ++dxk) {
          const Index row = (c * k_ + dy) * k_ + dxk;
          for (Index y = 0; y < h; ++y) {
            const Index yy = y + dy - pad_;
            if (yy < 0 || yy >= h) continue;
            const S* src = dcol.data() + row * (h * w) + y * w;
            S* dst = dx.data() + ((sample * in_ch_ + c) * h + yy) * w;
            for (Index xx = 0; xx < w; ++xx) {
              const Index sx = xx + dxk - pad_;
              if (sx >= 0 && sx < w) dst[sx] += src[xx];
            }
          }
        }
      }
    }
  }

  Parameter<S> weight_, bias_;
  Index in_ch_, out_ch_, k_, pad_;
  Tensor<S> x_;
};

// ---------------------------------------------------------------------------

/// Per-channel batch normalization over (N, H, W). Train mode normalizes by
/// batch statistics (biased variance) and updates running stats with
/// momentum 0.9; eval mode uses the running stats and requires at least one
/// prior update (or checkpointed stats).
template <typename S>
class BatchNorm2d {
 public:
  static constexpr double kMomentum = 0.9;
  static constexpr double kEps = 1e-10;

  BatchNorm2d(std::string name, Index channels)
      : gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}),
        running_mean_(name + ".running_mean", {channels}, /*train=*/false),
        running_var_(name + ".running_var", {channels}, /*train=*/false),
        tracked_(name + ".batches_tracked", {1}, /*train=*/false),
        c_(channels) {
    gamma_.value.flat().setOnes();
    running_var_.value.flat().setOnes();
  }

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    require(x.rank() == 4 && x.dim(1) == c_, Errc::shape_mismatch,
            gamma_.name + ": expected NCHW input with " + std::to_string(c_) + " channels");
    const Index n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const Index m = n * h * w;
    last_mode_ = mode;
    mean_.resize(c_);
    invstd_.resize(c_);
    if (mode == Mode::Train) {
      for (Index c = 0; c < c_; ++c) {
        double sum = 0.0, sumsq = 0.0;
        for (Index i = 0; i < n; ++i) {
          const S* p = x.data() + ((i * c_ + c) * h) * w;
          for (Index j = 0; j < h * w; ++j) {
            sum += p[j];
            sumsq += static_cast<double>(p[j]) * p[j];
          }
        }
        const double mu = sum / m;
        const double var = std::max(0.0, sumsq / m - mu * mu);
        mean_[c] = static_cast<S>(mu);
        invstd_[c] = static_cast<S>(1.0 / std::sqrt(var + kEps));
        running_mean_.value.flat()[c] =
            static_cast<S>(kMomentum * running_mean_.value.flat()[c] + (1.0 - kMomentum) * mu);
        running_var_.value.flat()[c] =
            static_cast<S>(kMomentum * running_var_.value.flat()[c] + (1.0 - kMomentum) * var);
      }
      tracked_.value.flat()[0] += S(1);
    } else {
      require(tracked_.value.flat()[0] > S(0), Errc::eval_before_stats,
              gamma_.name + ": eval before any running-stat update");
      for (Index c = 0; c < c_; ++c) {
        mean_[c] = running_mean_.value.flat()[c];
        invstd_[c] = static_cast<S>(
            1.0 / std::sqrt(static_cast<double>(running_var_.value.flat()[c]) + kEps));
      }
    }
    xhat_ = Tensor<S>(x.shape());
    Tensor<S> y(x.shape());
    for (Index c = 0; c < c_; ++c) {
      const S mu = mean_[c], istd = invstd_[c];
      const S g = gamma_.value.flat()[c], b = beta_.value.flat()[c];
      for (Index i = 0; i < n; ++i) {
        const S* px = x.data() + ((i * c_ + c) * h) * w;
        S* ph = xhat_.data() + ((i * c_ + c) * h) * w;
        S* py = y.data() + ((i * c_ + c) * h) * w;
        for (Index j = 0; j < h * w; ++j) {
          ph[j] = (px[j] - mu) * istd;
          py[j] = g * ph[j] + b;
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    const Index n = dy.dim(0), h = dy.dim(2), w = dy.dim(3);
    const Index m = n * h * w;
    Tensor<S> dx(dy.shape());
    for (Index c = 0; c < c_; ++c) {
      double s1 = 0.0, s2 = 0.0;
      for (Index i = 0; i < n; ++i) {
        const S* pd = dy.data() + ((i * c_ + c) * h) * w;
        const S* ph = xhat_.data() + ((i * c_ + c) * h) * w;
        for (Index j = 0; j < h * w; ++j) {
          s1 += pd[j];
          s2 += static_cast<double>(pd[j]) * ph[j];
        }
      }
      beta_.grad.flat()[c] += static_cast<S>(s1);
      gamma_.grad.flat()[c] += static_cast<S>(s2);
      const S g = gamma_.value.flat()[c], istd = invstd_[c];
      if (last_mode_ == Mode::Train) {
        const S a1 = static_cast<S>(s1 / m), a2 = static_cast<S>(s2 / m);
        for (Index i = 0; i < n; ++i) {
          const S* pd = dy.data() + ((i * c_ + c) * h) * w;
          const S* ph = xhat_.data() + ((i * c_ + c) * h) * w;
          S* px = dx.data() + ((i * c_ + c) * h) * w;
          for (Index j = 0; j < h * w; ++j) px[j] = g * istd * (pd[j] - a1 - ph[j] * a2);
        }
      } else {
        for (Index i = 0; i < n; ++i) {
          const S* pd = dy.data() + ((i * c_ + c) * h) * w;
          S* px = dx.data() + ((i * c_ + c) * h) * w;
          for (Index j = 0; j < h * w; ++j) px[j] = g * istd * pd[j];
        }
      }
    }
    return dx;
  }

  void collect(ParamRefs<S>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
    out.push_back(&tracked_);
  }

  Parameter<S>& gamma() { return gamma_; }
  Parameter<S>& beta() { return beta_; }
  Parameter<S>& running_mean() { return running_mean_; }
  Parameter<S>& running_var() { return running_var_; }

 private:
  Parameter<S> gamma_, beta_, running_mean_, running_var_, tracked_;
  Index c_;
  Mode last_mode_ = Mode::Train;
  VecX<S> mean_, invstd_;
  Tensor<S> xhat_;
};

// ---------------------------------------------------------------------------

/// Non-overlapping max pooling with independent time/frequency factors;
/// trailing rows/columns that do not fill a window are dropped.
template <typename S>
class MaxPool2d {
 public:
  MaxPool2d(Index pool_h, Index pool_w) : ph_(pool_h), pw_(pool_w) {
    require(pool_h >= 1 && pool_w >= 1, Errc::invalid_argument, "pool factors must be >= 1");
  }

  Tensor<S> forward(const Tensor<S>& x) {
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index ho = h / ph_, wo = w / pw_;
    require(ho >= 1 && wo >= 1, Errc::shape_mismatch, "input smaller than pool window");
    in_shape_ = x.shape();
    Tensor<S> y({n, c, ho, wo});
    argmax_.resize(static_cast<std::size_t>(y.numel()));
    Index out_i = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index ch = 0; ch < c; ++ch) {
        for (Index yo = 0; yo < ho; ++yo) {
          for (Index xo = 0; xo < wo; ++xo, ++out_i) {
            S best = x.at(i, ch, yo * ph_, xo * pw_);
            Index best_idx = ((i * c + ch) * h + yo * ph_) * w + xo * pw_;
            for (Index dy = 0; dy < ph_; ++dy) {
              for (Index dx = 0; dx < pw_; ++dx) {
                const S v = x.at(i, ch, yo * ph_ + dy, xo * pw_ + dx);
                if (v > best) {  // first max wins ties
                  best = v;
                  best_idx = ((i * c + ch) * h + yo * ph_ + dy) * w + xo * pw_ + dx;
                }
              }
            }
            y.flat()[out_i] = best;
            argmax_[static_cast<std::size_t>(out_i)] = best_idx;
          }
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> dx(in_shape_);
    for (Index i = 0; i < dy.numel(); ++i) {
      dx.flat()[argmax_[static_cast<std::size_t>(i)]] += dy.flat()[i];
    }
    return dx;
  }

 private:
  Index ph_, pw_;
  std::vector<Index> argmax_;
  std::vector<Index> in_shape_;
};

// ---------------------------------------------------------------------------

/// Inverted dropout: eval mode is the identity, train mode scales the kept
/// activations by 1/(1-rate) using the caller's engine.
template <typename S>
class Dropout {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    require(rate >= 0.0 && rate < 1.0, Errc::invalid_argument, "dropout rate must be in [0,1)");
  }

  MatX<S> forward(const MatX<S>& x, Mode mode, Rng* rng) {
    if (mode == Mode::Eval || rate_ == 0.0) {
      identity_ = true;
      return x;
    }
    require(rng != nullptr, Errc::invalid_argument, "train-mode dropout needs an engine");
    identity_ = false;
    const S keep_scale = static_cast<S>(1.0 / (1.0 - rate_));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    mask_.resize(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j) mask_(i, j) = u(*rng) < rate_ ? S(0) : keep_scale;
    return x.cwiseProduct(mask_);
  }

  MatX<S> backward(const MatX<S>& dy) const { return identity_ ? dy : dy.cwiseProduct(mask_); }

 private:
  double rate_;
  bool identity_ = true;
  MatX<S> mask_;
};

// ---------------------------------------------------------------------------

/// [conv3x3 -> batch-norm -> ReLU] x2 -> max-pool.
template <typename S>
class ConvBlock {
 public:
  ConvBlock(const std::string& name, Index in_ch, Index out_ch, Index pool_h, Index pool_w)
      : conv1_(name + ".conv1", in_ch, out_ch),
        bn1_(name + ".bn1", out_ch),
        conv2_(name + ".conv2", out_ch, out_ch),
        bn2_(name + ".bn2", out_ch),
        pool_(pool_h, pool_w) {}

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
  }

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    Tensor<S> t = bn1_.forward(conv1_.forward(x), mode);
    relu1_.apply(t.flat());
    t = bn2_.forward(conv2_.forward(t), mode);
    relu2_.apply(t.flat());
    return pool_.forward(t);
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> d = pool_.backward(dy);
    relu2_.backward(d.flat());
    d = conv2_.backward(bn2_.backward(d));
    relu1_.backward(d.flat());
    return conv1_.backward(bn1_.backward(d));
  }

  void collect(ParamRefs<S>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
  }

  Index out_channels() const { return conv2_.out_channels(); }

 private:
  Conv2d<S> conv1_;
  BatchNorm2d<S> bn1_;
  Conv2d<S> conv2_;
  BatchNorm2d<S> bn2_;
  MaxPool2d<S> pool_;
  Relu<S> relu1_, relu2_;
};

// ---------------------------------------------------------------------------

/// conv3x3 -> BN -> ReLU -> conv3x3 -> BN, added to a 1x1-conv + BN
/// projection of the input, then ReLU.
template <typename S>
class ResidualConvBlock {
 public:
  ResidualConvBlock(const std::string& name, Index in_ch, Index out_ch)
      : conv1_(name + ".conv1", in_ch, out_ch),
        bn1_(name + ".bn1", out_ch),
        conv2_(name + ".conv2", out_ch, out_ch),
        bn2_(name + ".bn2", out_ch),
        proj_(name + ".proj", in_ch, out_ch, 1),
        bnp_(name + ".bnp", out_ch) {}

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    proj_.init(rng);
  }

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    Tensor<S> main = bn1_.forward(conv1_.forward(x), mode);
    relu1_.apply(main.flat());
    main = bn2_.forward(conv2_.forward(main), mode);
    Tensor<S> skip = bnp_.forward(proj_.forward(x), mode);
    main.flat() += skip.flat();
    relu2_.apply(main.flat());
    return main;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> d = dy;
    relu2_.backward(d.flat());
    Tensor<S> dx = proj_.backward(bnp_.backward(d));
    Tensor<S> dm = conv2_.backward(bn2_.backward(d));
    relu1_.backward(dm.flat());
    dx.flat() += conv1_.backward(bn1_.backward(dm)).flat();
    return dx;
  }

  void collect(ParamRefs<S>& out) {
    conv1_.collect(out);
    bn1_.collect(out);
    conv2_.collect(out);
    bn2_.collect(out);
    proj_.collect(out);
    bnp_.collect(out);
  }

  Index out_channels() const { return conv2_.out_channels(); }

 private:
  Conv2d<S> conv1_;
  BatchNorm2d<S> bn1_;
  Conv2d<S> conv2_;
  BatchNorm2d<S> bn2_;
  Conv2d<S> proj_;
  BatchNorm2d<S> bnp_;
  Relu<S> relu1_, relu2_;
};

// ---------------------------------------------------------------------------

/// Two fully-connected layers, each linear -> ReLU -> dropout.
template <typename S>
class DenseBlock {
 public:
  DenseBlock(const std::string& name, Index in, Index hidden, double dropout_rate)
      : lin1_(name + ".fc1", in, hidden),
        lin2_(name + ".fc2", hidden, hidden),
        drop1_(dropout_rate),
        drop2_(dropout_rate) {}

  void init(Rng& rng) {
    lin1_.init(rng);
    lin2_.init(rng);
  }

  MatX<S> forward(const MatX<S>& x, Mode mode, Rng* rng) {
    MatX<S> t = lin1_.forward(x);
    relu1_.apply(t);
    t = drop1_.forward(t, mode, rng);
    t = lin2_.forward(t);
    relu2_.apply(t);
    return drop2_.forward(t, mode, rng);
  }

  MatX<S> backward(const MatX<S>& dy) {
    MatX<S> d = drop2_.backward(dy);
    relu2_.backward(d);
    d = lin2_.backward(d);
    d = drop1_.backward(d);
    relu1_.backward(d);
    return lin1_.backward(d);
  }

  void collect(ParamRefs<S>& out) {
    lin1_.collect(out);
    lin2_.collect(out);
  }

  Index out_features() const { return lin2_.out_features(); }

 private:
  Linear<S> lin1_, lin2_;
  Dropout<S> drop1_, drop2_;
  Relu<S> relu1_, relu2_;
};

}  // namespace dcasenet::nn
