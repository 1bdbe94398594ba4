// SPDX-License-Identifier: Apache-2.0
//
// The integrated CRNN in its three wiring variants. All variants share a
// conv trunk (four blocks, each halving frequency, the first two also
// halving time) and a bidirectional GRU over frequency-averaged frames:
//
//   v1: GRU frames feed all three tasks; the scene head applies a residual
//       conv block over the whole frame map, the tagging head a dense block
//       over the time average, the event head a per-frame linear layer.
//   v2: the scene head moves before the GRU (pooled conv map -> linear);
//       tagging and event heads are dense blocks on GRU features.
//   v3: a conv branch after the trunk feeds the scene head and is
//       concatenated back into the GRU input; a per-frame linear branch
//       after the GRU feeds the event head and joins the GRU output for
//       the tagging head.
//
// Scene outputs are logits (the loss applies softmax); tagging and event
// outputs are sigmoid probabilities. Event rolls live at the pooled frame
// rate, one quarter of the input rate under the default pooling plan.

#pragma once

#include <optional>
#include <set>

#include "dcasenet/manifest.hpp"
#include "dcasenet/nn/gru.hpp"
#include "dcasenet/nn/layers.hpp"

namespace dcasenet {

using nn::Mode;

struct ArchitectureConfig {
  int variant = 3;
  Index n_mels = 128;
  std::vector<Index> channels = {64, 128, 256, 512};
  std::vector<Index> time_pool = {2, 2, 1, 1};
  std::vector<Index> freq_pool = {2, 2, 2, 2};
  Index gru_hidden = 512;
  Index head_hidden = 1024;
  Index asc_classes = 10;
  Index tag_classes = 80;
  Index sed_classes = 14;
  double dropout = 0.3;
  Index v1_res_channels = 128;
  Index v3_branch_channels = 256;
  // Fixed affine input map applied before the trunk; log-mel features are
  // roughly [-23, 5], this recenters them near zero at unit-ish scale.
  double input_shift = 15.0;
  double input_scale = 0.125;

  void validate() const;

  Index time_pool_total() const;
  /// Pooled frame count for an input frame count (successive floors).
  Index pooled_frames(Index in_frames) const;
  Index pooled_bands() const;
};

bool operator==(const ArchitectureConfig& a, const ArchitectureConfig& b);

/// Batch outputs (or, symmetrically, gradients w.r.t. them). Inactive task
/// fields stay empty. Event rows are sample-major: row i*sed_frames+t.
template <typename S>
struct ModelOutputs {
  MatX<S> asc_logits;
  MatX<S> tag_probs;
  MatX<S> sed_probs;
  Index sed_frames = 0;
};

// ---------------------------------------------------------------------------
// pooling / reshaping helpers shared by the variants

/// (N,C,H,W) -> (N,C), mean over both spatial dims.
template <typename S>
MatX<S> global_avg_pool(const nn::Tensor<S>& x) {
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  MatX<S> out(n, c);
  for (Index i = 0; i < n; ++i)
    out.row(i) = x.rows_block(i * c, c, hw).rowwise().mean().transpose();
  return out;
}

template <typename S>
nn::Tensor<S> global_avg_pool_backward(const MatX<S>& dy, const std::vector<Index>& shape) {
  nn::Tensor<S> dx(shape);
  const Index n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  const S inv = S(1) / static_cast<S>(hw);
  for (Index i = 0; i < n; ++i)
    dx.rows_block(i * c, c, hw).colwise() = (dy.row(i).transpose() * inv).eval();
  return dx;
}

/// (N,C,T,F) -> (N*T,C), mean over frequency; frame rows are sample-major.
template <typename S>
MatX<S> freq_average(const nn::Tensor<S>& x) {
  const Index n = x.dim(0), c = x.dim(1), t = x.dim(2), f = x.dim(3);
  MatX<S> out(n * t, c);
  for (Index i = 0; i < n; ++i) {
    // channel-major rows of one sample: (C, T*F)
    auto blk = x.rows_block(i * c, c, t * f);
    for (Index ti = 0; ti < t; ++ti)
      out.row(i * t + ti) = blk.middleCols(ti * f, f).rowwise().mean().transpose();
  }
  return out;
}

template <typename S>
nn::Tensor<S> freq_average_backward(const MatX<S>& d, const std::vector<Index>& shape) {
  nn::Tensor<S> dx(shape);
  const Index n = shape[0], c = shape[1], t = shape[2], f = shape[3];
  const S inv = S(1) / static_cast<S>(f);
  for (Index i = 0; i < n; ++i) {
    auto blk = dx.rows_block(i * c, c, t * f);
    for (Index ti = 0; ti < t; ++ti)
      blk.middleCols(ti * f, f).colwise() = (d.row(i * t + ti).transpose() * inv).eval();
  }
  return dx;
}

/// (N*T,C) sample-major frames -> (N,C), mean over time.
template <typename S>
MatX<S> time_average(const MatX<S>& frames, Index n, Index t) {
  MatX<S> out(n, frames.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = frames.middleRows(i * t, t).colwise().mean();
  return out;
}

template <typename S>
MatX<S> time_average_backward(const MatX<S>& d, Index n, Index t) {
  MatX<S> dx(n * t, d.cols());
  const S inv = S(1) / static_cast<S>(t);
  for (Index i = 0; i < n; ++i) dx.middleRows(i * t, t).rowwise() = d.row(i) * inv;
  return dx;
}

template <typename S>
nn::Tensor<S> channel_concat(const nn::Tensor<S>& a, const nn::Tensor<S>& b) {
  const Index n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  nn::Tensor<S> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (Index i = 0; i < n; ++i) {
    out.rows_block(i * (ca + cb), ca, hw) = a.rows_block(i * ca, ca, hw);
    out.rows_block(i * (ca + cb) + ca, cb, hw) = b.rows_block(i * cb, cb, hw);
  }
  return out;
}

template <typename S>
void channel_split(const nn::Tensor<S>& d, nn::Tensor<S>& da, nn::Tensor<S>& db) {
  const Index n = da.dim(0), ca = da.dim(1), cb = db.dim(1), hw = da.dim(2) * da.dim(3);
  for (Index i = 0; i < n; ++i) {
    da.rows_block(i * ca, ca, hw) = d.rows_block(i * (ca + cb), ca, hw);
    db.rows_block(i * cb, cb, hw) = d.rows_block(i * (ca + cb) + ca, cb, hw);
  }
}

// ---------------------------------------------------------------------------

template <typename S>
class DcaseNet {
 public:
  using Tensor = nn::Tensor<S>;

  DcaseNet(ArchitectureConfig cfg, std::uint64_t init_seed);

  DcaseNet(const DcaseNet&) = delete;
  DcaseNet& operator=(const DcaseNet&) = delete;

  /// Runs the trunk and the heads for `tasks` on a (N,1,T,mels) batch.
  /// Train mode with a positive dropout rate needs an engine.
  ModelOutputs<S> forward(const Tensor& x, const std::set<Task>& tasks, Mode mode,
                          Rng* rng = nullptr);

  /// Propagates output gradients from the latest forward; returns the input
  /// gradient. `grads` fields must match the forward's active tasks.
  Tensor backward(const ModelOutputs<S>& grads);

  /// Parameters in fixed construction order (trunk, GRU, heads).
  nn::ParamRefs<S> parameters();

  Index param_count();
  const ArchitectureConfig& config() const { return cfg_; }

 private:
  ModelOutputs<S> forward_v1(const std::set<Task>& tasks, Mode mode, Rng* rng);
  ModelOutputs<S> forward_v2(const std::set<Task>& tasks, Mode mode, Rng* rng);
  ModelOutputs<S> forward_v3(const std::set<Task>& tasks, Mode mode, Rng* rng);
  Tensor backward_v1(const ModelOutputs<S>& g);
  Tensor backward_v2(const ModelOutputs<S>& g);
  Tensor backward_v3(const ModelOutputs<S>& g);

  MatX<S> run_gru(const MatX<S>& frames);
  static MatX<S> sigmoid_grad(const MatX<S>& d_probs, const MatX<S>& probs) {
    return (d_probs.array() * probs.array() * (S(1) - probs.array())).matrix();
  }

  ArchitectureConfig cfg_;
  std::vector<nn::ConvBlock<S>> blocks_;
  nn::BiGru<S> gru_;

  // heads (presence depends on the variant)
  std::optional<nn::ResidualConvBlock<S>> v1_asc_res_;
  std::optional<nn::ConvBlock<S>> v3_asc_branch_;
  std::optional<nn::Linear<S>> asc_fc_;
  std::optional<nn::Linear<S>> v3_sed_branch_fc_;
  std::optional<nn::DenseBlock<S>> sed_dense_;
  std::optional<nn::Linear<S>> sed_fc_;
  std::optional<nn::Linear<S>> v3_tag_branch_fc_;
  std::optional<nn::DenseBlock<S>> tag_dense_;
  std::optional<nn::Linear<S>> tag_fc_;

  // forward caches
  std::set<Task> active_;
  Mode mode_ = Mode::Train;
  Index n_ = 0, t_in_ = 0, tp_ = 0, fp_ = 0;
  std::vector<Index> conv_map_shape_, branch_map_shape_;
  Tensor conv_map_;           // trunk output (kept for v3 concat)
  Tensor v3_branch_map_;      // v3 scene branch output
  MatX<S> gru_out_;           // (N*T', 2H)
  bool gru_ran_ = false;
  MatX<S> v3_branch_sed_;     // (N*T', B) post-ReLU
  nn::Relu<S> v3_sed_relu_, v3_tag_relu_;
  ModelOutputs<S> out_;       // probabilities cached for sigmoid backward
};

// ---------------------------------------------------------------------------

inline Index ArchitectureConfig::time_pool_total() const {
  Index p = 1;
  for (Index v : time_pool) p *= v;
  return p;
}

inline Index ArchitectureConfig::pooled_frames(Index in_frames) const {
  Index t = in_frames;
  for (Index v : time_pool) t /= v;
  return t;
}

inline Index ArchitectureConfig::pooled_bands() const {
  Index f = n_mels;
  for (Index v : freq_pool) f /= v;
  return f;
}

inline void ArchitectureConfig::validate() const {
  require(variant >= 1 && variant <= 3, Errc::invalid_config, "variant must be 1, 2 or 3");
  require(!channels.empty() && channels.size() == time_pool.size() &&
              channels.size() == freq_pool.size(),
          Errc::invalid_config, "channels/time_pool/freq_pool must have equal non-zero length");
  for (std::size_t i = 0; i < channels.size(); ++i)
    require(channels[i] > 0 && time_pool[i] > 0 && freq_pool[i] > 0, Errc::invalid_config,
            "channel and pool entries must be positive");
  require(n_mels > 0 && pooled_bands() >= 1, Errc::invalid_config,
          "mel bands must survive frequency pooling");
  require(gru_hidden > 0 && head_hidden > 0, Errc::invalid_config, "hidden sizes must be positive");
  require(asc_classes > 0 && tag_classes > 0 && sed_classes > 0, Errc::invalid_config,
          "class counts must be positive");
  require(dropout >= 0.0 && dropout < 1.0, Errc::invalid_config, "dropout must be in [0,1)");
  require(v1_res_channels > 0 && v3_branch_channels > 0, Errc::invalid_config,
          "branch widths must be positive");
  require(input_scale != 0.0, Errc::invalid_config, "input scale must be non-zero");
}

inline bool operator==(const ArchitectureConfig& a, const ArchitectureConfig& b) {
  return a.variant == b.variant && a.n_mels == b.n_mels && a.channels == b.channels &&
         a.time_pool == b.time_pool && a.freq_pool == b.freq_pool &&
         a.gru_hidden == b.gru_hidden && a.head_hidden == b.head_hidden &&
         a.asc_classes == b.asc_classes && a.tag_classes == b.tag_classes &&
         a.sed_classes == b.sed_classes && a.dropout == b.dropout &&
         a.v1_res_channels == b.v1_res_channels &&
         a.v3_branch_channels == b.v3_branch_channels && a.input_shift == b.input_shift &&
         a.input_scale == b.input_scale;
}

template <typename S>
DcaseNet<S>::DcaseNet(ArchitectureConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)),
      gru_("gru",
           cfg_.variant == 3 ? cfg_.channels.back() + cfg_.v3_branch_channels
                             : cfg_.channels.back(),
           cfg_.gru_hidden) {
  cfg_.validate();
  Rng rng(sub_seed(init_seed, 0x1717));
  blocks_.reserve(cfg_.channels.size());
  Index in_ch = 1;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    blocks_.emplace_back("trunk.block" + std::to_string(i), in_ch, cfg_.channels[i],
                         cfg_.time_pool[i], cfg_.freq_pool[i]);
    in_ch = cfg_.channels[i];
  }
  for (auto& b : blocks_) b.init(rng);
  gru_.init(rng);

  const Index c4 = cfg_.channels.back();
  const Index h2 = 2 * cfg_.gru_hidden;
  const Index b = cfg_.v3_branch_channels;
  switch (cfg_.variant) {
    case 1:
      v1_asc_res_.emplace("asc_res", 1, cfg_.v1_res_channels);
      asc_fc_.emplace("asc_fc", cfg_.v1_res_channels, cfg_.asc_classes);
      sed_fc_.emplace("sed_fc", h2, cfg_.sed_classes);
      tag_dense_.emplace("tag_dense", h2, cfg_.head_hidden, cfg_.dropout);
      tag_fc_.emplace("tag_fc", cfg_.head_hidden, cfg_.tag_classes);
      v1_asc_res_->init(rng);
      break;
    case 2:
      asc_fc_.emplace("asc_fc", c4, cfg_.asc_classes);
      sed_dense_.emplace("sed_dense", h2, cfg_.head_hidden, cfg_.dropout);
      sed_fc_.emplace("sed_fc", cfg_.head_hidden, cfg_.sed_classes);
      tag_dense_.emplace("tag_dense", h2, cfg_.head_hidden, cfg_.dropout);
      tag_fc_.emplace("tag_fc", cfg_.head_hidden, cfg_.tag_classes);
      break;
    default:
      v3_asc_branch_.emplace("asc_branch", c4, b, 1, 1);
      asc_fc_.emplace("asc_fc", b, cfg_.asc_classes);
      v3_sed_branch_fc_.emplace("sed_branch_fc", h2, b);
      sed_dense_.emplace("sed_dense", b, cfg_.head_hidden, cfg_.dropout);
      sed_fc_.emplace("sed_fc", cfg_.head_hidden, cfg_.sed_classes);
      v3_tag_branch_fc_.emplace("tag_branch_fc", h2 + b, b);
      tag_dense_.emplace("tag_dense", b, cfg_.head_hidden, cfg_.dropout);
      tag_fc_.emplace("tag_fc", cfg_.head_hidden, cfg_.tag_classes);
      v3_asc_branch_->init(rng);
      break;
  }
  if (asc_fc_) asc_fc_->init(rng);
  if (v3_sed_branch_fc_) v3_sed_branch_fc_->init(rng);
  if (sed_dense_) sed_dense_->init(rng);
  if (sed_fc_) sed_fc_->init(rng);
  if (v3_tag_branch_fc_) v3_tag_branch_fc_->init(rng);
  if (tag_dense_) tag_dense_->init(rng);
  if (tag_fc_) tag_fc_->init(rng);
}

template <typename S>
nn::ParamRefs<S> DcaseNet<S>::parameters() {
  nn::ParamRefs<S> out;
  for (auto& b : blocks_) b.collect(out);
  gru_.collect(out);
  if (v1_asc_res_) v1_asc_res_->collect(out);
  if (v3_asc_branch_) v3_asc_branch_->collect(out);
  if (asc_fc_) asc_fc_->collect(out);
  if (v3_sed_branch_fc_) v3_sed_branch_fc_->collect(out);
  if (sed_dense_) sed_dense_->collect(out);
  if (sed_fc_) sed_fc_->collect(out);
  if (v3_tag_branch_fc_) v3_tag_branch_fc_->collect(out);
  if (tag_dense_) tag_dense_->collect(out);
  if (tag_fc_) tag_fc_->collect(out);
  return out;
}

template <typename S>
Index DcaseNet<S>::param_count() {
  Index n = 0;
  for (auto* p : parameters())
    if (p->trainable) n += p->value.numel();
  return n;
}

template <typename S>
MatX<S> DcaseNet<S>::run_gru(const MatX<S>& frames) {
  gru_ran_ = true;
  return gru_.forward(frames, n_, tp_);
}

template <typename S>
ModelOutputs<S> DcaseNet<S>::forward(const Tensor& x, const std::set<Task>& tasks, Mode mode,
                                     Rng* rng) {
  require(!tasks.empty(), Errc::invalid_argument, "forward needs at least one active task");
  require(x.rank() == 4 && x.dim(1) == 1 && x.dim(3) == cfg_.n_mels, Errc::shape_mismatch,
          "expected (N,1,frames,mels) input");
  active_ = tasks;
  mode_ = mode;
  n_ = x.dim(0);
  t_in_ = x.dim(2);
  tp_ = cfg_.pooled_frames(t_in_);
  fp_ = cfg_.pooled_bands();
  require(tp_ >= 1, Errc::segment_too_short,
          "input of " + std::to_string(t_in_) + " frames vanishes under time pooling");

  Tensor t(x.shape());
  t.flat() = ((x.flat().array() + S(cfg_.input_shift)) * S(cfg_.input_scale)).matrix();
  for (auto& b : blocks_) t = b.forward(t, mode);
  conv_map_ = std::move(t);
  conv_map_shape_ = conv_map_.shape();
  gru_ran_ = false;

  switch (cfg_.variant) {
    case 1: out_ = forward_v1(tasks, mode, rng); break;
    case 2: out_ = forward_v2(tasks, mode, rng); break;
    default: out_ = forward_v3(tasks, mode, rng); break;
  }
  out_.sed_frames = tasks.count(Task::SED) ? tp_ : 0;
  return out_;
}

template <typename S>
ModelOutputs<S> DcaseNet<S>::forward_v1(const std::set<Task>& tasks, Mode mode, Rng* rng) {
  ModelOutputs<S> out;
  gru_out_ = run_gru(freq_average(conv_map_));
  const Index h2 = 2 * cfg_.gru_hidden;
  if (tasks.count(Task::ASC)) {
    Tensor view({n_, 1, tp_, h2});
    view.flat() = Eigen::Map<const VecX<S>>(gru_out_.data(), gru_out_.size());
    Tensor res = v1_asc_res_->forward(view, mode);
    out.asc_logits = asc_fc_->forward(global_avg_pool<S>(res));
  }
  if (tasks.count(Task::TAG)) {
    MatX<S> tavg = time_average(gru_out_, n_, tp_);
    out.tag_probs = nn::sigmoid<S>(tag_fc_->forward(tag_dense_->forward(tavg, mode, rng)));
  }
  if (tasks.count(Task::SED)) {
    out.sed_probs = nn::sigmoid<S>(sed_fc_->forward(gru_out_));
  }
  return out;
}

template <typename S>
ModelOutputs<S> DcaseNet<S>::forward_v2(const std::set<Task>& tasks, Mode mode, Rng* rng) {
  ModelOutputs<S> out;
  if (tasks.count(Task::ASC)) {
    out.asc_logits = asc_fc_->forward(global_avg_pool<S>(conv_map_));
  }
  if (tasks.count(Task::TAG) || tasks.count(Task::SED)) {
    gru_out_ = run_gru(freq_average(conv_map_));
    if (tasks.count(Task::TAG)) {
      MatX<S> tavg = time_average(gru_out_, n_, tp_);
      out.tag_probs = nn::sigmoid<S>(tag_fc_->forward(tag_dense_->forward(tavg, mode, rng)));
    }
    if (tasks.count(Task::SED)) {
      out.sed_probs = nn::sigmoid<S>(sed_fc_->forward(sed_dense_->forward(gru_out_, mode, rng)));
    }
  }
  return out;
}

template <typename S>
ModelOutputs<S> DcaseNet<S>::forward_v3(const std::set<Task>& tasks, Mode mode, Rng* rng) {
  ModelOutputs<S> out;
  v3_branch_map_ = v3_asc_branch_->forward(conv_map_, mode);
  branch_map_shape_ = v3_branch_map_.shape();
  if (tasks.count(Task::ASC)) {
    out.asc_logits = asc_fc_->forward(global_avg_pool<S>(v3_branch_map_));
  }
  if (tasks.count(Task::TAG) || tasks.count(Task::SED)) {
    gru_out_ = run_gru(freq_average(channel_concat(conv_map_, v3_branch_map_)));
    v3_branch_sed_ = v3_sed_branch_fc_->forward(gru_out_);
    v3_sed_relu_.apply(v3_branch_sed_);
    if (tasks.count(Task::TAG)) {
      MatX<S> cat(n_ * tp_, gru_out_.cols() + v3_branch_sed_.cols());
      cat << gru_out_, v3_branch_sed_;
      MatX<S> branch = v3_tag_branch_fc_->forward(time_average(cat, n_, tp_));
      v3_tag_relu_.apply(branch);
      out.tag_probs = nn::sigmoid<S>(tag_fc_->forward(tag_dense_->forward(branch, mode, rng)));
    }
    if (tasks.count(Task::SED)) {
      out.sed_probs =
          nn::sigmoid<S>(sed_fc_->forward(sed_dense_->forward(v3_branch_sed_, mode, rng)));
    }
  }
  return out;
}

template <typename S>
typename DcaseNet<S>::Tensor DcaseNet<S>::backward(const ModelOutputs<S>& grads) {
  require(grads.asc_logits.size() == out_.asc_logits.size() &&
              grads.tag_probs.size() == out_.tag_probs.size() &&
              grads.sed_probs.size() == out_.sed_probs.size(),
          Errc::shape_mismatch, "output gradients do not match the last forward");
  Tensor d;
  switch (cfg_.variant) {
    case 1: d = backward_v1(grads); break;
    case 2: d = backward_v2(grads); break;
    default: d = backward_v3(grads); break;
  }
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) d = it->backward(d);
  d.flat() *= S(cfg_.input_scale);
  return d;
}

template <typename S>
typename DcaseNet<S>::Tensor DcaseNet<S>::backward_v1(const ModelOutputs<S>& g) {
  const Index h2 = 2 * cfg_.gru_hidden;
  MatX<S> d_gru = MatX<S>::Zero(n_ * tp_, h2);
  if (active_.count(Task::SED)) {
    d_gru += sed_fc_->backward(sigmoid_grad(g.sed_probs, out_.sed_probs));
  }
  if (active_.count(Task::TAG)) {
    MatX<S> d_tavg =
        tag_dense_->backward(tag_fc_->backward(sigmoid_grad(g.tag_probs, out_.tag_probs)));
    d_gru += time_average_backward(d_tavg, n_, tp_);
  }
  if (active_.count(Task::ASC)) {
    MatX<S> d_gap = asc_fc_->backward(g.asc_logits);
    Tensor d_res = global_avg_pool_backward(d_gap, {n_, cfg_.v1_res_channels, tp_, h2});
    Tensor d_view = v1_asc_res_->backward(d_res);
    d_gru += ConstMapMat<S>(d_view.data(), n_ * tp_, h2);
  }
  return freq_average_backward(gru_.backward(d_gru), conv_map_shape_);
}

template <typename S>
typename DcaseNet<S>::Tensor DcaseNet<S>::backward_v2(const ModelOutputs<S>& g) {
  Tensor d_conv_map(conv_map_shape_);
  if (active_.count(Task::ASC)) {
    MatX<S> d_gap = asc_fc_->backward(g.asc_logits);
    d_conv_map.flat() += global_avg_pool_backward(d_gap, conv_map_shape_).flat();
  }
  if (gru_ran_) {
    const Index h2 = 2 * cfg_.gru_hidden;
    MatX<S> d_gru = MatX<S>::Zero(n_ * tp_, h2);
    if (active_.count(Task::SED)) {
      d_gru += sed_dense_->backward(sed_fc_->backward(sigmoid_grad(g.sed_probs, out_.sed_probs)));
    }
    if (active_.count(Task::TAG)) {
      MatX<S> d_tavg =
          tag_dense_->backward(tag_fc_->backward(sigmoid_grad(g.tag_probs, out_.tag_probs)));
      d_gru += time_average_backward(d_tavg, n_, tp_);
    }
    d_conv_map.flat() += freq_average_backward(gru_.backward(d_gru), conv_map_shape_).flat();
  }
  return d_conv_map;
}

template <typename S>
typename DcaseNet<S>::Tensor DcaseNet<S>::backward_v3(const ModelOutputs<S>& g) {
  const Index h2 = 2 * cfg_.gru_hidden;
  const Index b = cfg_.v3_branch_channels;
  Tensor d_conv_map(conv_map_shape_);
  Tensor d_branch_map(branch_map_shape_);
  if (active_.count(Task::ASC)) {
    MatX<S> d_gap = asc_fc_->backward(g.asc_logits);
    d_branch_map.flat() += global_avg_pool_backward(d_gap, branch_map_shape_).flat();
  }
  if (gru_ran_) {
    MatX<S> d_gru = MatX<S>::Zero(n_ * tp_, h2);
    MatX<S> d_branch_sed = MatX<S>::Zero(n_ * tp_, b);
    if (active_.count(Task::SED)) {
      d_branch_sed +=
          sed_dense_->backward(sed_fc_->backward(sigmoid_grad(g.sed_probs, out_.sed_probs)));
    }
    if (active_.count(Task::TAG)) {
      MatX<S> d_branch =
          tag_dense_->backward(tag_fc_->backward(sigmoid_grad(g.tag_probs, out_.tag_probs)));
      v3_tag_relu_.backward(d_branch);
      MatX<S> d_cat = time_average_backward(v3_tag_branch_fc_->backward(d_branch), n_, tp_);
      d_gru += d_cat.leftCols(h2);
      d_branch_sed += d_cat.rightCols(b);
    }
    v3_sed_relu_.backward(d_branch_sed);
    d_gru += v3_sed_branch_fc_->backward(d_branch_sed);
    Tensor d_cat_map = freq_average_backward(gru_.backward(d_gru),
                                             {n_, conv_map_shape_[1] + b, tp_, fp_});
    Tensor d_conv_from_cat(conv_map_shape_);
    Tensor d_branch_from_cat(branch_map_shape_);
    channel_split(d_cat_map, d_conv_from_cat, d_branch_from_cat);
    d_conv_map.flat() += d_conv_from_cat.flat();
    d_branch_map.flat() += d_branch_from_cat.flat();
  }
  d_conv_map.flat() += v3_asc_branch_->backward(d_branch_map).flat();
  return d_conv_map;
}

}  // namespace dcasenet
