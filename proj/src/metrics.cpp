// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dcasenet {

double accuracy(const MatX<double>& scores, const std::vector<int>& labels) {
  require(scores.rows() == static_cast<Index>(labels.size()), Errc::shape_mismatch,
          "accuracy: score rows and label count differ");
  require(scores.rows() > 0, Errc::invalid_argument, "accuracy: empty batch");
  Index correct = 0;
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best = 0;
    for (Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;  // ties keep the lowest index
    }
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

double lwlrap(const MatX<double>& scores, const BinRoll& truth) {
  require(scores.rows() == truth.rows() && scores.cols() == truth.cols(), Errc::shape_mismatch,
          "lwlrap: score and truth shapes differ");
  const Index c = scores.cols();
  double sum = 0.0;
  long long positives = 0;
  std::vector<Index> order(static_cast<std::size_t>(c));
  for (Index i = 0; i < scores.rows(); ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return scores(i, a) > scores(i, b); });
    // Walk tie groups: every member of a group shares the same >= counts.
    Index g0 = 0;
    Index pos_before = 0;
    while (g0 < c) {
      Index g1 = g0;
      Index pos_in_group = 0;
      while (g1 < c && scores(i, order[static_cast<std::size_t>(g1)]) ==
                           scores(i, order[static_cast<std::size_t>(g0)])) {
        pos_in_group += truth(i, order[static_cast<std::size_t>(g1)]) ? 1 : 0;
        ++g1;
      }
      const double num = static_cast<double>(pos_before + pos_in_group);
      const double den = static_cast<double>(g1);
      sum += pos_in_group * (num / den);
      positives += pos_in_group;
      pos_before += pos_in_group;
      g0 = g1;
    }
  }
  return positives > 0 ? sum / static_cast<double>(positives) : 0.0;
}

double lwlrap_bruteforce(const MatX<double>& scores, const BinRoll& truth) {
  require(scores.rows() == truth.rows() && scores.cols() == truth.cols(), Errc::shape_mismatch,
          "lwlrap: score and truth shapes differ");
  double sum = 0.0;
  long long positives = 0;
  for (Index i = 0; i < scores.rows(); ++i) {
    for (Index c = 0; c < scores.cols(); ++c) {
      if (!truth(i, c)) continue;
      long long num = 0, den = 0;
      for (Index k = 0; k < scores.cols(); ++k) {
        if (scores(i, k) >= scores(i, c)) {
          ++den;
          if (truth(i, k)) ++num;
        }
      }
      sum += static_cast<double>(num) / static_cast<double>(den);
      ++positives;
    }
  }
  return positives > 0 ? sum / static_cast<double>(positives) : 0.0;
}

BinRoll binarize_roll(const MatX<double>& probs, double threshold) {
  BinRoll out(probs.rows(), probs.cols());
  for (Index i = 0; i < probs.rows(); ++i)
    for (Index j = 0; j < probs.cols(); ++j) out(i, j) = probs(i, j) >= threshold ? 1 : 0;
  return out;
}

BinRoll upsample_roll(const BinRoll& roll, Index factor) {
  require(factor >= 1, Errc::invalid_argument, "upsample factor must be >= 1");
  BinRoll out(roll.rows() * factor, roll.cols());
  for (Index i = 0; i < roll.rows(); ++i)
    for (Index k = 0; k < factor; ++k) out.row(i * factor + k) = roll.row(i);
  return out;
}

BinRoll events_to_roll(const std::vector<Event>& events, Index n_frames, double frame_s,
                       Index n_classes) {
  require(n_frames >= 0 && n_classes > 0 && frame_s > 0.0, Errc::invalid_argument,
          "events_to_roll: bad grid");
  BinRoll out = BinRoll::Zero(n_frames, n_classes);
  const double half = 0.5 * frame_s;
  for (const Event& e : events) {
    require(e.cls >= 0 && e.cls < n_classes, Errc::invalid_manifest,
            "event class out of range: " + std::to_string(e.cls));
    const Index first = std::max<Index>(0, static_cast<Index>(std::floor(e.onset / frame_s)) - 1);
    const Index last =
        std::min<Index>(n_frames - 1, static_cast<Index>(std::ceil(e.offset / frame_s)) + 1);
    for (Index f = first; f <= last; ++f) {
      const double fs = f * frame_s, fe = fs + frame_s;
      const double overlap = std::min(e.offset, fe) - std::max(e.onset, fs);
      // Tiny slack keeps exact half-overlap boundaries stable in binary fp.
      if (overlap + 1e-9 >= half) out(f, e.cls) = 1;
    }
  }
  return out;
}

SedSegmentScores sed_segment_metrics(const BinRoll& reference, const BinRoll& prediction,
                                     Index frames_per_segment) {
  require(frames_per_segment >= 1, Errc::invalid_argument, "segment length must be >= 1 frame");
  require(reference.rows() == prediction.rows() && reference.cols() == prediction.cols(),
          Errc::misaligned_rolls, "reference and prediction rolls differ in shape");
  SedSegmentScores s;
  const Index t = reference.rows(), c = reference.cols();
  for (Index seg = 0; seg * frames_per_segment < t; ++seg) {
    const Index f0 = seg * frames_per_segment;
    const Index f1 = std::min(t, f0 + frames_per_segment);
    long long n_seg = 0, tp = 0, fn = 0, fp = 0;
    for (Index cls = 0; cls < c; ++cls) {
      bool ra = false, pa = false;
      for (Index f = f0; f < f1; ++f) {
        ra = ra || reference(f, cls) != 0;
        pa = pa || prediction(f, cls) != 0;
      }
      if (ra) ++n_seg;
      if (ra && pa) ++tp;
      if (ra && !pa) ++fn;
      if (!ra && pa) ++fp;
    }
    const long long subs = std::min(fn, fp);
    s.tp += tp;
    s.fn += fn;
    s.fp += fp;
    s.n_ref += n_seg;
    s.subs += subs;
    s.dels += fn - subs;
    s.ins += fp - subs;
  }
  finalize_sed_scores(s);
  return s;
}

void accumulate_sed_scores(SedSegmentScores& into, const SedSegmentScores& part) {
  into.tp += part.tp;
  into.fp += part.fp;
  into.fn += part.fn;
  into.subs += part.subs;
  into.dels += part.dels;
  into.ins += part.ins;
  into.n_ref += part.n_ref;
}

void finalize_sed_scores(SedSegmentScores& s) {
  const long long sdi = s.subs + s.dels + s.ins;
  if (s.n_ref == 0) {
    s.error_rate = sdi == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    s.error_rate = static_cast<double>(sdi) / static_cast<double>(s.n_ref);
  }
  const long long f1_den = 2 * s.tp + s.fp + s.fn;
  s.f1 = f1_den == 0 ? 1.0 : 2.0 * static_cast<double>(s.tp) / static_cast<double>(f1_den);
}

}  // namespace dcasenet
