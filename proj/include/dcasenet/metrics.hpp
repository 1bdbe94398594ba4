// SPDX-License-Identifier: Apache-2.0
//
// Evaluation metrics for the three tasks: classification accuracy,
// label-weighted label-ranking average precision for tagging, and
// segment-based F1 / error rate for event detection, plus the helpers that
// turn event lists and probability rolls into binary activity rolls.

#pragma once

#include <cstdint>
#include <vector>

#include "dcasenet/common.hpp"
#include "dcasenet/manifest.hpp"

namespace dcasenet {

using BinRoll = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fraction of rows whose argmax matches the label; ties resolve to the
/// lowest class index.
double accuracy(const MatX<double>& scores, const std::vector<int>& labels);

/// Label-weighted label-ranking average precision. Every positive label in
/// the batch carries equal weight; ranking uses >= comparisons, so tied
/// scores count into both numerator and denominator. A batch with no
/// positive labels scores 0.
double lwlrap(const MatX<double>& scores, const BinRoll& truth);

/// Reference O(C^2) lwlrap used to cross-check the sort-based version.
double lwlrap_bruteforce(const MatX<double>& scores, const BinRoll& truth);

BinRoll binarize_roll(const MatX<double>& probs, double threshold = 0.5);

/// Repeats every row `factor` times (coarse-to-fine time upsampling).
BinRoll upsample_roll(const BinRoll& roll, Index factor);

/// Rasterizes an event list onto a fixed frame grid: a frame is active for
/// a class when at least half of the frame overlaps one of its events.
BinRoll events_to_roll(const std::vector<Event>& events, Index n_frames, double frame_s,
                       Index n_classes);

struct SedSegmentScores {
  double f1 = 0.0;
  double error_rate = 0.0;
  long long tp = 0, fp = 0, fn = 0;
  long long subs = 0, dels = 0, ins = 0;
  long long n_ref = 0;
};

/// Segment-based intermediate statistics pooled over the whole roll pair.
/// A class is active in a segment when any of its frames is active; the
/// trailing partial segment counts. With no reference activity the error
/// rate is 0 for a clean prediction and infinity otherwise.
SedSegmentScores sed_segment_metrics(const BinRoll& reference, const BinRoll& prediction,
                                     Index frames_per_segment);

/// Micro-averaging across files: sum counts, then recompute the rates.
void accumulate_sed_scores(SedSegmentScores& into, const SedSegmentScores& part);
void finalize_sed_scores(SedSegmentScores& s);

}  // namespace dcasenet
