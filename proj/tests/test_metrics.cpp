// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dcasenet/metrics.hpp"

using namespace dcasenet;

namespace {

MatX<double> make_scores(std::initializer_list<std::initializer_list<double>> rows) {
  MatX<double> m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

BinRoll make_roll(std::initializer_list<std::initializer_list<int>> rows) {
  BinRoll m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (int v : row) m(r, c++) = static_cast<std::uint8_t>(v);
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("accuracy counts argmax matches, ties to the lowest index") {
  const MatX<double> scores =
      make_scores({{0.2, 0.8}, {0.6, 0.4}, {0.5, 0.5}, {0.1, 0.9}});
  // row 2 is tied, so it predicts class 0
  CHECK(accuracy(scores, {1, 0, 0, 0}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(accuracy(scores, {1, 0, 1, 0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(accuracy(scores, {1, 0, 0, 1}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lwlrap on a worked single-instance example") {
  // positives rank 2-of-2 and 2-of-3 under >= comparison: (1/2 + 2/3) / 2
  const MatX<double> scores = make_scores({{0.4, 0.9, 0.6, 0.3}});
  const BinRoll truth = make_roll({{1, 0, 1, 0}});
  CHECK(lwlrap(scores, truth) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
  CHECK(lwlrap_bruteforce(scores, truth) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("lwlrap counts ties into numerator and denominator") {
  // all scores equal: the single positive ranks 1-of-4
  const MatX<double> scores = make_scores({{0.5, 0.5, 0.5, 0.5}});
  const BinRoll truth = make_roll({{1, 0, 0, 0}});
  CHECK(lwlrap(scores, truth) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(lwlrap_bruteforce(scores, truth) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("lwlrap is 1 for perfect rankings and 0 without positives") {
  const MatX<double> scores = make_scores({{0.9, 0.7, 0.1}, {0.2, 0.9, 0.8}});
  CHECK(lwlrap(scores, make_roll({{1, 1, 0}, {0, 1, 1}})) == doctest::Approx(1.0));
  CHECK(lwlrap(scores, make_roll({{0, 0, 0}, {0, 0, 0}})) == 0.0);
}

TEST_CASE("lwlrap matches the brute-force oracle on random instances") {
  // discrete score levels force frequent ties, the harder path
  Rng rng(420);
  std::uniform_int_distribution<int> n_dist(1, 6);
  std::uniform_int_distribution<int> c_dist(2, 8);
  std::uniform_int_distribution<int> level(0, 4);
  std::bernoulli_distribution pos(0.35);
  for (int it = 0; it < 1000; ++it) {
    const Index n = n_dist(rng), c = c_dist(rng);
    MatX<double> scores(n, c);
    BinRoll truth(n, c);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < c; ++j) {
        scores(i, j) = 0.25 * level(rng);
        truth(i, j) = pos(rng) ? 1 : 0;
      }
    }
    const double fast = lwlrap(scores, truth);
    const double slow = lwlrap_bruteforce(scores, truth);
    CHECK(std::abs(fast - slow) <= 1e-12);
  }
}

TEST_CASE("binarize_roll thresholds at >= 0.5 by default") {
  const MatX<double> probs = make_scores({{0.49, 0.5, 0.51}, {0.0, 1.0, 0.2}});
  const BinRoll roll = binarize_roll(probs);
  CHECK(roll == make_roll({{0, 1, 1}, {0, 1, 0}}));
}

TEST_CASE("upsample_roll repeats rows") {
  const BinRoll roll = make_roll({{1, 0}, {0, 1}});
  const BinRoll up = upsample_roll(roll, 3);
  REQUIRE(up.rows() == 6);
  CHECK(up == make_roll({{1, 0}, {1, 0}, {1, 0}, {0, 1}, {0, 1}, {0, 1}}));
  CHECK(upsample_roll(roll, 1) == roll);
}

TEST_CASE("events_to_roll activates frames with at least half overlap") {
  const std::vector<Event> events = {{0.5, 1.6, 0}, {0.0, 0.49, 1}, {0.25, 0.75, 2}};
  const BinRoll roll = events_to_roll(events, 3, 1.0, 3);
  // class 0: overlaps 0.5 and 0.6 with frames 0 and 1
  CHECK(roll(0, 0) == 1);
  CHECK(roll(1, 0) == 1);
  CHECK(roll(2, 0) == 0);
  // class 1: 0.49 < half a frame
  CHECK(roll(0, 1) == 0);
  // class 2: exactly half a frame counts
  CHECK(roll(0, 2) == 1);
}

TEST_CASE("events_to_roll clips events outside the rendered range") {
  const std::vector<Event> events = {{-2.0, 0.6, 0}, {1.5, 99.0, 1}};
  const BinRoll roll = events_to_roll(events, 2, 1.0, 2);
  CHECK(roll(0, 0) == 1);
  CHECK(roll(1, 0) == 0);
  CHECK(roll(0, 1) == 0);
  CHECK(roll(1, 1) == 1);
}

TEST_CASE("events_to_roll rejects out-of-range classes") {
  CHECK_THROWS_AS(events_to_roll({{0.0, 1.0, 5}}, 4, 1.0, 3), Error);
  CHECK_THROWS_AS(events_to_roll({{0.0, 1.0, -1}}, 4, 1.0, 3), Error);
}

TEST_CASE("sed_segment_metrics on a worked substitution example") {
  // second segment swaps the active class: one substitution
  const BinRoll ref = make_roll({{1, 0}, {1, 0}});
  const BinRoll pred = make_roll({{1, 0}, {0, 1}});
  const SedSegmentScores s = sed_segment_metrics(ref, pred, 1);
  CHECK(s.tp == 1);
  CHECK(s.fp == 1);
  CHECK(s.fn == 1);
  CHECK(s.subs == 1);
  CHECK(s.dels == 0);
  CHECK(s.ins == 0);
  CHECK(s.n_ref == 2);
  CHECK(s.f1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.error_rate == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sed_segment_metrics is perfect on an exact match") {
  const BinRoll ref = make_roll({{1, 0}, {0, 1}});
  const SedSegmentScores s = sed_segment_metrics(ref, ref, 1);
  CHECK(s.f1 == doctest::Approx(1.0));
  CHECK(s.error_rate == doctest::Approx(0.0));
}

TEST_CASE("sed_segment_metrics pools frames within a segment") {
  // any active frame marks the segment; the trailing short segment counts
  const BinRoll ref = make_roll({{0}, {1}, {0}, {0}, {1}});
  const BinRoll pred = make_roll({{1}, {0}, {0}, {0}, {1}});
  const SedSegmentScores s = sed_segment_metrics(ref, pred, 2);
  // segments: frames {0,1} -> ref 1 pred 1, {2,3} -> 0/0, {4} -> 1/1
  CHECK(s.tp == 2);
  CHECK(s.fp == 0);
  CHECK(s.fn == 0);
  CHECK(s.error_rate == doctest::Approx(0.0));
}

TEST_CASE("sed_segment_metrics separates insertions and deletions") {
  const BinRoll ref = make_roll({{1, 1}, {0, 0}, {1, 0}});
  const BinRoll pred = make_roll({{1, 0}, {0, 1}, {1, 0}});
  const SedSegmentScores s = sed_segment_metrics(ref, pred, 1);
  // seg 0: one deletion (class 1), seg 1: one insertion, seg 2: match
  CHECK(s.dels == 1);
  CHECK(s.ins == 1);
  CHECK(s.subs == 0);
  CHECK(s.n_ref == 3);
  CHECK(s.error_rate == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("sed_segment_metrics with an empty reference") {
  const BinRoll ref = make_roll({{0, 0}, {0, 0}});
  const SedSegmentScores clean = sed_segment_metrics(ref, ref, 1);
  CHECK(clean.error_rate == 0.0);
  CHECK(clean.f1 == doctest::Approx(1.0));  // vacuous: no positives anywhere

  const SedSegmentScores noisy = sed_segment_metrics(ref, make_roll({{1, 0}, {0, 0}}), 1);
  CHECK(std::isinf(noisy.error_rate));
}

TEST_CASE("accumulate_sed_scores pools counts across files") {
  const BinRoll ref_a = make_roll({{1, 0}, {1, 0}});
  const BinRoll pred_a = make_roll({{1, 0}, {0, 1}});
  const BinRoll ref_b = make_roll({{0, 1}});
  const BinRoll pred_b = make_roll({{0, 1}});

  SedSegmentScores total;
  accumulate_sed_scores(total, sed_segment_metrics(ref_a, pred_a, 1));
  accumulate_sed_scores(total, sed_segment_metrics(ref_b, pred_b, 1));
  finalize_sed_scores(total);

  CHECK(total.tp == 2);
  CHECK(total.n_ref == 3);
  CHECK(total.f1 == doctest::Approx(4.0 / 6.0).epsilon(1e-12));
  CHECK(total.error_rate == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("metrics validate shapes") {
  const MatX<double> scores = make_scores({{0.1, 0.2}});
  CHECK_THROWS_AS(accuracy(scores, {0, 1}), Error);
  CHECK_THROWS_AS(lwlrap(scores, make_roll({{1, 0}, {0, 1}})), Error);
  CHECK_THROWS_AS(sed_segment_metrics(make_roll({{1}}), make_roll({{1, 0}}), 1), Error);
}
