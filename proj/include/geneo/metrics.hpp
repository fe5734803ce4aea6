// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "geneo/error.hpp"

namespace geneo {

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double iou = 0.0;
  Confusion counts;
};

/// Ratios with the 0/0 -> 0 convention.
inline Metrics metrics_from(const Confusion& c) {
  const auto tp = static_cast<double>(c.tp);
  Metrics m;
  m.counts = c;
  m.precision = safe_ratio(tp, tp + static_cast<double>(c.fp));
  m.recall = safe_ratio(tp, tp + static_cast<double>(c.fn));
  m.iou = safe_ratio(tp, tp + static_cast<double>(c.fp) + static_cast<double>(c.fn));
  return m;
}

inline Confusion confusion(std::span<const std::uint8_t> predicted,
                           std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("confusion: length mismatch");
  Confusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// Area under the precision-recall curve: sum over distinct score levels
/// (descending) of (recall gain) * precision at that level.
inline double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("average_precision: length mismatch");
  const auto positives = static_cast<double>(std::count_if(labels.begin(), labels.end(),
                                                           [](std::uint8_t l) { return l != 0; }));
  if (positives == 0.0) return 0.0;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double level = scores[order[i]];
    while (i < order.size() && scores[order[i]] == level) {
      if (labels[order[i]]) tp += 1.0;
      else fp += 1.0;
      ++i;
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

enum class ThresholdCriterion { IoU, Precision, FBeta };

inline constexpr std::size_t kThresholdSteps = 101;

/// Threshold grid value j / 100.
inline double threshold_at(std::size_t j) { return static_cast<double>(j) / 100.0; }

inline double criterion_value(const Confusion& c, ThresholdCriterion criterion, double beta) {
  const Metrics m = metrics_from(c);
  switch (criterion) {
    case ThresholdCriterion::IoU:
      return m.iou;
    case ThresholdCriterion::Precision:
      return m.precision;
    case ThresholdCriterion::FBeta: {
      const double b2 = beta * beta;
      return safe_ratio((1.0 + b2) * m.precision * m.recall, b2 * m.precision + m.recall);
    }
  }
  return 0.0;
}

/// Confusion counts at every grid threshold (prediction = score >= t_j), in one pass.
inline std::vector<Confusion> threshold_sweep(std::span<const double> scores,
                                              std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("threshold_sweep: length mismatch");
  // hist[m + 1] counts scores whose highest passed threshold index is m (m = -1: none).
  std::vector<std::uint64_t> pos(kThresholdSteps + 1, 0), neg(kThresholdSteps + 1, 0);
  std::uint64_t total_pos = 0, total_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    long m = std::isfinite(s) ? static_cast<long>(std::floor(s * 100.0)) : (s > 0 ? 100 : -1);
    m = std::clamp<long>(m, -1, static_cast<long>(kThresholdSteps) - 1);
    while (m + 1 < static_cast<long>(kThresholdSteps) && threshold_at(static_cast<std::size_t>(m + 1)) <= s) ++m;
    while (m >= 0 && threshold_at(static_cast<std::size_t>(m)) > s) --m;
    if (labels[i]) {
      ++pos[static_cast<std::size_t>(m + 1)];
      ++total_pos;
    } else {
      ++neg[static_cast<std::size_t>(m + 1)];
      ++total_neg;
    }
  }
  std::vector<Confusion> out(kThresholdSteps);
  std::uint64_t pos_ge = 0, neg_ge = 0;
  for (long j = static_cast<long>(kThresholdSteps) - 1; j >= 0; --j) {
    pos_ge += pos[static_cast<std::size_t>(j + 1)];
    neg_ge += neg[static_cast<std::size_t>(j + 1)];
    Confusion& c = out[static_cast<std::size_t>(j)];
    c.tp = pos_ge;
    c.fp = neg_ge;
    c.fn = total_pos - pos_ge;
    c.tn = total_neg - neg_ge;
  }
  return out;
}

struct ThresholdChoice {
  double tau = 1.0;
  double score = 0.0;
  Confusion counts;
};

/// Best grid threshold for `criterion`; ties go to the larger threshold.
inline ThresholdChoice tune_threshold(std::span<const double> scores,
                                      std::span<const std::uint8_t> labels,
                                      ThresholdCriterion criterion = ThresholdCriterion::IoU,
                                      double beta = 1.0) {
  if (scores.empty()) throw ShapeError("tune_threshold: empty validation set");
  const auto sweep = threshold_sweep(scores, labels);
  ThresholdChoice best;
  best.score = -1.0;
  for (long j = static_cast<long>(kThresholdSteps) - 1; j >= 0; --j) {
    const double v = criterion_value(sweep[static_cast<std::size_t>(j)], criterion, beta);
    if (v > best.score) {
      best = {threshold_at(static_cast<std::size_t>(j)), v, sweep[static_cast<std::size_t>(j)]};
    }
  }
  return best;
}

}  // namespace geneo
