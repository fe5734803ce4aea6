// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>

#include "geneo/error.hpp"
#include "geneo/grid.hpp"
#include "geneo/model.hpp"
#include "geneo/voxelize.hpp"

namespace geneo {

struct LossConfig {
  double alpha = 5.0;     ///< extra weight on target voxels
  double epsilon = 0.1;   ///< weight floor
  double rho_l = 5.0;     ///< negativity penalty on mixing weights
  double rho_t = 5.0;     ///< negativity penalty on shape parameters
  bool tversky_enabled = false;
  double tversky_alpha = 0.5;  ///< false-positive penalty
  double tversky_beta = 0.5;   ///< false-negative penalty
  double tversky_delta = 1.0;  ///< smoothing
  double tversky_mix = 1.0;

  void validate() const {
    const auto bad = [](const std::string& what) { throw ConfigError("loss config: " + what); };
    if (!(alpha >= 0.0)) bad("alpha must be >= 0");
    if (!(epsilon > 0.0)) bad("epsilon must be > 0");
    if (!(rho_l >= 0.0) || !(rho_t >= 0.0)) bad("penalty scales must be >= 0");
    if (!(tversky_alpha > 0.0) || !(tversky_beta > 0.0)) bad("tversky alpha/beta must be > 0");
    if (!(tversky_delta > 0.0)) bad("tversky delta must be > 0");
    if (!(tversky_mix >= 0.0)) bad("tversky mix must be >= 0");
  }
};

/// Class-imbalance weights: epsilon everywhere, plus alpha on target voxels.
inline Grid3<double> weight_map(const VoxelLabelGrid& labels, double alpha, double epsilon) {
  if (!(alpha >= 0.0) || !(epsilon > 0.0)) {
    throw ConfigError("weight_map: alpha must be >= 0 and epsilon > 0");
  }
  Grid3<double> w(labels.shape(), epsilon);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) w[i] += alpha;
  }
  return w;
}

/// Mean over voxels of weight * (prob - label)^2.
inline double seg_loss(const Grid3<double>& prob, const VoxelLabelGrid& labels,
                       const Grid3<double>& weights) {
  require_same_shape(prob, labels, "seg_loss");
  require_same_shape(prob, weights, "seg_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double e = prob[i] - (labels[i] ? 1.0 : 0.0);
    s += weights[i] * e * e;
  }
  return s / static_cast<double>(prob.size());
}

namespace detail {
struct TverskySums {
  double overlap = 0.0;  ///< sum y * p
  double false_pos = 0.0;  ///< sum (1 - y) * p
  double false_neg = 0.0;  ///< sum y * (1 - p)
};

inline TverskySums tversky_sums(const Grid3<double>& prob, const VoxelLabelGrid& labels) {
  TverskySums s;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (labels[i]) {
      s.overlap += prob[i];
      s.false_neg += 1.0 - prob[i];
    } else {
      s.false_pos += prob[i];
    }
  }
  return s;
}
}  // namespace detail

/// 1 - (overlap + delta) / (overlap + a * FP + b * FN + delta), soft counts.
inline double tversky_loss(const Grid3<double>& prob, const VoxelLabelGrid& labels,
                           const LossConfig& cfg) {
  require_same_shape(prob, labels, "tversky_loss");
  const auto s = detail::tversky_sums(prob, labels);
  const double num = s.overlap + cfg.tversky_delta;
  const double den = s.overlap + cfg.tversky_alpha * s.false_pos + cfg.tversky_beta * s.false_neg +
                     cfg.tversky_delta;
  return 1.0 - num / den;
}

inline double hinge_negative(double x) { return x < 0.0 ? -x : 0.0; }

/// rho_l * sum h(lambda_i) over all K weights (derived one included)
/// + rho_t * sum h(theta) over all trainable shape values, h(x) = max(0, -x).
inline double negativity_penalty(const GeneoLayer& layer, double rho_l, double rho_t) {
  double lam = 0.0;
  for (double l : layer.lambdas()) lam += hinge_negative(l);
  double theta = 0.0;
  for (const auto& op : layer.operators) {
    for (double v : trainable_values(op)) theta += hinge_negative(v);
  }
  return rho_l * lam + rho_t * theta;
}

inline double negativity_penalty(const ModelParams& p, double rho_l, double rho_t) {
  return negativity_penalty(to_layer(p), rho_l, rho_t);
}

/// Subgradient of negativity_penalty in the flattened parameter layout (0 at exactly 0).
inline std::vector<double> negativity_penalty_gradient(const GeneoLayer& layer, double rho_l,
                                                       double rho_t) {
  std::vector<double> g(layer.parameter_count(), 0.0);
  std::size_t pos = 0;
  for (const auto& op : layer.operators) {
    for (double v : trainable_values(op)) {
      if (v < 0.0) g[pos] = -rho_t;
      ++pos;
    }
  }
  const double derived = layer.derived_lambda();
  for (double l : layer.free_lambdas) {
    if (l < 0.0) g[pos] -= rho_l;
    if (derived < 0.0) g[pos] += rho_l;
    ++pos;
  }
  return g;
}

/// The three additive terms of the training objective for one scene.
struct LossTerms {
  double seg = 0.0;
  double tversky = 0.0;  ///< already multiplied by tversky_mix; 0 when disabled
  double penalty = 0.0;

  double data() const { return seg + tversky; }
  double total() const { return seg + tversky + penalty; }
};

inline LossTerms loss_terms(const Grid3<double>& prob, const VoxelLabelGrid& labels,
                            const GeneoLayer& layer, const LossConfig& cfg) {
  LossTerms t;
  t.seg = seg_loss(prob, labels, weight_map(labels, cfg.alpha, cfg.epsilon));
  if (cfg.tversky_enabled) t.tversky = cfg.tversky_mix * tversky_loss(prob, labels, cfg);
  t.penalty = negativity_penalty(layer, cfg.rho_l, cfg.rho_t);
  return t;
}

/// seg_loss + negativity_penalty + tversky_mix * tversky_loss (when enabled).
inline double total_loss(const Grid3<double>& prob, const VoxelLabelGrid& labels,
                         const ModelParams& params, const LossConfig& cfg) {
  return loss_terms(prob, labels, to_layer(params), cfg).total();
}

}  // namespace geneo
