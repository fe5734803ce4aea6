// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "geneo/losses.hpp"
#include "oracles.hpp"

using namespace geneo;

namespace {

Grid3<double> random_prob(Rng& rng, Shape3 s) {
  Grid3<double> g(s, 0.0);
  for (auto& v : g.storage()) v = rng.uniform();
  return g;
}

VoxelLabelGrid random_labels(Rng& rng, Shape3 s, double rate) {
  VoxelLabelGrid g(s, 0);
  for (auto& v : g.storage()) v = rng.uniform() < rate ? 1 : 0;
  return g;
}

Grid3<double> as_prob(const VoxelLabelGrid& y) {
  Grid3<double> p(y.shape(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) p[i] = y[i];
  return p;
}

ModelParams positive_params() {
  ModelParams p;
  p.lambda_cy = 0.2;
  p.lambda_ar = 0.3;
  return p;
}

}  // namespace

TEST(WeightMap, TowerAndBackground) {
  VoxelLabelGrid y({1, 1, 2}, 0);
  y[0] = 1;
  const auto w = weight_map(y, 5.0, 0.1);
  EXPECT_DOUBLE_EQ(w[0], 5.1);
  EXPECT_DOUBLE_EQ(w[1], 0.1);
}

TEST(WeightMap, AlphaZeroIsUniform) {
  Rng rng(1);
  const auto y = random_labels(rng, {4, 4, 4}, 0.5);
  const auto w = weight_map(y, 0.0, 0.25);
  for (double v : w.values()) EXPECT_EQ(v, 0.25);
}

TEST(WeightMap, RejectsBadHyperparameters) {
  VoxelLabelGrid y({2, 2, 2}, 0);
  EXPECT_THROW(weight_map(y, -1.0, 0.1), ConfigError);
  EXPECT_THROW(weight_map(y, 5.0, 0.0), ConfigError);
}

TEST(SegLoss, PerfectPredictionIsZero) {
  Rng rng(2);
  const auto y = random_labels(rng, {8, 8, 8}, 0.2);
  EXPECT_EQ(seg_loss(as_prob(y), y, weight_map(y, 5.0, 0.1)), 0.0);
}

TEST(SegLoss, SingleMissedTower) {
  VoxelLabelGrid y({8, 8, 8}, 0);
  y(3, 3, 3) = 1;
  const Grid3<double> p({8, 8, 8}, 0.0);
  EXPECT_NEAR(seg_loss(p, y, weight_map(y, 5.0, 0.1)), 5.1 / 512.0, 1e-15);
}

TEST(SegLoss, MatchesLoopOracle) {
  Rng rng(3);
  for (int i = 0; i < 60; ++i) {
    const Shape3 s{8, 8, 8};
    const auto p = random_prob(rng, s);
    const auto y = random_labels(rng, s, rng.uniform(0.0, 0.5));
    const double a = rng.uniform(0.0, 10.0), e = rng.uniform(0.01, 1.0);
    EXPECT_NEAR(seg_loss(p, y, weight_map(y, a, e)), oracle::seg_loss(p, y, a, e), 1e-12);
  }
}

TEST(SegLoss, ShapeMismatch) {
  const VoxelLabelGrid y({2, 2, 2}, 0);
  EXPECT_THROW(seg_loss(Grid3<double>({2, 2, 3}, 0.0), y, weight_map(y, 5, 0.1)), ShapeError);
}

TEST(Tversky, PerfectPredictionIsZero) {
  Rng rng(4);
  const auto y = random_labels(rng, {8, 8, 8}, 0.3);
  EXPECT_NEAR(tversky_loss(as_prob(y), y, LossConfig{}), 0.0, 1e-15);
}

TEST(Tversky, TotalMissApproachesOne) {
  Rng rng(5);
  const auto y = random_labels(rng, {8, 8, 8}, 0.3);
  Grid3<double> p(y.shape(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) p[i] = 1.0 - y[i];
  LossConfig cfg;
  double prev = 0.0;
  for (double d : {1.0, 1e-2, 1e-4, 1e-8}) {
    cfg.tversky_delta = d;
    const double l = tversky_loss(p, y, cfg);
    EXPECT_LT(l, 1.0);
    EXPECT_GT(l, prev);
    prev = l;
  }
  EXPECT_NEAR(prev, 1.0, 1e-9);
}

TEST(Tversky, MatchesLoopOracle) {
  Rng rng(6);
  for (int i = 0; i < 60; ++i) {
    const Shape3 s{6, 7, 8};
    const auto p = random_prob(rng, s);
    const auto y = random_labels(rng, s, rng.uniform(0.0, 0.5));
    LossConfig cfg;
    cfg.tversky_alpha = rng.uniform(0.1, 2.0);
    cfg.tversky_beta = rng.uniform(0.1, 2.0);
    cfg.tversky_delta = rng.uniform(0.01, 2.0);
    const double l = tversky_loss(p, y, cfg);
    EXPECT_NEAR(l, oracle::tversky(p, y, cfg.tversky_alpha, cfg.tversky_beta, cfg.tversky_delta), 1e-12);
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 1.0);
  }
}

TEST(Tversky, HalfHalfIsDice) {
  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    const auto p = random_prob(rng, {6, 6, 6});
    const auto y = random_labels(rng, {6, 6, 6}, 0.3);
    LossConfig cfg;
    cfg.tversky_delta = rng.uniform(0.01, 1.0);
    double inter = 0.0, sp = 0.0, sy = 0.0;
    for (std::size_t v = 0; v < p.size(); ++v) {
      inter += p[v] * y[v];
      sp += p[v];
      sy += y[v];
    }
    const double dice = (2.0 * inter + 2.0 * cfg.tversky_delta) / (sp + sy + 2.0 * cfg.tversky_delta);
    EXPECT_NEAR(1.0 - tversky_loss(p, y, cfg), dice, 1e-12);
  }
}

TEST(Penalty, PositiveParametersGiveZero) {
  EXPECT_EQ(negativity_penalty(positive_params(), 5.0, 5.0), 0.0);
}

TEST(Penalty, NegativeLambda) {
  ModelParams p = positive_params();
  p.lambda_cy = -0.2;
  p.lambda_ar = 0.3;  // lambda_ns = 0.9
  EXPECT_NEAR(negativity_penalty(p, 5.0, 0.0), 1.0, 1e-15);
}

TEST(Penalty, DerivedLambdaIsPenalized) {
  ModelParams p = positive_params();
  p.lambda_cy = 0.7;
  p.lambda_ar = 0.6;
  EXPECT_NEAR(negativity_penalty(p, 5.0, 5.0), 0.3 * 5.0, 1e-12);
}

TEST(Penalty, ShapeParametersAndLinearity) {
  ModelParams p = positive_params();
  p.arrow.beta = -0.1;
  p.negsphere.omega = -0.4;
  EXPECT_NEAR(negativity_penalty(p, 0.0, 2.0), 2.0 * 0.5, 1e-15);
  p.negsphere.omega = -0.8;
  EXPECT_NEAR(negativity_penalty(p, 0.0, 2.0), 2.0 * 0.9, 1e-15);
  p.arrow.h = -3;  // h is not trainable
  EXPECT_NEAR(negativity_penalty(p, 0.0, 2.0), 2.0 * 0.9, 1e-15);
}

TEST(Penalty, GradientSubgradientAtZero) {
  ModelParams p = positive_params();
  p.cylinder.r = 0.0;
  p.arrow.sigma = -1.0;
  p.lambda_cy = 0.7;
  p.lambda_ar = 0.6;
  const auto g = negativity_penalty_gradient(to_layer(p), 3.0, 2.0);
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g[0], 0.0);    // cylinder.r exactly 0
  EXPECT_EQ(g[3], -2.0);   // arrow.sigma
  EXPECT_EQ(g[9], 3.0);    // d h(lambda_ns) / d lambda_cy
  EXPECT_EQ(g[10], 3.0);
}

TEST(TotalLoss, PerfectPredictionNonnegativeParams) {
  Rng rng(7);
  const auto y = random_labels(rng, {8, 8, 8}, 0.2);
  LossConfig cfg;
  cfg.tversky_enabled = true;
  EXPECT_NEAR(total_loss(as_prob(y), y, positive_params(), cfg), 0.0, 1e-15);
}

TEST(TotalLoss, TverskyDisabledIsSegPlusPenalty) {
  Rng rng(8);
  const auto p = random_prob(rng, {8, 8, 8});
  const auto y = random_labels(rng, {8, 8, 8}, 0.2);
  ModelParams m = positive_params();
  m.lambda_cy = -0.1;
  const LossConfig cfg;
  EXPECT_EQ(total_loss(p, y, m, cfg),
            seg_loss(p, y, weight_map(y, cfg.alpha, cfg.epsilon)) + negativity_penalty(m, cfg.rho_l, cfg.rho_t));
}

TEST(TotalLoss, RecomposesFromTerms) {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_prob(rng, {6, 6, 6});
    const auto y = random_labels(rng, {6, 6, 6}, 0.3);
    ModelParams m = positive_params();
    m.lambda_cy = rng.uniform(-0.5, 1.0);
    m.cylinder.sigma = rng.uniform(-1.0, 2.0);
    LossConfig cfg;
    cfg.tversky_enabled = true;
    cfg.tversky_mix = rng.uniform(0.0, 2.0);
    const double expect = oracle::seg_loss(p, y, cfg.alpha, cfg.epsilon) +
                          negativity_penalty(m, cfg.rho_l, cfg.rho_t) +
                          cfg.tversky_mix * oracle::tversky(p, y, 0.5, 0.5, 1.0);
    EXPECT_NEAR(total_loss(p, y, m, cfg), expect, 1e-12);
  }
}

TEST(LossConfig, Validation) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.rho_l = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.tversky_delta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
