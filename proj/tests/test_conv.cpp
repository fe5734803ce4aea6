// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "geneo/conv.hpp"
#include "geneo/kernels.hpp"
#include "oracles.hpp"

using namespace geneo;

namespace {
double max_abs_diff(const Grid3<double>& a, const Grid3<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
}  // namespace

TEST(Conv, ZeroGridZeroResponse) {
  Rng rng(1);
  const auto k = oracle::random_kernel(rng, {5, 5, 5});
  const auto out = conv3d(Grid3<double>({8, 8, 8}, 0.0), k);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv, ImpulseResponseIsReflectedKernel) {
  Rng rng(2);
  const Shape3 ks{3, 5, 4};
  const auto k = oracle::random_kernel(rng, ks);
  Grid3<double> g({9, 9, 9}, 0.0);
  g(4, 4, 4) = 1.0;
  const auto a = kernel_anchor(ks);
  for (auto* f : {&conv3d_direct, &conv3d_sparse}) {
    const auto out = (*f)(g, k);
    for (std::size_t z = 0; z < 9; ++z)
      for (std::size_t y = 0; y < 9; ++y)
        for (std::size_t x = 0; x < 9; ++x) {
          // out(v) = K(u - v + a) with u = (4, 4, 4)
          const long kz = 4 - long(z) + a.z, ky = 4 - long(y) + a.y, kx = 4 - long(x) + a.x;
          const bool inside = kz >= 0 && ky >= 0 && kx >= 0 && kz < long(ks.z) && ky < long(ks.y) && kx < long(ks.x);
          EXPECT_EQ(out(z, y, x), inside ? k(kz, ky, kx) : 0.0);
        }
  }
}

TEST(Conv, AnchorIsFloorCenter) {
  EXPECT_EQ(kernel_anchor({9, 5, 4}).z, 4);
  EXPECT_EQ(kernel_anchor({9, 5, 4}).y, 2);
  EXPECT_EQ(kernel_anchor({9, 5, 4}).x, 1);
  EXPECT_EQ(kernel_anchor({12, 5, 5}).z, 5);
}

TEST(Conv, MatchesNaiveOracle) {
  Rng rng(3);
  for (int i = 0; i < 60; ++i) {
    const Shape3 gs{8 + rng.below(9), 8 + rng.below(9), 8 + rng.below(9)};
    const Shape3 ks{1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6)};
    const auto g = oracle::random_grid(rng, gs, rng.uniform(0.02, 0.9));
    const auto k = oracle::random_kernel(rng, ks);
    const auto want = oracle::correlate(g, k);
    EXPECT_LE(max_abs_diff(conv3d_direct(g, k), want), 1e-10);
    EXPECT_LE(max_abs_diff(conv3d_sparse(g, k), want), 1e-10);
    EXPECT_LE(max_abs_diff(conv3d(g, k), want), 1e-10);
  }
}

TEST(Conv, Random16CubeWith5CubeKernel) {
  Rng rng(4);
  Grid3<double> g({16, 16, 16}, 0.0);
  for (auto& v : g.storage()) v = rng.uniform(-1, 1);
  const auto k = oracle::random_kernel(rng, {5, 5, 5});
  EXPECT_LE(max_abs_diff(conv3d(g, k), oracle::correlate(g, k)), 1e-10);
}

TEST(Conv, ThreadCountDoesNotChangeResult) {
  Rng rng(5);
  const auto g = oracle::random_grid(rng, {20, 20, 20}, 0.1);
  const auto k = oracle::random_kernel(rng, {9, 9, 9});
  set_thread_count(1);
  const auto a = conv3d_sparse(g, k);
  set_thread_count(4);
  const auto b = conv3d_sparse(g, k);
  set_thread_count(0);
  EXPECT_EQ(a, b);
}

TEST(Conv, KernelLargerThanGridRejected) {
  EXPECT_THROW(conv3d(Grid3<double>({4, 4, 4}), Grid3<double>({5, 1, 1})), ShapeError);
}

TEST(KernelAdjoint, MatchesInnerProductIdentity) {
  // <conv(g, K), u> = <K, adjoint(u, g)> for every K
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const Shape3 gs{10, 11, 12}, ks{1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5)};
    const auto g = oracle::random_grid(rng, gs, 0.3);
    Grid3<double> u(gs, 0.0);
    for (auto& v : u.storage()) v = rng.uniform(-1, 1);
    const auto G = kernel_adjoint(u, g, ks);
    for (int t = 0; t < 3; ++t) {
      const auto k = oracle::random_kernel(rng, ks);
      const auto out = oracle::correlate(g, k);
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t j = 0; j < out.size(); ++j) lhs += out[j] * u[j];
      for (std::size_t j = 0; j < k.size(); ++j) rhs += k[j] * G[j];
      EXPECT_NEAR(lhs, rhs, 1e-10 * (1 + std::abs(lhs)));
    }
  }
}

TEST(Translate, IdentityAndInverse) {
  Rng rng(7);
  const auto g = oracle::random_grid(rng, {12, 12, 12}, 0.3);
  EXPECT_EQ(translate_grid(g, {0, 0, 0}), g);
  const Offset3 off{2, -3, 1};
  const auto back = translate_grid(translate_grid(g, off), {-2, 3, -1});
  for (std::size_t z = 2; z < 10; ++z)
    for (std::size_t y = 3; y < 9; ++y)
      for (std::size_t x = 1; x < 11; ++x) EXPECT_EQ(back(z, y, x), g(z, y, x));
  EXPECT_THROW(translate_grid(g, {12, 0, 0}), ShapeError);
}

TEST(Translate, OccupancyConservedAwayFromFaces) {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    Grid3<double> g({16, 16, 16}, 0.0);
    const Offset3 off{long(rng.below(7)) - 3, long(rng.below(7)) - 3, long(rng.below(7)) - 3};
    // only occupy voxels that stay inside after the shift
    std::size_t count = 0;
    for (std::size_t z = 3; z < 13; ++z)
      for (std::size_t y = 3; y < 13; ++y)
        for (std::size_t x = 3; x < 13; ++x)
          if (rng.uniform() < 0.2) {
            g(z, y, x) = 1.0;
            ++count;
          }
    std::size_t moved = 0;
    const auto t = translate_grid(g, off);
    for (double v : t.values()) moved += v != 0.0;
    EXPECT_EQ(moved, count);
  }
}

TEST(Equivariance, ZeroOffsetIsExact) {
  Rng rng(9);
  const auto g = oracle::random_grid(rng, {24, 24, 24}, 0.2);
  const auto k = normalized_kernel(CylinderParams{2, 1}, {9, 9, 9});
  EXPECT_EQ(check_equivariance(k, g, {0, 0, 0}), 0.0);
}

TEST(Equivariance, RandomTriplesAt32) {
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto g = oracle::random_grid(rng, {32, 32, 32}, rng.uniform(0.01, 0.5));
    const auto k = oracle::random_kernel(rng, {1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(9)});
    const Offset3 off{long(rng.below(13)) - 6, long(rng.below(13)) - 6, long(rng.below(13)) - 6};
    EXPECT_LE(check_equivariance(k, g, off), 1e-9);
  }
}

TEST(Equivariance, NoInteriorRejected) {
  EXPECT_THROW(check_equivariance(Grid3<double>({9, 9, 9}, 1.0), Grid3<double>({16, 16, 16}), {0, 0, 0}),
               ShapeError);
}

TEST(NonExpansivity, EqualGrids) {
  Rng rng(11);
  const auto g = oracle::random_grid(rng, {10, 10, 10}, 0.3);
  const auto r = check_nonexpansivity(normalized_kernel(CylinderParams{2, 2}, {5, 5, 5}), g, g);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
}

TEST(NonExpansivity, SingleImpulseBound) {
  Rng rng(12);
  auto a = oracle::random_grid(rng, {12, 12, 12}, 0.3);
  auto b = a;
  b(6, 6, 6) = 1.0 - b(6, 6, 6);
  const auto k = normalized_kernel(NegSphereParams{2, 1.5, 0.4}, {5, 5, 5});
  const auto r = check_nonexpansivity(k, a, b);
  double maxw = 0.0;
  for (double w : k.weights.values()) maxw = std::max(maxw, std::abs(w));
  EXPECT_LE(r.lhs, maxw + 1e-15);
  EXPECT_LE(maxw, kernel_l1(k));
  EXPECT_EQ(r.rhs, 1.0);
}

TEST(NonExpansivity, RandomPairsWithNormalizedKernels) {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto a = oracle::random_grid(rng, {14, 14, 14}, rng.uniform(0.05, 0.6));
    const auto b = oracle::random_grid(rng, {14, 14, 14}, rng.uniform(0.05, 0.6));
    ShapeParams p;
    switch (i % 3) {
      case 0: p = CylinderParams{rng.uniform(0.5, 4), rng.uniform(1, 10)}; break;
      case 1: p = ArrowParams{rng.uniform(0.5, 4), rng.uniform(1, 10), 5, rng.uniform(0.5, 4), rng.uniform(0.05, 0.4)}; break;
      default: p = NegSphereParams{rng.uniform(0.5, 4), rng.uniform(1, 10), rng.uniform(0.1, 0.9)};
    }
    const auto r = check_nonexpansivity(normalized_kernel(p, {9, 9, 9}), a, b);
    EXPECT_LE(r.lhs, r.rhs + 1e-9);
  }
}
