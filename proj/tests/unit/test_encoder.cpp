// Copyright 2026 The Keypillar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "keypillar/encoder.hpp"
#include "keypillar/errors.hpp"
#include "oracles.hpp"

namespace ke = keypillar::encoder;

namespace {

ke::GridSpec small_grid() { return ke::make_grid({0.0, 4.0, -2.0, 2.0, -3.0, 1.0}, 0.5); }

ke::PointCloud random_cloud(std::mt19937_64& rng, int n, const ke::GridSpec& g) {
  std::uniform_real_distribution<double> x(g.back, g.front), y(g.left, g.right),
      z(g.z_min, g.z_max), r(0.0, 1.0);
  ke::PointCloud c;
  for (int i = 0; i < n; ++i) c.points.push_back({x(rng), y(rng), z(rng), r(rng)});
  return c;
}

}  // namespace

TEST(MakeGrid, KittiLatticeSize) {
  const auto g = ke::make_grid({0.0, 70.4, -40.0, 40.0, -3.0, 1.0}, 0.16);
  EXPECT_EQ(g.nx, 440);
  EXPECT_EQ(g.ny, 500);
  const auto toy = ke::make_grid({0.0, 16.0, -8.0, 8.0, -3.0, 1.0}, 0.25);
  EXPECT_EQ(toy.nx, 64);
  EXPECT_EQ(toy.ny, 64);
}

TEST(GridSpec, HalfOpenBounds) {
  const auto g = small_grid();
  EXPECT_TRUE(g.contains(0.0, -2.0, -3.0));
  EXPECT_FALSE(g.contains(4.0, 0.0, 0.0));
  EXPECT_FALSE(g.contains(1.0, 2.0, 0.0));
  EXPECT_FALSE(g.contains(1.0, 0.0, 1.0));
}

TEST(Pillarize, AugmentedFeaturesByHand) {
  const auto g = small_grid();
  ke::PointCloud c;
  c.points = {{0.1, -1.9, 0.0, 0.5}, {0.3, -1.7, -1.0, 0.25}, {3.0, 1.0, 0.0, 1.0}};
  const auto ps = ke::pillarize(c, g, {10, 100, 0});
  ASSERT_EQ(ps.size(), 2);
  EXPECT_EQ(ps.coords[0], (ke::PillarCoord{0, 0}));
  EXPECT_EQ(ps.counts[0], 2);
  const auto f = ps.point(0, 1);
  // Centroid (0.2, -1.8, -0.5); pillar centre (0.25, -1.75).
  const double expect[9] = {0.3, -1.7, -1.0, 0.25, 0.1, 0.1, -0.5, 0.05, 0.05};
  for (int d = 0; d < 9; ++d) EXPECT_NEAR(f[d], expect[d], 1e-12) << d;
  // Empty slots are zero.
  for (double v : ps.point(0, 2)) EXPECT_EQ(v, 0.0);
}

TEST(Pillarize, DropsOutOfRangeAndRespectsLimits) {
  const auto g = small_grid();
  std::mt19937_64 rng(1);
  auto c = random_cloud(rng, 2000, g);
  c.points.push_back({-1.0, 0.0, 0.0, 0.0});
  c.points.push_back({1.0, 0.0, 5.0, 0.0});
  const auto all = ke::pillarize(c, g, {5, 1000, 0});
  EXPECT_EQ(all.size(), g.nx * g.ny);
  for (int n : all.counts) EXPECT_LE(n, 5);
  const auto few = ke::pillarize(c, g, {5, 10, 42});
  EXPECT_EQ(few.size(), 10);
  const auto again = ke::pillarize(c, g, {5, 10, 42});
  EXPECT_EQ(few.features, again.features);
  EXPECT_EQ(few.coords, again.coords);
}

TEST(Pillarize, EmptyCloud) {
  EXPECT_EQ(ke::pillarize({}, small_grid(), {}).size(), 0);
}

TEST(ScatterGather, RoundTrip) {
  const auto g = small_grid();
  std::vector<ke::PillarCoord> coords{{0, 0}, {3, 5}, {7, 7}};
  const std::vector<double> feats{1, 2, 3, 4, 5, 6};  // F=2 x P=3
  const auto img = ke::scatter(feats, 2, coords, g);
  EXPECT_EQ(img.at(3, 5, 0), 2.0);
  EXPECT_EQ(img.at(7, 7, 1), 6.0);
  EXPECT_EQ(img.at(1, 1, 0), 0.0);
  EXPECT_EQ(ke::gather(img, coords), feats);
  std::vector<ke::PillarCoord> bad{{8, 0}};
  EXPECT_THROW(ke::scatter(std::vector<double>{1.0}, 1, bad, g), keypillar::Error);
}

TEST(PillarFeatureNet, MaxOverValidPointsOnly) {
  const auto g = small_grid();
  std::mt19937_64 rng(2);
  const auto ps = ke::pillarize(random_cloud(rng, 300, g), g, {8, 1000, 0});
  ke::PfnParams p(6);
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& w : p.weight) w = n(rng);
  const auto out = ke::pfn_forward(ps, p, false);
  // Inference mode with unit running stats: relu(gamma * (W x) / sqrt(1+eps) + beta).
  for (int pi = 0; pi < ps.size(); ++pi) {
    for (int f = 0; f < 6; ++f) {
      double best = -1e300;
      for (int s = 0; s < ps.counts[pi]; ++s) {
        const auto x = ps.point(pi, s);
        double z = 0.0;
        for (int d = 0; d < 9; ++d) z += p.weight[f * 9 + d] * x[d];
        best = std::max(best, std::max(0.0, z / std::sqrt(1.0 + p.bn.eps)));
      }
      EXPECT_NEAR(out.features[f * ps.size() + pi], best, 1e-12);
    }
  }
}

TEST(PillarFeatureNet, TrainingUpdatesRunningStats) {
  const auto g = small_grid();
  std::mt19937_64 rng(3);
  const auto ps = ke::pillarize(random_cloud(rng, 300, g), g, {8, 1000, 0});
  ke::PfnParams p(4);
  for (double& w : p.weight) w = 0.3;
  ke::pfn_forward(ps, p, true);
  for (double m : p.bn.running_mean) EXPECT_NE(m, 0.0);
}

TEST(PillarFeatureNet, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const auto g = small_grid();
  for (int trial = 0; trial < 10; ++trial) {
    const int F = 2 + trial % 4;
    auto ps = ke::pillarize(random_cloud(rng, 30 + 10 * trial, g), g, {4, 1000, 0});
    ke::PfnParams base(F);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& w : base.weight) w = n(rng);
    for (double& v : base.bn.gamma) v = 1.0 + 0.2 * n(rng);
    for (double& v : base.bn.beta) v = 0.2 * n(rng);
    std::vector<double> proj(static_cast<std::size_t>(F) * ps.size());
    for (double& v : proj) v = n(rng);
    const auto loss = [&](const ke::PillarSet& set, ke::PfnParams p) {
      const auto out = ke::pfn_forward(set, p, true);
      double s = 0.0;
      for (std::size_t i = 0; i < proj.size(); ++i) s += proj[i] * out.features[i];
      return s;
    };
    ke::PfnParams p = base;
    const auto out = ke::pfn_forward(ps, p, true);
    const auto grads = ke::pfn_backward(out.cache, base, proj);

    const auto num_w = oracle::numeric_gradient(
        [&](std::vector<double>& w) {
          ke::PfnParams q = base;
          q.weight = w;
          return loss(ps, q);
        },
        base.weight, oracle::kPillarFdStep);
    EXPECT_LT(oracle::max_relative_error(grads.weight, num_w), 1e-4);
    const auto num_gamma = oracle::numeric_gradient(
        [&](std::vector<double>& v) {
          ke::PfnParams q = base;
          q.bn.gamma = v;
          return loss(ps, q);
        },
        base.bn.gamma, oracle::kPillarFdStep);
    EXPECT_LT(oracle::max_relative_error(grads.gamma, num_gamma), 1e-4);
    const auto num_beta = oracle::numeric_gradient(
        [&](std::vector<double>& v) {
          ke::PfnParams q = base;
          q.bn.beta = v;
          return loss(ps, q);
        },
        base.bn.beta, oracle::kPillarFdStep);
    EXPECT_LT(oracle::max_relative_error(grads.beta, num_beta), 1e-4);
    const auto num_x = oracle::numeric_gradient(
        [&](std::vector<double>& x) {
          ke::PillarSet q = ps;
          q.features = x;
          return loss(q, base);
        },
        ps.features, oracle::kPillarFdStep);
    EXPECT_LT(oracle::max_relative_error(grads.inputs, num_x), 1e-4);
  }
}
