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

#include <cmath>
#include <random>

#include "keypillar/errors.hpp"
#include "keypillar/losses.hpp"
#include "oracles.hpp"

namespace kl = keypillar::losses;
namespace kt = keypillar::targets;

TEST(FocalLoss, HandValues) {
  const std::vector<double> pred{0.5, 0.5, 0.2};
  const std::vector<double> tgt{1.0, 0.5, 0.0};
  const auto r = kl::focal_loss(pred, tgt, 1);
  const double pos = 0.25 * std::log(0.5);
  const double soft = 0.0625 * 0.25 * std::log(0.5);
  const double neg = 1.0 * 0.04 * std::log(0.8);
  EXPECT_NEAR(r.value, -(pos + soft + neg), 1e-15);
  EXPECT_FALSE(r.unnormalized);
  const auto halved = kl::focal_loss(pred, tgt, 2);
  EXPECT_NEAR(halved.value, r.value / 2, 1e-15);
}

TEST(FocalLoss, PerfectPredictionIsNearZero) {
  const std::vector<double> tgt{1.0, 0.0, 0.8, 0.0};
  const std::vector<double> pred{1.0, 0.0, 0.0, 0.0};
  EXPECT_LT(kl::focal_loss(pred, tgt, 1).value, 1e-6);
}

TEST(FocalLoss, NoObjectsLeavesSumUnnormalized) {
  const std::vector<double> pred{0.3, 0.6};
  const auto none = kl::focal_loss(pred, std::vector<double>{0.0, 0.0}, 0);
  EXPECT_FALSE(none.unnormalized);
  EXPECT_GT(none.value, 0.0);
  const auto flagged = kl::focal_loss(pred, std::vector<double>{1.0, 0.0}, 0);
  EXPECT_TRUE(flagged.unnormalized);
  EXPECT_THROW(kl::focal_loss(pred, std::vector<double>{1.0}, 1), keypillar::ShapeError);
}

TEST(FocalLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> p(0.01, 0.99), m(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial;
    std::vector<double> pred(n), tgt(n);
    for (int i = 0; i < n; ++i) {
      pred[i] = p(rng);
      tgt[i] = i % 4 == 0 ? 1.0 : m(rng);
    }
    const auto r = kl::focal_loss(pred, tgt, 1 + trial % 3);
    const auto num = oracle::numeric_gradient(
        [&](std::vector<double>& x) { return kl::focal_loss(x, tgt, 1 + trial % 3).value; },
        pred);
    EXPECT_LT(oracle::max_relative_error(r.grad, num), 1e-4);
  }
}

TEST(MaskedL1, ValueAndMask) {
  const std::vector<double> pred{1.0, 2.0, 3.0};
  const std::vector<double> tgt{0.5, 5.0, 3.5};
  const std::vector<std::uint8_t> mask{1, 0, 1};
  const auto r = kl::masked_l1_loss(pred, tgt, mask, 2);
  EXPECT_DOUBLE_EQ(r.value, 0.5);
  EXPECT_EQ(r.grad, (std::vector<double>{0.5, 0.0, -0.5}));
  EXPECT_EQ(kl::masked_l1_loss(pred, tgt, mask, 0).value, 0.0);
}

TEST(MaskedL1, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int len = 2 + trial;
    std::vector<double> pred(len), tgt(len);
    std::vector<std::uint8_t> mask(len);
    for (int i = 0; i < len; ++i) {
      pred[i] = n(rng);
      tgt[i] = n(rng);
      mask[i] = (i + trial) % 3 != 0;
    }
    const auto r = kl::masked_l1_loss(pred, tgt, mask, 3);
    const auto num = oracle::numeric_gradient(
        [&](std::vector<double>& x) { return kl::masked_l1_loss(x, tgt, mask, 3).value; }, pred);
    EXPECT_LT(oracle::max_relative_error(r.grad, num), 1e-4);
  }
}

TEST(OrientationLoss, HandValue) {
  kl::OrientationPrediction p{};
  // Bin 0 labelled 1 with equal logits: CE = ln 2, plus L1 of residual.
  p[kt::residual_channel(0, 0)] = 0.1;
  p[kt::residual_channel(0, 1)] = 0.9;
  kt::OrientationTarget t;
  t.eta = {1, 0};
  t.nu[0] = {0.0, 1.0};
  const auto r = kl::orientation_loss(std::span(&p, 1), std::span(&t, 1), 1);
  EXPECT_NEAR(r.value, 2 * std::log(2.0) + 0.2, 1e-12);
}

TEST(OrientationLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> ang(-3.14, 3.14);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 4;
    std::vector<double> flat(8 * k);
    for (double& v : flat) v = n(rng);
    std::vector<kt::OrientationTarget> tg;
    for (int i = 0; i < k; ++i) tg.push_back(kt::encode_orientation(ang(rng)));
    const auto unpack = [&](const std::vector<double>& f) {
      std::vector<kl::OrientationPrediction> out(k);
      for (int i = 0; i < k; ++i) std::copy_n(f.begin() + 8 * i, 8, out[i].begin());
      return out;
    };
    const auto r = kl::orientation_loss(unpack(flat), tg, k + 1);
    std::vector<double> g;
    for (const auto& a : r.grad) g.insert(g.end(), a.begin(), a.end());
    const auto num = oracle::numeric_gradient(
        [&](std::vector<double>& f) { return kl::orientation_loss(unpack(f), tg, k + 1).value; },
        flat);
    EXPECT_LT(oracle::max_relative_error(g, num), 1e-4);
  }
}

TEST(TotalLoss, DefaultWeights) {
  const kl::LossWeights w;
  EXPECT_EQ(w.offset, 1.0);
  EXPECT_EQ(w.z, 1.5);
  EXPECT_EQ(w.size, 0.3);
  EXPECT_EQ(w.orientation, 1.0);
  const kl::LossParts parts{1.0, 2.0, 3.0, 4.0, 5.0};
  EXPECT_DOUBLE_EQ(kl::total_loss(parts, w), 1.0 + 2.0 + 4.5 + 1.2 + 5.0);
}
