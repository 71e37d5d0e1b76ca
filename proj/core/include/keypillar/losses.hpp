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

// Training losses for the five heads, each returning its value together with
// the analytic gradient with respect to its predictions.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "keypillar/targets.hpp"

namespace keypillar::losses {

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
  double eps = 1e-4;  // predictions are clamped to [eps, 1 - eps]
};

struct LossWeights {
  double offset = 1.0;
  double z = 1.5;
  double size = 0.3;
  double orientation = 1.0;
};

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
  // Set when normalization by the object count was skipped (N == 0 with a
  // non-empty positive set).
  bool unnormalized = false;
};

// Penalty-reduced pixel-wise focal loss. Pixels whose target is exactly 1 are
// positives; every other pixel is a negative weighted by (1 - M)^beta. The
// gradient is zero where the clamp is active.
LossResult focal_loss(std::span<const double> predicted,
                      std::span<const double> target, int num_objects,
                      const FocalParams& params = {});

// (1/N) * sum over masked elements of |pred - target|. The subgradient at an
// exact tie is 0. N <= 0 or an empty mask yields a zero loss.
LossResult masked_l1_loss(std::span<const double> predicted,
                          std::span<const double> target,
                          std::span<const std::uint8_t> mask, int num_objects);

// One object's 8 orientation-head values in the head's channel layout.
using OrientationPrediction = std::array<double, targets::kOrientationChannels>;

struct OrientationLoss {
  double value = 0.0;
  std::vector<OrientationPrediction> grad;
};

// (1/N) * sum_k sum_bin [CE(softmax(mu_bin), eta_bin) + eta_bin * |nu_hat - nu|_1].
OrientationLoss orientation_loss(
    std::span<const OrientationPrediction> predicted,
    std::span<const targets::OrientationTarget> target, int num_objects);

struct LossParts {
  double heat = 0.0;
  double offset = 0.0;
  double z = 0.0;
  double size = 0.0;
  double orientation = 0.0;
};

double total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace keypillar::losses
