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

#include "keypillar/losses.hpp"

#include <algorithm>
#include <cmath>

#include "keypillar/errors.hpp"

namespace keypillar::losses {

LossResult focal_loss(std::span<const double> predicted,
                      std::span<const double> target, int num_objects,
                      const FocalParams& params) {
  if (predicted.size() != target.size()) {
    throw ShapeError("focal loss: prediction and target sizes differ");
  }
  const double a = params.alpha, b = params.beta, eps = params.eps;
  LossResult r;
  r.grad.assign(predicted.size(), 0.0);
  bool any_positive = false;
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double raw = predicted[i];
    const double p = std::clamp(raw, eps, 1.0 - eps);
    const bool clamped = raw < eps || raw > 1.0 - eps;
    const double m = target[i];
    if (m == 1.0) {
      any_positive = true;
      const double q = 1.0 - p;
      sum += std::pow(q, a) * std::log(p);
      if (!clamped) {
        r.grad[i] = -a * std::pow(q, a - 1.0) * std::log(p) + std::pow(q, a) / p;
      }
    } else {
      const double wgt = std::pow(1.0 - m, b);
      const double q = 1.0 - p;
      sum += wgt * std::pow(p, a) * std::log(q);
      if (!clamped) {
        r.grad[i] = wgt * (a * std::pow(p, a - 1.0) * std::log(q) - std::pow(p, a) / q);
      }
    }
  }
  double scale = -1.0;
  if (num_objects > 0) {
    scale = -1.0 / num_objects;
  } else if (any_positive) {
    r.unnormalized = true;
  }
  r.value = scale * sum;
  for (double& g : r.grad) g *= scale;
  return r;
}

LossResult masked_l1_loss(std::span<const double> predicted,
                          std::span<const double> target,
                          std::span<const std::uint8_t> mask, int num_objects) {
  if (predicted.size() != target.size() || predicted.size() != mask.size()) {
    throw ShapeError("masked L1: prediction, target and mask sizes differ");
  }
  LossResult r;
  r.grad.assign(predicted.size(), 0.0);
  if (num_objects <= 0) return r;
  const double inv_n = 1.0 / num_objects;
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!mask[i]) continue;
    const double d = predicted[i] - target[i];
    sum += std::abs(d);
    r.grad[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
  }
  r.value = sum * inv_n;
  return r;
}

OrientationLoss orientation_loss(
    std::span<const OrientationPrediction> predicted,
    std::span<const targets::OrientationTarget> target, int num_objects) {
  using targets::logit_channel;
  using targets::residual_channel;
  if (predicted.size() != target.size()) {
    throw ShapeError("orientation loss: prediction and target counts differ");
  }
  OrientationLoss r;
  r.grad.assign(predicted.size(), OrientationPrediction{});
  if (num_objects <= 0) return r;
  const double inv_n = 1.0 / num_objects;
  double sum = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const OrientationPrediction& p = predicted[k];
    OrientationPrediction& g = r.grad[k];
    for (int bin = 0; bin < 2; ++bin) {
      const int label = target[k].eta[bin];
      const double z0 = p[logit_channel(bin, 0)];
      const double z1 = p[logit_channel(bin, 1)];
      const double zmax = std::max(z0, z1);
      const double lse = zmax + std::log(std::exp(z0 - zmax) + std::exp(z1 - zmax));
      const double zl = label ? z1 : z0;
      sum += lse - zl;
      const double p1 = std::exp(z1 - lse);
      const double p0 = std::exp(z0 - lse);
      g[logit_channel(bin, 0)] = inv_n * (p0 - (label == 0 ? 1.0 : 0.0));
      g[logit_channel(bin, 1)] = inv_n * (p1 - (label == 1 ? 1.0 : 0.0));
      if (!label) continue;
      for (int c = 0; c < 2; ++c) {
        const double d = p[residual_channel(bin, c)] - target[k].nu[bin][c];
        sum += std::abs(d);
        g[residual_channel(bin, c)] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
      }
    }
  }
  r.value = sum * inv_n;
  return r;
}

double total_loss(const LossParts& parts, const LossWeights& w) {
  return parts.heat + w.offset * parts.offset + w.z * parts.z +
         w.size * parts.size + w.orientation * parts.orientation;
}

}  // namespace keypillar::losses
