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

#include "keypillar/net/optim.hpp"

#include <algorithm>
#include <cmath>

#include "keypillar/errors.hpp"
#include "keypillar/geometry.hpp"

namespace keypillar::net {
namespace {

double cosine_anneal(double start, double end, double fraction) {
  return end + (start - end) * 0.5 * (1.0 + std::cos(geometry::kPi * fraction));
}

}  // namespace

void adamw_step(std::span<double> params, std::span<const double> grads,
                AdamState& s, const AdamWConfig& c) {
  if (params.size() != grads.size()) throw ShapeError("adamw: parameter/gradient size mismatch");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  ++s.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = c.beta1 * s.m[i] + (1.0 - c.beta1) * g;
    s.v[i] = c.beta2 * s.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = s.m[i] / bc1;
    const double v_hat = s.v[i] / bc2;
    params[i] = params[i] * decay - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

CyclePoint one_cycle_lr(long long step, const CycleConfig& c) {
  const long long total = std::max<long long>(1, c.total_steps);
  step = std::clamp<long long>(step, 0, total);
  const double t = static_cast<double>(step) / static_cast<double>(total);
  const double lr_start = c.lr_max / c.div_factor;
  const double lr_end = lr_start / c.final_div;
  CyclePoint p;
  if (t <= c.warmup_fraction && c.warmup_fraction > 0.0) {
    const double f = t / c.warmup_fraction;
    p.lr = cosine_anneal(lr_start, c.lr_max, f);
    p.momentum = cosine_anneal(c.momentum_max, c.momentum_min, f);
  } else {
    const double f = (t - c.warmup_fraction) / (1.0 - c.warmup_fraction);
    p.lr = cosine_anneal(c.lr_max, lr_end, f);
    p.momentum = cosine_anneal(c.momentum_min, c.momentum_max, f);
  }
  return p;
}

void AdamW::step(std::span<ParamRef> params, const AdamWConfig& config) {
  if (params.size() != states_.size()) throw ShapeError("adamw: parameter list changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad) continue;
    adamw_step(params[i].value->data, params[i].grad->data, states_[i], config);
  }
}

}  // namespace keypillar::net
