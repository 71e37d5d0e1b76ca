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

#pragma once

#include <span>
#include <vector>

#include "keypillar/net/layers.hpp"

namespace keypillar::net {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamState {
  std::vector<double> m, v;
  long long step = 0;
};

// One AdamW update with decoupled weight decay: the parameter is first shrunk
// by lr * weight_decay, then moved by the bias-corrected moment ratio.
void adamw_step(std::span<double> params, std::span<const double> grads,
                AdamState& state, const AdamWConfig& config);

struct CycleConfig {
  long long total_steps = 1;
  double lr_max = 3e-3;
  double div_factor = 2.0;
  double final_div = 1e4;       // final lr = lr_max / (div_factor * final_div)
  double warmup_fraction = 0.4;
  double momentum_max = 0.95;
  double momentum_min = 0.85;
};

struct CyclePoint {
  double lr = 0.0;
  double momentum = 0.0;
};

// Cosine one-cycle: lr rises from lr_max / div_factor to lr_max over the
// warmup fraction, then anneals to the floor; momentum moves inversely
// between momentum_max and momentum_min.
CyclePoint one_cycle_lr(long long step, const CycleConfig& config);

// AdamW over a fixed parameter list, state kept per tensor.
class AdamW {
 public:
  explicit AdamW(std::size_t num_tensors) : states_(num_tensors) {}

  // Tensors without gradients (buffers) are skipped.
  void step(std::span<ParamRef> params, const AdamWConfig& config);

 private:
  std::vector<AdamState> states_;
};

}  // namespace keypillar::net
