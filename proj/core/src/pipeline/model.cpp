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

#include <cmath>
#include <random>

#include "keypillar/errors.hpp"
#include "keypillar/pipeline.hpp"

namespace keypillar::pipeline {
namespace {

const TrainConfig& validated(const TrainConfig& c) {
  c.validate();
  return c;
}

constexpr std::uint64_t kPfnSeedSalt = 0x9e3779b97f4a7c15ULL;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Model::Model(const TrainConfig& config)
    : config_(validated(config)),
      network_(config.network_spec(), config.seed),
      pfn_weight_(config.pfn_channels, encoder::kPointDims, 1, 1),
      pfn_gamma_(1, config.pfn_channels, 1, 1),
      pfn_beta_(1, config.pfn_channels, 1, 1),
      pfn_mean_(1, config.pfn_channels, 1, 1),
      pfn_var_(1, config.pfn_channels, 1, 1),
      pfn_weight_grad_(pfn_weight_),
      pfn_gamma_grad_(pfn_gamma_),
      pfn_beta_grad_(pfn_beta_) {
  std::mt19937_64 rng(config.seed ^ kPfnSeedSalt);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / encoder::kPointDims));
  for (double& v : pfn_weight_.data) v = dist(rng);
  pfn_gamma_.fill(1.0);
  pfn_var_.fill(1.0);
}

std::vector<net::ParamRef> Model::parameters() {
  std::vector<net::ParamRef> out{
      {"pfn.weight", &pfn_weight_, &pfn_weight_grad_, encoder::kPointDims},
      {"pfn.bn.gamma", &pfn_gamma_, &pfn_gamma_grad_, 0},
      {"pfn.bn.beta", &pfn_beta_, &pfn_beta_grad_, 0},
      {"pfn.bn.running_mean", &pfn_mean_, nullptr, 0},
      {"pfn.bn.running_var", &pfn_var_, nullptr, 0},
  };
  for (net::ParamRef& p : network_.parameters()) out.push_back(std::move(p));
  return out;
}

void Model::zero_grad() {
  pfn_weight_grad_.fill(0.0);
  pfn_gamma_grad_.fill(0.0);
  pfn_beta_grad_.fill(0.0);
  network_.zero_grad();
}

encoder::PfnParams Model::pfn_params() const {
  encoder::PfnParams p(config_.pfn_channels);
  p.weight = pfn_weight_.data;
  p.bn.gamma = pfn_gamma_.data;
  p.bn.beta = pfn_beta_.data;
  p.bn.running_mean = pfn_mean_.data;
  p.bn.running_var = pfn_var_.data;
  return p;
}

void Model::store_pfn(const encoder::PfnParams& p) {
  pfn_weight_.data = p.weight;
  pfn_gamma_.data = p.bn.gamma;
  pfn_beta_.data = p.bn.beta;
  pfn_mean_.data = p.bn.running_mean;
  pfn_var_.data = p.bn.running_var;
}

void Model::store_pfn_grads(const encoder::PfnGrads& g) {
  pfn_weight_grad_.data = g.weight;
  pfn_gamma_grad_.data = g.gamma;
  pfn_beta_grad_.data = g.beta;
}

net::Checkpoint Model::to_checkpoint() {
  net::Checkpoint ck;
  ck.spec_digest = model_digest(config_);
  for (const net::ParamRef& p : parameters()) {
    net::NamedArray a;
    a.name = p.name;
    for (int d : p.value->shape) a.shape.push_back(static_cast<std::uint32_t>(d));
    a.data = p.value->data;
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

void Model::load_checkpoint(const net::Checkpoint& ck) {
  if (ck.spec_digest != model_digest(config_)) {
    throw FormatError("checkpoint was written for a different model configuration", 0);
  }
  const auto params = parameters();
  if (ck.arrays.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ck.arrays.size()) +
                          " arrays, model expects " + std::to_string(params.size()),
                      0);
  }
  for (const net::ParamRef& p : params) {
    const net::NamedArray* a = ck.find(p.name);
    if (!a) throw FormatError("checkpoint lacks array " + p.name, 0);
    bool same = a->shape.size() == 4;
    for (std::size_t d = 0; same && d < 4; ++d) {
      same = a->shape[d] == static_cast<std::uint32_t>(p.value->shape[d]);
    }
    if (!same || a->data.size() != p.value->data.size()) {
      throw FormatError("checkpoint array " + p.name + " has the wrong shape", 0);
    }
    p.value->data = a->data;
  }
}

std::vector<Detection> infer(Model& model, const PointCloud& cloud) {
  const TrainConfig& cfg = model.config();
  const encoder::GridSpec grid = cfg.grid();
  const encoder::PillarSet pillars =
      encoder::pillarize(cloud, grid, {cfg.max_points, cfg.max_pillars, cfg.seed});
  if (pillars.size() == 0) return {};
  encoder::PfnParams pfn = model.pfn_params();
  const encoder::PfnOutput feats = encoder::pfn_forward(pillars, pfn, false);
  const encoder::PseudoImage image =
      encoder::scatter(feats.features, cfg.pfn_channels, pillars.coords, grid);
  net::Tensor x(1, cfg.pfn_channels, grid.nx, grid.ny);
  x.data = image.data;
  const net::HeadOutputs out = model.network().forward(x, false);

  const auto to_map = [&](const net::Tensor& t) {
    targets::DenseMap m(t.c(), grid.nx, grid.ny);
    m.data = t.data;
    return m;
  };
  targets::HeadMaps maps{to_map(out.heads[net::kHeatmap]), to_map(out.heads[net::kOffset]),
                         to_map(out.heads[net::kZ]), to_map(out.heads[net::kSize]),
                         to_map(out.heads[net::kOrientation])};
  for (double& v : maps.heatmap.data) v = sigmoid(v);
  const auto peaks = targets::extract_peaks(maps.heatmap, cfg.max_objects, cfg.score_threshold);
  return targets::decode_boxes(peaks, maps, grid);
}

std::vector<Detection> infer(const net::Checkpoint& checkpoint, const PointCloud& cloud,
                             const TrainConfig& config) {
  if (checkpoint.spec_digest != model_digest(config)) {
    throw FormatError("checkpoint digest does not match the configuration", 0);
  }
  Model model(config);
  model.load_checkpoint(checkpoint);
  return infer(model, cloud);
}

}  // namespace keypillar::pipeline
