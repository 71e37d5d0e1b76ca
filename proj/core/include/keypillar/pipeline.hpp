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

// Training and inference orchestration: configuration, the model container
// (pillar feature layer plus network), augmentation, the training loop and
// the NMS-free inference path.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "keypillar/data_io.hpp"
#include "keypillar/encoder.hpp"
#include "keypillar/geometry.hpp"
#include "keypillar/losses.hpp"
#include "keypillar/net/checkpoint.hpp"
#include "keypillar/net/network.hpp"
#include "keypillar/net/optim.hpp"
#include "keypillar/targets.hpp"

namespace keypillar::pipeline {

using data::Frame;
using data::GtDatabase;
using encoder::PointCloud;
using geometry::Detection;

struct AugmentSpec {
  bool gt_sampling = true;
  int gt_samples_per_frame = 15;
  bool box_noise = true;
  double box_rotation = geometry::kPi / 20;  // U(-a, a)
  double box_translation_std = 0.25;         // per axis
  bool flip = true;
  double flip_probability = 0.5;
  bool global_rotation = true;
  double global_rotation_max = geometry::kPi / 4;
  bool global_scale = true;
  double scale_min = 0.95, scale_max = 1.05;

  static AugmentSpec none();
};

struct TrainConfig {
  encoder::Range3 range{0.0, 70.4, -40.0, 40.0, -3.0, 1.0};
  double pillar_size = 0.16;

  int max_points = 100;
  int max_pillars = 12000;
  int pfn_channels = 64;

  std::vector<net::BlockSpec> blocks{{1, 7, 32}, {2, 8, 64}};
  std::vector<net::NeckSpec> necks{{1, 64}, {2, 64}};
  int head_hidden = 32;
  int num_classes = 1;
  std::vector<std::string> class_names{"Car"};

  losses::FocalParams focal;
  losses::LossWeights weights;
  targets::HeatmapMode heatmap_mode = targets::HeatmapMode::kCarShape;
  int offset_radius = 2;
  double gaussian_min_overlap = 0.7;

  double lr_max = 3e-3;
  double div_factor = 2.0;
  double final_div = 1e4;
  double warmup_fraction = 0.4;
  double momentum_max = 0.95;
  double momentum_min = 0.85;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;

  int epochs = 240;
  long long max_steps = 0;  // > 0 overrides epochs
  int batch_size = 2;
  std::uint64_t seed = 0;
  long long checkpoint_every = 0;  // 0: final checkpoint only

  AugmentSpec augment;

  int max_objects = 50;
  double score_threshold = 0.1;
  bool fov_crop = false;

  encoder::GridSpec grid() const;
  net::NetworkSpec network_spec() const;
  targets::TargetOptions target_options() const;
  // Checked on construction of a model; throws ConfigError.
  void validate() const;
};

// Flat "key = value" text, '#' comments, dotted keys. Unknown keys and
// malformed values throw ConfigError naming the line.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);
// Every key, canonical order; parse_config(format_config(c)) == c.
std::string format_config(const TrainConfig& config);
// Hash of the fields that shape the model's parameters and inputs.
std::uint64_t model_digest(const TrainConfig& config);

// Pillar feature layer plus network with one flat parameter list.
class Model {
 public:
  explicit Model(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  net::Network& network() { return network_; }
  std::vector<net::ParamRef> parameters();
  void zero_grad();

  // Copies of the pillar layer state in the encoder's layout.
  encoder::PfnParams pfn_params() const;
  void store_pfn(const encoder::PfnParams& params);
  void store_pfn_grads(const encoder::PfnGrads& grads);

  net::Checkpoint to_checkpoint();
  // Throws FormatError on digest, name or shape mismatch.
  void load_checkpoint(const net::Checkpoint& checkpoint);

 private:
  TrainConfig config_;
  net::Network network_;
  net::Tensor pfn_weight_, pfn_gamma_, pfn_beta_, pfn_mean_, pfn_var_;
  net::Tensor pfn_weight_grad_, pfn_gamma_grad_, pfn_beta_grad_;
};

// Ground-truth sampling, per-box perturbation, then global flip, rotation
// and scale. Deterministic in seed.
Frame augment(const Frame& frame, const GtDatabase& db, const AugmentSpec& spec,
              std::uint64_t seed);

// Rigid global transforms, exposed for testing.
void rotate_frame(Frame& frame, double angle);
void flip_frame(Frame& frame);
void scale_frame(Frame& frame, double factor);

struct StepLosses {
  double lr = 0.0;
  double total = 0.0;
  losses::LossParts parts;
};

// Batch forward, loss, full backward. Leaves gradients in the model and
// returns the losses; the optimizer is not stepped.
StepLosses forward_backward(Model& model, std::span<const Frame> batch,
                            std::uint64_t batch_seed);

struct TrainResult {
  net::Checkpoint checkpoint;
  std::string metrics_csv;
  std::vector<StepLosses> history;
};

inline constexpr const char* kMetricsHeader =
    "step,lr,loss_total,loss_heat,loss_off,loss_z,loss_size,loss_ori";

struct TrainOptions {
  // When set, metrics.csv and checkpoints are written here.
  std::filesystem::path out_dir;
  // Per-step observer, e.g. progress output.
  std::function<void(long long step, const StepLosses&)> on_step;
};

long long total_steps(const TrainConfig& config, std::size_t num_frames);

// Throws Error naming the batch seed on a non-finite loss.
TrainResult train(const TrainConfig& config, std::span<const Frame> frames,
                  const TrainOptions& options = {});

// Encoder, inference-mode network, sigmoid, peak extraction, decode.
std::vector<Detection> infer(Model& model, const PointCloud& cloud);
// Rejects a checkpoint whose digest does not match the config.
std::vector<Detection> infer(const net::Checkpoint& checkpoint, const PointCloud& cloud,
                             const TrainConfig& config);

}  // namespace keypillar::pipeline
