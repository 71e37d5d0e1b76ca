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
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "keypillar/errors.hpp"
#include "keypillar/pipeline.hpp"

namespace keypillar::pipeline {
namespace {

using net::Tensor;
using targets::HeadTargets;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined key.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::uint8_t> repeat_mask(const std::vector<std::uint8_t>& mask, int times) {
  std::vector<std::uint8_t> out;
  out.reserve(mask.size() * times);
  for (int t = 0; t < times; ++t) out.insert(out.end(), mask.begin(), mask.end());
  return out;
}

// Adds scale * src into the sample slice of dst.
void add_sample(Tensor& dst, int n, const std::vector<double>& src, double scale) {
  double* d = dst.sample(n);
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += scale * src[i];
}

std::span<const double> sample_span(const Tensor& t, int n) {
  return {t.sample(n), static_cast<std::size_t>(t.c()) * t.plane()};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

StepLosses forward_backward(Model& model, std::span<const Frame> batch,
                            std::uint64_t batch_seed) {
  const TrainConfig& cfg = model.config();
  const encoder::GridSpec grid = cfg.grid();
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw ConfigError("empty batch");

  std::vector<encoder::PillarSet> sets;
  std::vector<HeadTargets> tgts;
  for (int b = 0; b < B; ++b) {
    sets.push_back(encoder::pillarize(batch[b].cloud, grid,
                                      {cfg.max_points, cfg.max_pillars, mix(batch_seed, b)}));
    const auto boxes = batch[b].labeled_boxes();
    tgts.push_back(targets::encode_targets(boxes, grid, cfg.target_options()));
  }
  std::vector<int> offsets;
  const encoder::PillarSet all = encoder::concat_pillars(sets, &offsets);
  const int P = all.size();
  const int F = cfg.pfn_channels;

  encoder::PfnParams pfn = model.pfn_params();
  encoder::PfnOutput feats;
  Tensor x(B, F, grid.nx, grid.ny);
  if (P > 0) {
    feats = encoder::pfn_forward(all, pfn, true);
    model.store_pfn(pfn);
    for (int b = 0; b < B; ++b) {
      for (int p = offsets[b]; p < offsets[b + 1]; ++p) {
        const auto& c = all.coords[p];
        for (int f = 0; f < F; ++f) x.at(b, f, c.ix, c.iy) = feats.features[f * P + p];
      }
    }
  }

  model.zero_grad();
  const net::HeadOutputs out = model.network().forward(x, true);
  net::HeadOutputs grads;
  for (int h = 0; h < net::kNumHeads; ++h) grads.heads[h] = Tensor(out.heads[h].n(),
      out.heads[h].c(), out.heads[h].h(), out.heads[h].w());

  const losses::LossWeights& w = cfg.weights;
  const double inv_b = 1.0 / B;
  losses::LossParts parts;
  for (int b = 0; b < B; ++b) {
    const HeadTargets& t = tgts[b];
    const int n_obj = t.num_objects();

    const auto logits = sample_span(out.heads[net::kHeatmap], b);
    std::vector<double> prob(logits.size());
    for (std::size_t i = 0; i < prob.size(); ++i) prob[i] = sigmoid(logits[i]);
    losses::LossResult heat = losses::focal_loss(prob, t.heatmap.data, n_obj, cfg.focal);
    for (std::size_t i = 0; i < prob.size(); ++i) heat.grad[i] *= prob[i] * (1.0 - prob[i]);
    parts.heat += inv_b * heat.value;
    add_sample(grads.heads[net::kHeatmap], b, heat.grad, inv_b);

    const auto off = losses::masked_l1_loss(sample_span(out.heads[net::kOffset], b),
                                            t.offset.offset.data,
                                            repeat_mask(t.offset.mask, 2), n_obj);
    parts.offset += inv_b * off.value;
    add_sample(grads.heads[net::kOffset], b, off.grad, inv_b * w.offset);

    const auto z = losses::masked_l1_loss(sample_span(out.heads[net::kZ], b), t.z.data,
                                          t.center_mask, n_obj);
    parts.z += inv_b * z.value;
    add_sample(grads.heads[net::kZ], b, z.grad, inv_b * w.z);

    const auto size = losses::masked_l1_loss(sample_span(out.heads[net::kSize], b),
                                             t.size.data, repeat_mask(t.center_mask, 3), n_obj);
    parts.size += inv_b * size.value;
    add_sample(grads.heads[net::kSize], b, size.grad, inv_b * w.size);

    std::vector<losses::OrientationPrediction> ori_pred;
    std::vector<targets::OrientationTarget> ori_tgt;
    std::vector<const targets::ObjectTarget*> owners;
    const Tensor& ori = out.heads[net::kOrientation];
    for (const targets::ObjectTarget& o : t.objects) {
      if (!o.owns_center) continue;
      losses::OrientationPrediction p{};
      for (int c = 0; c < targets::kOrientationChannels; ++c) {
        p[c] = ori.at(b, c, o.keypoint.ix, o.keypoint.iy);
      }
      ori_pred.push_back(p);
      ori_tgt.push_back(o.orientation);
      owners.push_back(&o);
    }
    const auto ol = losses::orientation_loss(ori_pred, ori_tgt, n_obj);
    parts.orientation += inv_b * ol.value;
    Tensor& og = grads.heads[net::kOrientation];
    for (std::size_t k = 0; k < owners.size(); ++k) {
      for (int c = 0; c < targets::kOrientationChannels; ++c) {
        og.at(b, c, owners[k]->keypoint.ix, owners[k]->keypoint.iy) +=
            inv_b * w.orientation * ol.grad[k][c];
      }
    }
  }

  StepLosses result;
  result.parts = parts;
  result.total = losses::total_loss(parts, w);
  if (!std::isfinite(result.total)) {
    throw Error("non-finite loss for batch seed " + std::to_string(batch_seed));
  }

  const Tensor gx = model.network().backward(grads);
  if (P > 0) {
    std::vector<double> upstream(static_cast<std::size_t>(F) * P);
    for (int b = 0; b < B; ++b) {
      for (int p = offsets[b]; p < offsets[b + 1]; ++p) {
        const auto& c = all.coords[p];
        for (int f = 0; f < F; ++f) upstream[f * P + p] = gx.at(b, f, c.ix, c.iy);
      }
    }
    model.store_pfn_grads(encoder::pfn_backward(feats.cache, pfn, upstream));
  }
  return result;
}

long long total_steps(const TrainConfig& config, std::size_t num_frames) {
  if (config.max_steps > 0) return config.max_steps;
  const long long per_epoch =
      (static_cast<long long>(num_frames) + config.batch_size - 1) / config.batch_size;
  return per_epoch * config.epochs;
}

TrainResult train(const TrainConfig& config, std::span<const Frame> frames,
                  const TrainOptions& options) {
  if (frames.empty()) throw ConfigError("training needs at least one frame");
  Model model(config);
  const bool writing = !options.out_dir.empty();
  if (writing) {
    std::filesystem::create_directories(options.out_dir / "checkpoints");
    write_text(options.out_dir / "config.cfg", format_config(config));
  }

  GtDatabase db;
  if (config.augment.gt_sampling) db = data::build_gt_database(frames);

  std::vector<net::ParamRef> params = model.parameters();
  net::AdamW optimizer(params.size());
  net::CycleConfig cycle;
  cycle.total_steps = total_steps(config, frames.size());
  cycle.lr_max = config.lr_max;
  cycle.div_factor = config.div_factor;
  cycle.final_div = config.final_div;
  cycle.warmup_fraction = config.warmup_fraction;
  cycle.momentum_max = config.momentum_max;
  cycle.momentum_min = config.momentum_min;

  TrainResult result;
  result.metrics_csv = std::string(kMetricsHeader) + "\n";
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  long long epoch = -1;
  for (long long step = 0; step < cycle.total_steps; ++step) {
    std::vector<Frame> batch;
    for (int i = 0; i < config.batch_size; ++i) {
      if (cursor >= order.size()) {
        if (!batch.empty()) break;  // the last batch of an epoch may be short
        ++epoch;
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(mix(config.seed, 0x5eedULL + epoch));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::uint64_t sample_seed = mix(mix(config.seed, step), i);
      Frame f = augment(frames[order[cursor++]], db, config.augment, sample_seed);
      if (config.fov_crop) f.cloud = data::fov_crop(f.cloud, f.calib);
      batch.push_back(std::move(f));
    }
    const std::uint64_t batch_seed = mix(config.seed ^ 0xba7c4ULL, step);
    StepLosses losses = forward_backward(model, batch, batch_seed);

    const net::CyclePoint pt = net::one_cycle_lr(step, cycle);
    net::AdamWConfig adam;
    adam.lr = pt.lr;
    adam.beta1 = pt.momentum;
    adam.beta2 = config.beta2;
    adam.eps = config.adam_eps;
    adam.weight_decay = config.weight_decay;
    optimizer.step(params, adam);
    losses.lr = pt.lr;

    result.metrics_csv += std::to_string(step + 1) + "," + fmt(losses.lr) + "," +
                          fmt(losses.total) + "," + fmt(losses.parts.heat) + "," +
                          fmt(losses.parts.offset) + "," + fmt(losses.parts.z) + "," +
                          fmt(losses.parts.size) + "," + fmt(losses.parts.orientation) + "\n";
    result.history.push_back(losses);
    if (options.on_step) options.on_step(step + 1, losses);
    if (writing && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "step_%08lld.kpc", step + 1);
      net::write_checkpoint(options.out_dir / "checkpoints" / name, model.to_checkpoint());
    }
  }
  result.checkpoint = model.to_checkpoint();
  if (writing) {
    write_text(options.out_dir / "metrics.csv", result.metrics_csv);
    net::write_checkpoint(options.out_dir / "model.kpc", result.checkpoint);
  }
  return result;
}

}  // namespace keypillar::pipeline
