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

// Evaluation, the post-processing benchmark and heatmap rendering.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "keypillar/data_io.hpp"
#include "keypillar/geometry.hpp"
#include "keypillar/targets.hpp"

namespace keypillar::harness {

using data::KittiObject;
using geometry::Detection;

enum class Difficulty { kEasy, kModerate, kHard, kAll };
enum class IouKind { k3D, kBev };
enum class Interpolation { k40, k11 };

const char* difficulty_name(Difficulty d);
const char* iou_kind_name(IouKind k);

struct DifficultyRule {
  double min_height_px;
  int max_occlusion;
  double max_truncation;
};
// Easy 40/0/0.15, moderate 25/1/0.30, hard 25/2/0.50. kAll accepts everything.
bool meets(const KittiObject& gt, Difficulty d);

struct CurvePoint {
  double recall = 0.0;
  double precision = 0.0;  // interpolated
};

struct ApResult {
  double ap = 0.0;
  std::vector<CurvePoint> curve;  // at the sampled recall levels
  Difficulty difficulty = Difficulty::kModerate;
  double iou_threshold = 0.7;
  IouKind kind = IouKind::k3D;
  int num_gt = 0;
  int num_tp = 0;
  int num_fp = 0;
};

struct EvalOptions {
  double iou_threshold = 0.7;
  Difficulty difficulty = Difficulty::kModerate;
  IouKind kind = IouKind::k3D;
  Interpolation interpolation = Interpolation::k40;
  int class_id = 0;
};

// Per frame: detections are matched greedily in descending score (ties
// broken by box parameters so input order is irrelevant) to the best
// unmatched ground truth with IoU >= threshold. Ground truths of the class
// that fail the difficulty rule are "ignored": a detection matching one
// counts as neither true nor false positive. The PR curve is evaluated at
// every distinct score threshold; precision is interpolated as the maximum
// over thresholds with recall >= r. AP is 0 when there is no ground truth.
ApResult evaluate_ap(std::span<const std::vector<Detection>> dets,
                     std::span<const std::vector<KittiObject>> gts,
                     const EvalOptions& options);

// Sampled recall levels: 1/40..1 or 0, 0.1..1.
std::vector<double> recall_levels(Interpolation interpolation);

// One "class,difficulty,metric,iou,ap" row per result, with header.
std::string ap_csv(std::span<const ApResult> results,
                   std::span<const std::string> class_names,
                   std::span<const int> class_ids);

enum class OverlapProfile { kIsolated, kDense };

struct BenchScene {
  targets::DenseMap heatmap;          // 1 class
  targets::GridSpec grid;
  std::vector<Detection> candidates;  // one box per above-threshold pixel
  std::vector<int> candidate_object;  // object id of each candidate
  std::vector<std::pair<int, int>> candidate_pixel;
  double threshold = 0.0;
  int num_objects = 0;
};

// Objects are blobs of above-threshold pixels whose centre strictly
// dominates its neighbours. In the isolated profile blobs are 3x3 and far
// enough apart that boxes of different objects never overlap.
BenchScene make_bench_scene(int n_candidates, OverlapProfile profile, std::uint64_t seed);

struct BenchReport {
  int n = 0;
  double nms_seconds = 0.0;   // median
  double peak_seconds = 0.0;  // median
  bool identical = false;
  double ratio = 0.0;  // nms / peak
  int nms_kept = 0;
  int peaks_kept = 0;
};

inline constexpr double kBenchNmsIou = 0.1;

// Times rotated NMS on the candidates against max-pool peak extraction on
// the map (median of repeats, single thread) and compares the object sets.
BenchReport bench_postprocessing(int n_candidates, OverlapProfile profile,
                                 std::uint64_t seed, int repeats = 21);

// "method,n,median_s,identical,ratio".
std::string bench_csv(const BenchReport& report);

// Grayscale P6 of the per-pixel class maximum, nx columns by ny rows, with
// detection centres marked in red. Byte-deterministic.
std::vector<std::uint8_t> render_heatmap(const targets::DenseMap& heatmap,
                                         const targets::GridSpec& grid,
                                         std::span<const Detection> detections = {});
void write_heatmap(const std::filesystem::path& path, const targets::DenseMap& heatmap,
                   const targets::GridSpec& grid, std::span<const Detection> detections = {});

}  // namespace keypillar::harness
