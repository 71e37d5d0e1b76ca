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

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

#include "keypillar/encoder.hpp"
#include "keypillar/errors.hpp"
#include "keypillar/harness.hpp"
#include "oracles.hpp"
#include "scenes.hpp"

namespace kh = keypillar::harness;
namespace kd = keypillar::data;
using keypillar::geometry::Box3D;
using keypillar::geometry::Detection;

namespace {

kd::KittiObject easy_gt(double x, double y) {
  kd::KittiObject o;
  o.class_id = 0;
  o.box = Box3D(x, y, -1.0, 1.6, 4.0, 1.5, 0.0);
  o.bbox = {0, 100, 50, 160};
  return o;
}

kh::EvalOptions bev(double iou) {
  kh::EvalOptions o;
  o.kind = kh::IouKind::kBev;
  o.iou_threshold = iou;
  o.difficulty = kh::Difficulty::kAll;
  return o;
}

}  // namespace

TEST(Difficulty, Rules) {
  auto o = easy_gt(0, 0);
  EXPECT_TRUE(kh::meets(o, kh::Difficulty::kEasy));
  o.bbox = {0, 100, 50, 130};  // 30 px tall
  EXPECT_FALSE(kh::meets(o, kh::Difficulty::kEasy));
  EXPECT_TRUE(kh::meets(o, kh::Difficulty::kModerate));
  o.occlusion = 2;
  EXPECT_FALSE(kh::meets(o, kh::Difficulty::kModerate));
  EXPECT_TRUE(kh::meets(o, kh::Difficulty::kHard));
  o.truncation = 0.6;
  EXPECT_FALSE(kh::meets(o, kh::Difficulty::kHard));
  EXPECT_TRUE(kh::meets(o, kh::Difficulty::kAll));
}

TEST(EvaluateAp, PerfectAndEmpty) {
  const std::vector<std::vector<kd::KittiObject>> gts{{easy_gt(10, 0)}};
  const std::vector<std::vector<Detection>> perfect{{{gts[0][0].box, 0.9, 0}}};
  const auto r = kh::evaluate_ap(perfect, gts, bev(0.7));
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.num_tp, 1);
  const std::vector<std::vector<Detection>> none{{}};
  EXPECT_EQ(kh::evaluate_ap(none, gts, bev(0.7)).ap, 0.0);
  const std::vector<std::vector<kd::KittiObject>> no_gt{{}};
  EXPECT_EQ(kh::evaluate_ap(perfect, no_gt, bev(0.7)).ap, 0.0);
}

TEST(EvaluateAp, HandComputedCurve) {
  // Two GTs; the top-scoring detection is a false positive, the second hits.
  const std::vector<std::vector<kd::KittiObject>> gts{{easy_gt(10, 0), easy_gt(20, 5)}};
  const std::vector<std::vector<Detection>> dets{
      {{Box3D(30, -5, -1, 1.6, 4, 1.5, 0), 0.9, 0}, {gts[0][0].box, 0.5, 0}}};
  auto o = bev(0.5);
  EXPECT_DOUBLE_EQ(kh::evaluate_ap(dets, gts, o).ap, 20 * 0.5 / 40);
  o.interpolation = kh::Interpolation::k11;
  EXPECT_DOUBLE_EQ(kh::evaluate_ap(dets, gts, o).ap, 6 * 0.5 / 11);
}

TEST(EvaluateAp, IgnoredGroundTruthIsNeitherHitNorMiss) {
  auto hard = easy_gt(10, 0);
  hard.occlusion = 2;
  const std::vector<std::vector<kd::KittiObject>> gts{{easy_gt(20, 5), hard}};
  const std::vector<std::vector<Detection>> dets{{{gts[0][0].box, 0.4, 0}, {hard.box, 0.9, 0}}};
  auto o = bev(0.5);
  o.difficulty = kh::Difficulty::kModerate;
  const auto r = kh::evaluate_ap(dets, gts, o);
  EXPECT_EQ(r.num_gt, 1);
  EXPECT_EQ(r.num_fp, 0);
  EXPECT_EQ(r.ap, 1.0);
}

TEST(EvaluateAp, MatchesBruteForceOnRandomScenes) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::random_eval_scene(rng);
    kh::EvalOptions o;
    o.iou_threshold = trial % 2 ? 0.5 : 0.7;
    o.kind = trial % 3 ? kh::IouKind::kBev : kh::IouKind::k3D;
    o.difficulty = static_cast<kh::Difficulty>(trial % 4);
    o.interpolation = trial % 5 == 0 ? kh::Interpolation::k11 : kh::Interpolation::k40;
    o.class_id = trial % 7 == 0 ? 1 : 0;
    EXPECT_EQ(kh::evaluate_ap(s.dets, s.gts, o).ap, oracle::brute_force_ap(s.dets, s.gts, o))
        << trial;
  }
}

TEST(EvaluateAp, InvariantToDetectionOrder) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = oracle::random_eval_scene(rng);
    const double a = kh::evaluate_ap(s.dets, s.gts, bev(0.5)).ap;
    for (auto& f : s.dets) std::shuffle(f.begin(), f.end(), rng);
    EXPECT_EQ(kh::evaluate_ap(s.dets, s.gts, bev(0.5)).ap, a);
  }
}

TEST(EvaluateAp, MissingFramesCountAsEmpty) {
  const std::vector<std::vector<kd::KittiObject>> gts{{easy_gt(10, 0)}, {easy_gt(10, 0)}};
  const std::vector<std::vector<Detection>> dets{{{gts[0][0].box, 0.9, 0}}};
  const auto r = kh::evaluate_ap(dets, gts, bev(0.5));
  EXPECT_EQ(r.num_gt, 2);
  EXPECT_EQ(r.num_tp, 1);
  EXPECT_DOUBLE_EQ(r.ap, 0.5);
}

TEST(RecallLevels, FortyAndEleven) {
  const auto a = kh::recall_levels(kh::Interpolation::k40);
  ASSERT_EQ(a.size(), 40u);
  EXPECT_EQ(a.front(), 1.0 / 40);
  EXPECT_EQ(a.back(), 1.0);
  const auto b = kh::recall_levels(kh::Interpolation::k11);
  ASSERT_EQ(b.size(), 11u);
  EXPECT_EQ(b.front(), 0.0);
}

TEST(ApCsv, HeaderAndRow) {
  kh::ApResult r;
  r.ap = 0.5;
  const std::vector<std::string> names{"Car"};
  const std::vector<int> ids{0};
  const auto csv = kh::ap_csv(std::span(&r, 1), names, ids);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "class,difficulty,metric,iou,ap");
  EXPECT_NE(csv.find("Car,"), std::string::npos);
  EXPECT_NE(csv.find("0.500000"), std::string::npos);
}

TEST(BenchScene, CandidateCountAndThreshold) {
  for (auto profile : {kh::OverlapProfile::kIsolated, kh::OverlapProfile::kDense}) {
    for (int n : {1, 9, 100, 1000}) {
      const auto s = kh::make_bench_scene(n, profile, 3);
      EXPECT_EQ(static_cast<int>(s.candidates.size()), n);
      EXPECT_EQ(s.candidate_object.size(), s.candidates.size());
      int above = 0;
      for (double v : s.heatmap.data) above += v >= s.threshold;
      EXPECT_EQ(above, n);
    }
  }
}

TEST(Bench, IsolatedScenesKeepIdenticalObjects) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = kh::bench_postprocessing(200, kh::OverlapProfile::kIsolated, seed, 1);
    EXPECT_TRUE(r.identical) << seed;
    EXPECT_EQ(r.nms_kept, r.peaks_kept);
  }
}

TEST(Bench, SingleCandidateAndCsv) {
  const auto r = kh::bench_postprocessing(1, kh::OverlapProfile::kDense, 0, 3);
  EXPECT_EQ(r.n, 1);
  EXPECT_TRUE(r.identical);
  EXPECT_EQ(r.nms_kept, 1);
  const auto csv = kh::bench_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,n,median_s,identical,ratio");
  EXPECT_NE(csv.find("rotated_nms,1,"), std::string::npos);
  EXPECT_NE(csv.find("maxpool_and,1,"), std::string::npos);
}

TEST(Render, PpmLayoutAndMarkers) {
  const auto grid = keypillar::encoder::make_grid({0, 4, -2, 2, -3, 1}, 0.5);  // 8 x 8
  keypillar::targets::DenseMap m(1, grid.nx, grid.ny);
  m.at(0, 2, 5) = 1.0;
  m.at(0, 3, 1) = 0.5;
  const std::vector<Detection> dets{{Box3D(0.25, -1.75, 0, 1, 1, 1, 0), 0.9, 0}};
  const auto img = kh::render_heatmap(m, grid, dets);
  const std::string header = "P6\n8 8\n255\n";
  ASSERT_EQ(img.size(), header.size() + 8 * 8 * 3);
  EXPECT_EQ(std::string(img.begin(), img.begin() + header.size()), header);
  const auto px = [&](int ix, int iy) { return header.size() + (iy * 8 + ix) * 3; };
  EXPECT_EQ(img[px(2, 5)], 255);
  EXPECT_EQ(img[px(2, 5) + 1], 255);
  EXPECT_EQ(img[px(3, 1)], 128);
  EXPECT_EQ(img[px(0, 0)], 255);
  EXPECT_EQ(img[px(0, 0) + 1], 0);
  EXPECT_EQ(img[px(7, 7)], 0);

  const auto path = std::filesystem::temp_directory_path() / "keypillar_render.ppm";
  kh::write_heatmap(path, m, grid);
  EXPECT_EQ(std::filesystem::file_size(path), img.size());
  std::filesystem::remove(path);
}

TEST(Render, BlackForZeroMapAndByteDeterministic) {
  const auto grid = keypillar::encoder::make_grid({0, 4, -2, 2, -3, 1}, 0.5);
  const keypillar::targets::DenseMap zero(1, grid.nx, grid.ny);
  const auto img = kh::render_heatmap(zero, grid);
  const std::size_t header = std::string("P6\n8 8\n255\n").size();
  EXPECT_TRUE(std::all_of(img.begin() + header, img.end(), [](std::uint8_t v) { return v == 0; }));
  keypillar::targets::DenseMap m(1, grid.nx, grid.ny);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : m.data) v = u(rng);
  EXPECT_EQ(kh::render_heatmap(m, grid), kh::render_heatmap(m, grid));
}

