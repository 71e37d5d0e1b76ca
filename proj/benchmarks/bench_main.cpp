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

#include <benchmark/benchmark.h>

#include <random>

#include "keypillar/geometry.hpp"
#include "keypillar/harness.hpp"
#include "keypillar/net/layers.hpp"
#include "keypillar/targets.hpp"

namespace {

using namespace keypillar;

void BM_RotatedNms(benchmark::State& state) {
  const auto scene = harness::make_bench_scene(static_cast<int>(state.range(0)),
                                               harness::OverlapProfile::kDense, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geometry::rotated_nms(scene.candidates, harness::kBenchNmsIou));
  }
}
BENCHMARK(BM_RotatedNms)->Arg(100)->Arg(1000);

void BM_PeakExtraction(benchmark::State& state) {
  const auto scene = harness::make_bench_scene(static_cast<int>(state.range(0)),
                                               harness::OverlapProfile::kDense, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(targets::extract_peaks(scene.heatmap, 1 << 20, scene.threshold));
  }
}
BENCHMARK(BM_PeakExtraction)->Arg(100)->Arg(1000);

void BM_IouBev(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> c(-2, 2), e(1, 5), a(-3, 3);
  std::vector<geometry::Box3D> boxes;
  for (int i = 0; i < 256; ++i) boxes.emplace_back(c(rng), c(rng), 0, e(rng), e(rng), 1, a(rng));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(geometry::iou_bev(boxes[i & 255], boxes[(i + 1) & 255]));
    ++i;
  }
}
BENCHMARK(BM_IouBev);

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  net::Conv2d conv(c, c, 3, 1, 1);
  net::Tensor x(1, c, 64, 64);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (double& v : x.data) v = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, false));
  state.counters["MACs"] = benchmark::Counter(9.0 * c * c * 64 * 64, benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
