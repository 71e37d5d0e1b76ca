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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "keypillar/harness.hpp"

namespace keypillar::harness {
namespace {

constexpr double kBenchPixel = 0.5;  // metres per lattice cell
constexpr double kBenchThreshold = 0.1;

struct Layout {
  int blob_radius;  // Chebyshev radius of a blob
  int spacing;      // pixels between blob centres
};

Layout layout_of(OverlapProfile profile) {
  // Isolated: 14 px = 7 m between centres, so even the outermost pixels of
  // two blobs are 6 m apart, more than any two car boxes can span.
  return profile == OverlapProfile::kIsolated ? Layout{1, 14} : Layout{2, 6};
}

template <class F>
double median_seconds(int repeats, F&& fn) {
  std::vector<double> t;
  t.reserve(repeats);
  for (int i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    t.push_back(std::max(std::chrono::duration<double>(stop - start).count(), 1e-9));
  }
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  return t[t.size() / 2];
}

}  // namespace

BenchScene make_bench_scene(int n, OverlapProfile profile, std::uint64_t seed) {
  if (n < 1) n = 1;
  const Layout lay = layout_of(profile);
  const int blob = (2 * lay.blob_radius + 1) * (2 * lay.blob_radius + 1);
  const int objects = (n + blob - 1) / blob;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(objects))));
  const int rows = (objects + cols - 1) / cols;

  BenchScene s;
  s.threshold = kBenchThreshold;
  s.num_objects = objects;
  const int nx = cols * lay.spacing, ny = rows * lay.spacing;
  s.grid = encoder::make_grid({0.0, nx * kBenchPixel, 0.0, ny * kBenchPixel, -3.0, 1.0},
                              kBenchPixel);
  s.heatmap = targets::DenseMap(1, s.grid.nx, s.grid.ny);

  std::mt19937_64 rng(seed);
  const auto uni = [&](double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
  };
  // Pixel offsets ordered by ring so partial blobs always keep the centre.
  std::vector<std::pair<int, int>> offsets;
  for (int ring = 0; ring <= lay.blob_radius; ++ring) {
    for (int dx = -ring; dx <= ring; ++dx) {
      for (int dy = -ring; dy <= ring; ++dy) {
        if (std::max(std::abs(dx), std::abs(dy)) == ring) offsets.emplace_back(dx, dy);
      }
    }
  }
  for (int o = 0; o < objects; ++o) {
    const int cx = (o % cols) * lay.spacing + lay.spacing / 2;
    const int cy = (o / cols) * lay.spacing + lay.spacing / 2;
    const int count = n / objects + (o < n % objects ? 1 : 0);
    const double peak = uni(0.6, 1.0);
    const double w = uni(1.5, 1.8), l = uni(3.6, 4.4), theta = uni(-geometry::kPi, geometry::kPi);
    for (int k = 0; k < count; ++k) {
      const auto [dx, dy] = offsets[k];
      const int ring = std::max(std::abs(dx), std::abs(dy));
      // Scores fall strictly ring by ring: every non-centre pixel sees a
      // higher inner-ring pixel inside its own 3x3 window.
      const double score =
          ring == 0 ? peak : peak * uni(0.65 - 0.3 * (ring - 1), 0.95 - 0.3 * (ring - 1));
      const int ix = cx + dx, iy = cy + dy;
      s.heatmap.at(0, ix, iy) = score;
      const double x = s.grid.back + (ix + 0.5) * kBenchPixel + uni(-0.1, 0.1);
      const double y = s.grid.left + (iy + 0.5) * kBenchPixel + uni(-0.1, 0.1);
      s.candidates.push_back({geometry::Box3D(x, y, 0.0, w, l, 1.5, theta), score, 0});
      s.candidate_object.push_back(o);
      s.candidate_pixel.emplace_back(ix, iy);
    }
  }
  return s;
}

BenchReport bench_postprocessing(int n, OverlapProfile profile, std::uint64_t seed,
                                 int repeats) {
  const BenchScene s = make_bench_scene(n, profile, seed);
  repeats = std::max(repeats, 1);
  BenchReport r;
  r.n = static_cast<int>(s.candidates.size());

  std::vector<std::size_t> kept;
  r.nms_seconds = median_seconds(repeats, [&] {
    kept = geometry::rotated_nms(s.candidates, kBenchNmsIou);
  });
  std::vector<targets::Peak> peaks;
  r.peak_seconds = median_seconds(repeats, [&] {
    peaks = targets::extract_peaks(s.heatmap, r.n, s.threshold);
  });

  std::vector<int> nms_objects, peak_objects;
  for (std::size_t k : kept) nms_objects.push_back(s.candidate_object[k]);
  for (const targets::Peak& p : peaks) {
    int owner = -1;
    for (std::size_t c = 0; c < s.candidate_pixel.size(); ++c) {
      if (s.candidate_pixel[c] == std::make_pair(p.ix, p.iy)) owner = s.candidate_object[c];
    }
    peak_objects.push_back(owner);
  }
  std::sort(nms_objects.begin(), nms_objects.end());
  std::sort(peak_objects.begin(), peak_objects.end());
  r.nms_kept = static_cast<int>(nms_objects.size());
  r.peaks_kept = static_cast<int>(peak_objects.size());
  r.identical = nms_objects == peak_objects;
  r.ratio = r.nms_seconds / r.peak_seconds;
  return r;
}

std::string bench_csv(const BenchReport& r) {
  char buf[256];
  const char* same = r.identical ? "true" : "false";
  std::snprintf(buf, sizeof(buf),
                "method,n,median_s,identical,ratio\n"
                "rotated_nms,%d,%.9g,%s,%.6g\n"
                "maxpool_and,%d,%.9g,%s,%.6g\n",
                r.n, r.nms_seconds, same, r.ratio, r.n, r.peak_seconds, same, r.ratio);
  return buf;
}

}  // namespace keypillar::harness
