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

// Pillar encoding: raw points -> per-pillar augmented point sets -> learned
// per-pillar features -> dense bird's-eye-view pseudo image.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace keypillar::encoder {

struct Point {
  double x = 0.0, y = 0.0, z = 0.0;
  double r = 0.0;  // reflectance in [0, 1]
};

struct PointCloud {
  std::vector<Point> points;
};

// Detection range and pillar lattice. Lattice index ix runs along x from
// `back`, iy along y from `left`.
struct GridSpec {
  double back = 0.0, front = 0.0;
  double left = 0.0, right = 0.0;
  double z_min = 0.0, z_max = 0.0;
  double b = 0.0;  // pillar side length
  int nx = 0, ny = 0;

  // Half-open containment in all three axes.
  bool contains(double x, double y, double z) const;
  bool contains_bev(double x, double y) const;
};

struct Range3 {
  double back, front, left, right, z_min, z_max;
};

// nx = ceil((front - back) / b), ny = ceil((right - left) / b).
// Throws RangeError for non-positive b or inverted/empty ranges.
GridSpec make_grid(const Range3& range, double b);

inline constexpr int kPointDims = 9;

struct PillarCoord {
  int ix = 0;
  int iy = 0;
  friend bool operator==(const PillarCoord&, const PillarCoord&) = default;
};

// P x max_points x 9 features, zero-padded beyond each pillar's count.
// Per-point layout: x, y, z, r, x - cx, y - cy, z - cz, x - px, y - py with
// (cx, cy, cz) the pillar's point centroid and (px, py) its geometric center.
struct PillarSet {
  int max_points = 0;
  std::vector<double> features;
  std::vector<int> counts;
  std::vector<PillarCoord> coords;

  int size() const { return static_cast<int>(counts.size()); }
  std::span<const double> point(int pillar, int slot) const {
    return {features.data() +
                (static_cast<std::size_t>(pillar) * max_points + slot) *
                    kPointDims,
            kPointDims};
  }
};

struct PillarizeOptions {
  int max_points = 100;
  int max_pillars = 12000;
  std::uint64_t seed = 0;
};

// Pillars appear in order of first occupancy in the input. Points beyond
// max_points in a pillar are dropped in input order; when more than
// max_pillars pillars are occupied a seeded uniform subset is kept (still in
// first-occupancy order).
PillarSet pillarize(const PointCloud& cloud, const GridSpec& grid,
                    const PillarizeOptions& options);

// Concatenates per-frame pillar sets so one feature-net pass (and one set of
// batch statistics) covers a whole batch. `offsets` receives the first pillar
// index of every input, plus a final end offset.
PillarSet concat_pillars(std::span<const PillarSet> sets,
                         std::vector<int>* offsets);

struct BatchNormParams {
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  double eps = 1e-3;
  double momentum = 0.1;

  explicit BatchNormParams(int channels = 0)
      : gamma(channels, 1.0),
        beta(channels, 0.0),
        running_mean(channels, 0.0),
        running_var(channels, 1.0) {}
};

// Linear (no bias) D -> F, batch normalization, rectifier, max over points.
struct PfnParams {
  int out_channels = 0;
  std::vector<double> weight;  // F x D, row-major
  BatchNormParams bn;

  PfnParams() = default;
  explicit PfnParams(int F) : out_channels(F), weight(F * kPointDims, 0.0), bn(F) {}
};

struct PfnCache {
  bool training = false;
  int num_pillars = 0;
  int max_points = 0;
  int out_channels = 0;
  std::vector<int> counts;
  std::vector<double> inputs;      // M x D, valid points only
  std::vector<double> normalized;  // M x F, (z - mean) / std
  std::vector<double> activated;   // M x F, after affine + relu
  std::vector<double> inv_std;     // F
  std::vector<int> point_offset;   // P + 1, into the valid-point arrays
  std::vector<int> argmax;         // F x P, valid-point index of the max
};

struct PfnOutput {
  std::vector<double> features;  // F x P, channel-major
  PfnCache cache;
};

// Throws ShapeError if the weight shape does not match D -> F. In training
// mode the running statistics in `params` are updated.
PfnOutput pfn_forward(const PillarSet& pillars, PfnParams& params,
                      bool training);

struct PfnGrads {
  std::vector<double> weight;  // F x D
  std::vector<double> gamma, beta;
  std::vector<double> inputs;  // P x max_points x D, zero for empty slots
};

PfnGrads pfn_backward(const PfnCache& cache, const PfnParams& params,
                      std::span<const double> upstream);

// Dense F x nx x ny lattice (channel-major, iy fastest).
struct PseudoImage {
  int nx = 0, ny = 0, channels = 0;
  std::vector<double> data;

  double at(int ix, int iy, int f) const {
    return data[(static_cast<std::size_t>(f) * nx + ix) * ny + iy];
  }
};

// Throws RangeError for coordinates outside the lattice and ShapeError when
// the feature count does not match the coordinate count.
PseudoImage scatter(std::span<const double> features, int channels,
                    std::span<const PillarCoord> coords, const GridSpec& grid);

// Inverse of scatter on occupied cells; also the backward pass of scatter.
std::vector<double> gather(const PseudoImage& image,
                           std::span<const PillarCoord> coords);

}  // namespace keypillar::encoder
