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

// The anchor-free codec. Ground-truth boxes become five dense supervision
// targets on the pillar lattice (center heatmap, sub-pillar offset, z, size,
// binned orientation); predicted maps become detections through 3x3 max-pool
// peak extraction, with no IoU-based suppression anywhere.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "keypillar/encoder.hpp"
#include "keypillar/geometry.hpp"

namespace keypillar::targets {

using encoder::GridSpec;
using geometry::Box3D;
using geometry::Detection;

struct LabeledBox {
  Box3D box;
  int class_id = 0;
};

// Channel-major C x nx x ny map on the pillar lattice.
struct DenseMap {
  int channels = 0, nx = 0, ny = 0;
  std::vector<double> data;

  DenseMap() = default;
  DenseMap(int c, int x, int y)
      : channels(c), nx(x), ny(y),
        data(static_cast<std::size_t>(c) * x * y, 0.0) {}

  std::size_t index(int c, int ix, int iy) const {
    return (static_cast<std::size_t>(c) * nx + ix) * ny + iy;
  }
  double& at(int c, int ix, int iy) { return data[index(c, ix, iy)]; }
  double at(int c, int ix, int iy) const { return data[index(c, ix, iy)]; }
  std::size_t pixels() const { return static_cast<std::size_t>(nx) * ny; }
};

// Continuous lattice position of a box center and the pillar containing it.
struct Keypoint {
  double px = 0.0, py = 0.0;
  int ix = 0, iy = 0;
};

// Throws RangeError when the center lies outside the detection range.
Keypoint encode_keypoint(const Box3D& box, const GridSpec& grid);

enum class HeatmapMode { kCarShape, kGaussian };

// Value written at lattice distance d from the center pixel of a car-shape
// target: 1 at the center, 0.8 one pixel away, 1/d beyond.
double carshape_value(double d);

// Footprint-shaped map; a pixel is covered when its center lies inside the
// rotated footprint. The center pixel is always written.
DenseMap encode_heatmap_carshape(std::span<const LabeledBox> boxes,
                                 const GridSpec& grid, int num_classes);

// Radius (in pixels) such that a box displaced by it still overlaps the
// ground truth with IoU >= min_overlap; width/length in pixels.
double gaussian_radius(double length_px, double width_px, double min_overlap);
double gaussian_value(double dx, double dy, double sigma);

// Splat with sigma = (2 * radius + 1) / 6 over a (2 * radius + 1)^2 window.
DenseMap encode_heatmap_gaussian(std::span<const LabeledBox> boxes,
                                 const GridSpec& grid, int num_classes,
                                 double min_overlap = 0.7);

struct OffsetTarget {
  DenseMap offset;  // 2 channels, meters
  std::vector<std::uint8_t> mask;  // nx * ny
};

// Every pixel q within the (2r+1)^2 square around an object's center pixel
// (clipped to the lattice) gets b * (p - q - 0.5), the displacement from q's
// decode anchor to the true center. Conflicts go to the object whose center
// is nearest to q's center.
OffsetTarget encode_offset(std::span<const LabeledBox> boxes,
                           const GridSpec& grid, int radius);

// Two overlapping yaw bins, [-7pi/6, pi/6] centered at -pi/2 and
// [-pi/6, 7pi/6] centered at pi/2.
inline constexpr std::array<double, 2> kBinCenters = {-geometry::kPi / 2,
                                                      geometry::kPi / 2};
inline constexpr std::array<double, 2> kBinLow = {-7 * geometry::kPi / 6,
                                                  -geometry::kPi / 6};
inline constexpr std::array<double, 2> kBinHigh = {geometry::kPi / 6,
                                                   7 * geometry::kPi / 6};

struct OrientationTarget {
  std::array<int, 2> eta{};                     // bin membership
  std::array<std::array<double, 2>, 2> nu{};    // (sin, cos) of residual
};

OrientationTarget encode_orientation(double theta);

// Channel layout of the 8-channel orientation head. For bin i: channels
// 4i, 4i+1 are the (not-in-bin, in-bin) logits and 4i+2, 4i+3 the predicted
// (sin, cos) residual.
inline constexpr int kOrientationChannels = 8;
inline constexpr int logit_channel(int bin, int cls) { return 4 * bin + cls; }
inline constexpr int residual_channel(int bin, int k) { return 4 * bin + 2 + k; }

// Picks the bin with the larger in-bin softmax probability (bin 0 on ties) and
// returns atan2(sin, cos) + center, canonicalized to [-pi, pi).
double decode_orientation(const std::array<std::array<double, 2>, 2>& mu_hat,
                          const std::array<std::array<double, 2>, 2>& nu_hat);

struct ObjectTarget {
  Keypoint keypoint;
  int class_id = 0;
  double z = 0.0;
  std::array<double, 3> size{};  // w, l, h
  OrientationTarget orientation;
  // False when another object owns the same center pixel; such objects still
  // count toward N but are not regressed.
  bool owns_center = true;
};

struct TargetOptions {
  int num_classes = 1;
  HeatmapMode heatmap_mode = HeatmapMode::kCarShape;
  int offset_radius = 2;
  double gaussian_min_overlap = 0.7;
};

struct HeadTargets {
  DenseMap heatmap;
  OffsetTarget offset;
  DenseMap z;       // 1 channel, written at owned centers
  DenseMap size;    // 3 channels
  std::vector<std::uint8_t> center_mask;  // nx * ny
  std::vector<ObjectTarget> objects;

  int num_objects() const { return static_cast<int>(objects.size()); }
};

// Per-object z and (w, l, h) stored at each object's center pixel.
struct RegressionTargets {
  DenseMap z;
  DenseMap size;
  std::vector<std::uint8_t> center_mask;
  std::vector<ObjectTarget> objects;
};
RegressionTargets encode_regression(std::span<const LabeledBox> boxes,
                                    const GridSpec& grid);

// Boxes whose centers fall outside the BEV range are skipped.
HeadTargets encode_targets(std::span<const LabeledBox> boxes,
                           const GridSpec& grid, const TargetOptions& options);

struct Peak {
  int class_id = 0;
  int ix = 0, iy = 0;
  double score = 0.0;
};

// 3x3 stride-1 max pooling (edge cells see only in-lattice neighbors).
DenseMap max_pool3x3(const DenseMap& map);

// A pixel is a peak when it equals its pooled value and reaches the
// threshold. The best `max_objects` peaks are returned, ordered by score
// descending then (channel, row, column).
std::vector<Peak> extract_peaks(const DenseMap& heatmap, int max_objects,
                                double score_threshold);

// Predicted head maps. `heatmap` holds probabilities, not logits.
struct HeadMaps {
  DenseMap heatmap;
  DenseMap offset;       // 2
  DenseMap z;            // 1
  DenseMap size;         // 3
  DenseMap orientation;  // 8
};

// Center: (back + b (ix + 0.5) + o1, left + b (iy + 0.5) + o2). Predicted
// extents are floored at 1 mm so every decoded box is valid.
std::vector<Detection> decode_boxes(std::span<const Peak> peaks,
                                    const HeadMaps& maps, const GridSpec& grid);

// Maps a perfect network would emit for `targets`: the heatmap itself, dense
// offsets, and saturated bin logits (`logit_margin` apart).
HeadMaps perfect_predictions(const HeadTargets& targets,
                             double logit_margin = 20.0);

}  // namespace keypillar::targets
