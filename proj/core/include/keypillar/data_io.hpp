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

// KITTI-format ingestion and emission, ground-truth databases for sampling
// augmentation, and a seeded synthetic scene generator.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "keypillar/encoder.hpp"
#include "keypillar/geometry.hpp"
#include "keypillar/targets.hpp"

namespace keypillar::data {

using encoder::GridSpec;
using encoder::Point;
using encoder::PointCloud;
using geometry::Box3D;

// ---------------------------------------------------------------- points

// Consecutive 16-byte records of four little-endian f32: x, y, z, reflectance.
// Throws FormatError (offset of the partial record) when the length is not a
// multiple of 16.
PointCloud read_velodyne_bin(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_velodyne_bin(const PointCloud& cloud);

PointCloud load_velodyne(const std::filesystem::path& path);
void save_velodyne(const std::filesystem::path& path, const PointCloud& cloud);

// ----------------------------------------------------------- calibration

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

struct Calibration {
  std::array<double, 12> p2{};              // 3x4 camera projection
  std::array<double, 9> r0_rect{};          // 3x3 rectification
  std::array<double, 12> tr_velo_to_cam{};  // 3x4 rigid transform

  Vec3 velo_to_rect(const Vec3& p) const;
  Vec3 rect_to_velo(const Vec3& p) const;
  // Pixel coordinates of a rectified-camera point; depth is the camera z.
  std::array<double, 2> project(const Vec3& rect) const;
};

// Reads the P2, R0_rect and Tr_velo_to_cam keys (others are ignored). Throws
// FormatError for missing keys or bad counts, and Error for singular
// rectification or extrinsic matrices.
Calibration parse_calibration(std::string_view text);
std::string format_calibration(const Calibration& calib);

// Forward-looking camera aligned with the LiDAR (x forward), KITTI-like
// intrinsics and a 1242 x 375 image.
Calibration synthetic_calibration();
inline constexpr int kImageWidth = 1242;
inline constexpr int kImageHeight = 375;

// Keeps points in front of the camera whose projection falls in
// [0, width) x [0, height).
PointCloud fov_crop(const PointCloud& cloud, const Calibration& calib,
                    int image_width = kImageWidth, int image_height = kImageHeight);

// --------------------------------------------------------------- labels

struct KittiObject {
  std::string type;
  int class_id = -1;  // index into the class list, -1 when not a target class
  Box3D box;          // LiDAR frame, geometric center
  double truncation = 0.0;
  int occlusion = 0;
  double alpha = 0.0;
  std::array<double, 4> bbox{};  // left, top, right, bottom (pixels)
  double score = 1.0;
  bool has_score = false;

  double bbox_height() const { return bbox[3] - bbox[1]; }
};

struct DontCare {
  std::array<double, 4> bbox{};
};

struct LabelSet {
  std::vector<KittiObject> objects;
  std::vector<DontCare> dont_care;
};

// One object per line: type, truncation, occlusion, alpha, 2D box, h w l,
// camera-frame bottom center, rotation_y, optional score. Camera
// coordinates are mapped to the LiDAR frame and lifted by h/2. Throws
// FormatError carrying the 1-based line number.
LabelSet parse_kitti_labels(std::string_view text, const Calibration& calib,
                            std::span<const std::string> class_names);

// Inverse of parse_kitti_labels for one object (score column when present).
std::string format_kitti_object(const KittiObject& obj, const Calibration& calib);
std::string format_kitti_labels(const LabelSet& labels, const Calibration& calib);

// Fills type, alpha and the projected 2D box (clipped to the image) for a
// LiDAR-frame detection.
KittiObject object_from_detection(const geometry::Detection& det,
                                  const Calibration& calib,
                                  std::span<const std::string> class_names);

// ---------------------------------------------------------------- frames

struct Frame {
  std::string id;
  PointCloud cloud;
  std::vector<KittiObject> objects;
  std::vector<DontCare> dont_care;
  Calibration calib;

  // Target-class objects as codec input.
  std::vector<targets::LabeledBox> labeled_boxes() const;
};

// Dataset layout: <root>/velodyne/<id>.bin, <root>/label_2/<id>.txt,
// <root>/calib/<id>.txt. Missing label files mean "no objects".
Frame load_frame(const std::filesystem::path& root, const std::string& id,
                 std::span<const std::string> class_names);
void save_frame(const std::filesystem::path& root, const Frame& frame);

// One frame id per line; blank lines ignored.
std::vector<std::string> read_split(const std::filesystem::path& path);
void write_split(const std::filesystem::path& path, std::span<const std::string> ids);

// ------------------------------------------------------------ database

struct GtEntry {
  Box3D box;
  int class_id = 0;
  std::vector<Point> points;
  std::string frame_id;
};

struct GtDatabase {
  std::map<int, std::vector<GtEntry>> entries;  // by class id

  std::size_t size() const;
};

// One entry per target-class object holding the points inside its box.
GtDatabase build_gt_database(std::span<const Frame> frames);

// ----------------------------------------------------------- synthetic

struct SynthOptions {
  double ground_z = -1.7;
  int clutter_points = 1500;
  double surface_density = 40.0;  // points per square meter of car surface
  double min_gap = 0.3;           // extra footprint clearance between boxes, m
};

// Pairwise BEV-disjoint cars fully inside the range with car-like size
// priors, points on their surfaces (lower hood in front so heading is
// observable) and ground clutter outside every footprint. Fewer than
// n_boxes are produced only when placement keeps failing.
Frame synth_scene(std::uint64_t seed, int n_boxes, const GridSpec& grid,
                  const SynthOptions& options = {});

}  // namespace keypillar::data
