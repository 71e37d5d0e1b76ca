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

// Oriented 3D boxes in the LiDAR frame and the overlap measures used for
// evaluation and for the rotated-NMS baseline.
//
// Conventions: x forward, y left, z up. `l` is the extent along the heading
// direction and `w` the extent across it; `theta` is the yaw of the heading
// measured counter-clockwise from +x.

#pragma once

#include <array>
#include <numbers>
#include <span>
#include <vector>

namespace keypillar::geometry {

inline constexpr double kPi = std::numbers::pi;

// Maps any finite angle into [-pi, pi).
double canonical_angle(double theta);

struct Box3D {
  double x = 0.0, y = 0.0, z = 0.0;
  double w = 1.0, l = 1.0, h = 1.0;
  double theta = 0.0;

  Box3D() = default;
  // Validates extents and canonicalizes theta; throws RangeError on
  // non-positive or non-finite extents.
  Box3D(double x, double y, double z, double w, double l, double h,
        double theta);

  double volume() const { return w * l * h; }
  double z_bottom() const { return z - 0.5 * h; }
  double z_top() const { return z + 0.5 * h; }
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Convex polygon, counter-clockwise.
struct BevPolygon {
  std::vector<Point2> vertices;

  double signed_area() const;
};

struct Detection {
  Box3D box;
  double score = 0.0;
  int class_id = 0;
};

// Footprint corners, counter-clockwise starting at the front-left corner.
BevPolygon box_corners_bev(const Box3D& box);

// True when (px, py) lies inside the rotated footprint (boundary inclusive).
bool point_in_footprint(const Box3D& box, double px, double py);

// True when the 3D point lies inside the oriented box (boundary inclusive).
bool point_in_box(const Box3D& box, double px, double py, double pz);

// Clips `subject` against the convex `clip` polygon (Sutherland-Hodgman).
BevPolygon clip_convex(const BevPolygon& subject, const BevPolygon& clip);

double intersection_area_bev(const Box3D& a, const Box3D& b);
double iou_bev(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

// Greedy score-descending suppression with iou_bev. Equal scores are visited
// in increasing input index. Returns kept indices in visiting order.
std::vector<std::size_t> rotated_nms(std::span<const Detection> dets,
                                     double iou_threshold);

}  // namespace keypillar::geometry
