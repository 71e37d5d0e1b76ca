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

#include "keypillar/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "keypillar/errors.hpp"

namespace keypillar::geometry {
namespace {

constexpr double kSliverArea = 1e-12;

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Intersection of segment p->q with the infinite line through a->b.
Point2 line_intersection(const Point2& p, const Point2& q, const Point2& a,
                         const Point2& b) {
  const double dpq_x = q.x - p.x, dpq_y = q.y - p.y;
  const double dab_x = b.x - a.x, dab_y = b.y - a.y;
  const double denom = dpq_x * dab_y - dpq_y * dab_x;
  if (denom == 0.0) return p;
  const double t = ((a.x - p.x) * dab_y - (a.y - p.y) * dab_x) / denom;
  return {p.x + t * dpq_x, p.y + t * dpq_y};
}

bool same_footprint(const Box3D& a, const Box3D& b) {
  return a.x == b.x && a.y == b.y && a.w == b.w && a.l == b.l &&
         a.theta == b.theta;
}

}  // namespace

double canonical_angle(double theta) {
  constexpr double kTwoPi = 2.0 * kPi;
  double t = theta - kTwoPi * std::floor((theta + kPi) / kTwoPi);
  if (t >= kPi) t -= kTwoPi;
  if (t < -kPi) t += kTwoPi;
  return t;
}

Box3D::Box3D(double x_, double y_, double z_, double w_, double l_, double h_,
             double theta_)
    : x(x_), y(y_), z(z_), w(w_), l(l_), h(h_), theta(canonical_angle(theta_)) {
  if (!(w > 0.0) || !(l > 0.0) || !(h > 0.0) || !std::isfinite(w) ||
      !std::isfinite(l) || !std::isfinite(h)) {
    throw RangeError("Box3D extents must be finite and strictly positive");
  }
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
      !std::isfinite(theta_)) {
    throw RangeError("Box3D center and yaw must be finite");
  }
}

double BevPolygon::signed_area() const {
  const std::size_t n = vertices.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& p = vertices[i];
    const Point2& q = vertices[(i + 1) % n];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * twice;
}

BevPolygon box_corners_bev(const Box3D& box) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double hl = 0.5 * box.l, hw = 0.5 * box.w;
  // Local corners (along-heading, across-heading), CCW.
  const std::array<Point2, 4> local = {
      Point2{hl, hw}, Point2{-hl, hw}, Point2{-hl, -hw}, Point2{hl, -hw}};
  BevPolygon poly;
  poly.vertices.reserve(4);
  for (const Point2& p : local) {
    poly.vertices.push_back(
        {box.x + c * p.x - s * p.y, box.y + s * p.x + c * p.y});
  }
  return poly;
}

bool point_in_footprint(const Box3D& box, double px, double py) {
  const double c = std::cos(box.theta), s = std::sin(box.theta);
  const double dx = px - box.x, dy = py - box.y;
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return std::abs(along) <= 0.5 * box.l && std::abs(across) <= 0.5 * box.w;
}

bool point_in_box(const Box3D& box, double px, double py, double pz) {
  return pz >= box.z_bottom() && pz <= box.z_top() &&
         point_in_footprint(box, px, py);
}

BevPolygon clip_convex(const BevPolygon& subject, const BevPolygon& clip) {
  std::vector<Point2> output = subject.vertices;
  const std::size_t m = clip.vertices.size();
  for (std::size_t e = 0; e < m && !output.empty(); ++e) {
    const Point2& a = clip.vertices[e];
    const Point2& b = clip.vertices[(e + 1) % m];
    std::vector<Point2> input;
    input.swap(output);
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + n - 1) % n];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(line_intersection(prev, cur, a, b));
      }
    }
  }
  return BevPolygon{std::move(output)};
}

double intersection_area_bev(const Box3D& a, const Box3D& b) {
  // Bounding-circle rejection.
  const double ra = 0.5 * std::hypot(a.w, a.l);
  const double rb = 0.5 * std::hypot(b.w, b.l);
  const double dx = a.x - b.x, dy = a.y - b.y;
  if (dx * dx + dy * dy > (ra + rb) * (ra + rb)) return 0.0;
  const double area =
      clip_convex(box_corners_bev(a), box_corners_bev(b)).signed_area();
  return area < kSliverArea ? 0.0 : area;
}

double iou_bev(const Box3D& a, const Box3D& b) {
  if (same_footprint(a, b)) return 1.0;
  const double inter = intersection_area_bev(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.w * a.l + b.w * b.l - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double overlap_h = std::min(a.z_top(), b.z_top()) -
                           std::max(a.z_bottom(), b.z_bottom());
  if (overlap_h <= 0.0) return 0.0;
  if (same_footprint(a, b) && a.z == b.z && a.h == b.h) return 1.0;
  const double inter_area =
      same_footprint(a, b) ? a.w * a.l : intersection_area_bev(a, b);
  if (inter_area == 0.0) return 0.0;
  const double inter = inter_area * overlap_h;
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> rotated_nms(std::span<const Detection> dets,
                                     double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) {
                     return dets[i].score > dets[j].score;
                   });
  std::vector<char> suppressed(dets.size(), 0);
  std::vector<std::size_t> keep;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (suppressed[j]) continue;
      if (iou_bev(dets[i].box, dets[j].box) > iou_threshold) suppressed[j] = 1;
    }
  }
  return keep;
}

}  // namespace keypillar::geometry
