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

#include <cmath>
#include <random>

#include "keypillar/errors.hpp"
#include "keypillar/geometry.hpp"
#include "oracles.hpp"

namespace kg = keypillar::geometry;
using kg::Box3D;
using kg::kPi;

namespace {

Box3D random_box(std::mt19937_64& rng, double spread = 3.0) {
  std::uniform_real_distribution<double> pos(-spread, spread), ext(0.3, 4.0),
      ang(-kPi, kPi), zz(-1.0, 1.0);
  return Box3D(pos(rng), pos(rng), zz(rng), ext(rng), ext(rng), ext(rng), ang(rng));
}

bool has_vertex(const kg::BevPolygon& p, double x, double y) {
  for (const auto& v : p.vertices) {
    if (std::abs(v.x - x) < 1e-12 && std::abs(v.y - y) < 1e-12) return true;
  }
  return false;
}

}  // namespace

TEST(CanonicalAngle, MapsIntoHalfOpenRange) {
  EXPECT_DOUBLE_EQ(kg::canonical_angle(kPi), -kPi);
  EXPECT_DOUBLE_EQ(kg::canonical_angle(-kPi), -kPi);
  EXPECT_NEAR(kg::canonical_angle(3 * kPi + 0.25), -kPi + 0.25, 1e-12);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> any(-100.0, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = any(rng);
    const double c = kg::canonical_angle(a);
    EXPECT_GE(c, -kPi);
    EXPECT_LT(c, kPi);
    EXPECT_NEAR(std::remainder(a - c, 2 * kPi), 0.0, 1e-9);
  }
}

TEST(Box3D, RejectsNonPositiveExtents) {
  EXPECT_THROW(Box3D(0, 0, 0, 0.0, 1, 1, 0), keypillar::RangeError);
  EXPECT_THROW(Box3D(0, 0, 0, 1, -1, 1, 0), keypillar::RangeError);
  EXPECT_THROW(Box3D(0, 0, 0, 1, 1, std::nan(""), 0), keypillar::RangeError);
  EXPECT_DOUBLE_EQ(Box3D(0, 0, 0, 1, 1, 1, 2 * kPi).theta, 0.0);
}

TEST(BoxCorners, AxisAlignedSquare) {
  for (double theta : {0.0, kPi / 2}) {
    const auto p = kg::box_corners_bev(Box3D(0, 0, 0, 2, 2, 1, theta));
    ASSERT_EQ(p.vertices.size(), 4u);
    for (double sx : {-1.0, 1.0}) {
      for (double sy : {-1.0, 1.0}) EXPECT_TRUE(has_vertex(p, sx, sy)) << sx << "," << sy;
    }
  }
}

TEST(BoxCorners, RotatedRectangleByHand) {
  // Centre (1,1), w=1 across, l=2 along a heading of 45 degrees.
  // Heading unit (h, h) and across unit (-h, h) with h = sqrt(2)/2.
  const double h = std::sqrt(2.0) / 2;
  const auto p = kg::box_corners_bev(Box3D(1, 1, 0, 1, 2, 1, kPi / 4));
  const double along = 1.0, across = 0.5;
  for (double a : {-along, along}) {
    for (double c : {-across, across}) {
      EXPECT_TRUE(has_vertex(p, 1 + a * h - c * h, 1 + a * h + c * h));
    }
  }
  EXPECT_GT(p.signed_area(), 0.0);
  EXPECT_NEAR(p.signed_area(), 2.0, 1e-12);
}

TEST(BoxCorners, CounterClockwiseForRandomBoxes) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Box3D b = random_box(rng);
    const auto p = kg::box_corners_bev(b);
    EXPECT_NEAR(p.signed_area(), b.w * b.l, 1e-9);
  }
}

TEST(IouBev, IdenticalDisjointAndSymmetric) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Box3D a = random_box(rng), b = random_box(rng);
    EXPECT_EQ(kg::iou_bev(a, a), 1.0);
    EXPECT_NEAR(kg::iou_bev(a, b), kg::iou_bev(b, a), 1e-12);
    const double v = kg::iou_bev(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(kg::iou_bev(Box3D(0, 0, 0, 1, 1, 1, 0), Box3D(5, 5, 0, 1, 1, 1, 0.3)), 0.0);
}

TEST(IouBev, AxisAlignedClosedForm) {
  // 2x4 rectangles offset by (1, 0.5): overlap (4-1) x (2-0.5) = 4.5.
  const Box3D a(0, 0, 0, 2, 4, 1, 0), b(1, 0.5, 0, 2, 4, 1, 0);
  EXPECT_NEAR(kg::iou_bev(a, b), 4.5 / (8 + 8 - 4.5), 1e-12);
}

TEST(IouBev, AgreesWithRasterOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const Box3D a = random_box(rng, 1.5), b = random_box(rng, 1.5);
    EXPECT_NEAR(kg::iou_bev(a, b), oracle::raster_iou(a, b, 256), 0.01);
  }
}

TEST(Iou3d, HeightOverlap) {
  const Box3D a(0, 0, 0, 2, 4, 2, 0.7), b(0, 0, 1, 2, 4, 2, 0.7);
  // Half the height overlaps: inter = 8, union = 16 + 16 - 8.
  EXPECT_NEAR(kg::iou_3d(a, b), 8.0 / 24.0, 1e-12);
  EXPECT_EQ(kg::iou_3d(a, Box3D(0, 0, 5, 2, 4, 2, 0.7)), 0.0);
  EXPECT_EQ(kg::iou_3d(a, a), 1.0);
}

TEST(ClipConvex, SquareAgainstShiftedSquare) {
  const auto a = kg::box_corners_bev(Box3D(0, 0, 0, 2, 2, 1, 0));
  const auto b = kg::box_corners_bev(Box3D(1, 1, 0, 2, 2, 1, 0));
  EXPECT_NEAR(kg::clip_convex(a, b).signed_area(), 1.0, 1e-12);
}

TEST(PointInBox, InteriorAndExterior) {
  const Box3D b(0, 0, 0, 2, 4, 2, kPi / 2);  // length along y
  EXPECT_TRUE(kg::point_in_box(b, 0.0, 1.9, 0.0));
  EXPECT_FALSE(kg::point_in_box(b, 1.9, 0.0, 0.0));
  EXPECT_FALSE(kg::point_in_box(b, 0.0, 0.0, 1.5));
  EXPECT_TRUE(kg::point_in_footprint(b, 0.0, 0.0));
}

TEST(RotatedNms, KeepsBestAndSuppressesOverlaps) {
  std::vector<kg::Detection> d{{Box3D(0, 0, 0, 2, 4, 1, 0), 0.5, 0},
                               {Box3D(0.2, 0, 0, 2, 4, 1, 0), 0.9, 0},
                               {Box3D(10, 0, 0, 2, 4, 1, 0), 0.3, 0}};
  EXPECT_EQ(kg::rotated_nms(d, 0.5), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(kg::rotated_nms(d, 0.99), (std::vector<std::size_t>{1, 0, 2}));
}

TEST(RotatedNms, EqualScoresVisitInInputOrder) {
  std::vector<kg::Detection> d{{Box3D(0, 0, 0, 2, 4, 1, 0), 0.5, 0},
                               {Box3D(0.1, 0, 0, 2, 4, 1, 0), 0.5, 0}};
  EXPECT_EQ(kg::rotated_nms(d, 0.5), (std::vector<std::size_t>{0}));
}

TEST(RotatedNms, KeptSetIsPairwiseBelowThreshold) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(0.0, 1.0);
  std::vector<kg::Detection> d;
  for (int i = 0; i < 150; ++i) d.push_back({random_box(rng, 6.0), s(rng), 0});
  const auto kept = kg::rotated_nms(d, 0.3);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = i + 1; j < kept.size(); ++j) {
      EXPECT_LE(kg::iou_bev(d[kept[i]].box, d[kept[j]].box), 0.3);
    }
  }
  // Every suppressed box overlaps some kept box with a higher score.
  std::vector<bool> is_kept(d.size(), false);
  for (auto k : kept) is_kept[k] = true;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (is_kept[i]) continue;
    bool explained = false;
    for (auto k : kept) {
      explained |= d[k].score >= d[i].score && kg::iou_bev(d[k].box, d[i].box) > 0.3;
    }
    EXPECT_TRUE(explained);
  }
}
