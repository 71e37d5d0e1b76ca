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
#include <cmath>
#include <numeric>
#include <random>

#include "keypillar/pipeline.hpp"

namespace keypillar::pipeline {
namespace {

using geometry::Box3D;

bool collides(const Box3D& box, const std::vector<data::KittiObject>& objects,
              std::size_t skip) {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i != skip && geometry::iou_bev(box, objects[i].box) > 0.0) return true;
  }
  return false;
}

void sample_ground_truth(Frame& f, const GtDatabase& db, int per_class, std::mt19937_64& rng) {
  for (const auto& [cls, pool] : db.entries) {
    if (pool.empty()) continue;
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min<std::size_t>(per_class, pool.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    for (std::size_t i = 0; i < take; ++i) {
      const data::GtEntry& e = pool[order[i]];
      if (collides(e.box, f.objects, f.objects.size())) continue;
      std::erase_if(f.cloud.points, [&](const encoder::Point& p) {
        return geometry::point_in_box(e.box, p.x, p.y, p.z);
      });
      f.cloud.points.insert(f.cloud.points.end(), e.points.begin(), e.points.end());
      data::KittiObject obj;
      obj.type = "sampled";
      obj.class_id = e.class_id;
      obj.box = e.box;
      f.objects.push_back(obj);
    }
  }
}

void perturb_boxes(Frame& f, const AugmentSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rot(-spec.box_rotation, spec.box_rotation);
  std::normal_distribution<double> shift(0.0, std::max(spec.box_translation_std, 1e-300));
  for (std::size_t k = 0; k < f.objects.size(); ++k) {
    const Box3D old = f.objects[k].box;
    // Draw unconditionally so the stream does not depend on collisions.
    const double dth = rot(rng);
    const double dx = shift(rng), dy = shift(rng), dz = shift(rng);
    const Box3D moved(old.x + dx, old.y + dy, old.z + dz, old.w, old.l, old.h, old.theta + dth);
    if (collides(moved, f.objects, k)) continue;
    const double c = std::cos(dth), s = std::sin(dth);
    for (encoder::Point& p : f.cloud.points) {
      if (!geometry::point_in_box(old, p.x, p.y, p.z)) continue;
      const double u = p.x - old.x, v = p.y - old.y;
      p.x = old.x + c * u - s * v + dx;
      p.y = old.y + s * u + c * v + dy;
      p.z += dz;
    }
    f.objects[k].box = moved;
  }
}

}  // namespace

void rotate_frame(Frame& f, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  for (encoder::Point& p : f.cloud.points) {
    const double x = c * p.x - s * p.y, y = s * p.x + c * p.y;
    p.x = x;
    p.y = y;
  }
  for (data::KittiObject& o : f.objects) {
    const Box3D& b = o.box;
    o.box = Box3D(c * b.x - s * b.y, s * b.x + c * b.y, b.z, b.w, b.l, b.h, b.theta + angle);
  }
}

void flip_frame(Frame& f) {
  for (encoder::Point& p : f.cloud.points) p.y = -p.y;
  for (data::KittiObject& o : f.objects) {
    const Box3D& b = o.box;
    o.box = Box3D(b.x, -b.y, b.z, b.w, b.l, b.h, -b.theta);
  }
}

void scale_frame(Frame& f, double k) {
  for (encoder::Point& p : f.cloud.points) {
    p.x *= k;
    p.y *= k;
    p.z *= k;
  }
  for (data::KittiObject& o : f.objects) {
    const Box3D& b = o.box;
    o.box = Box3D(b.x * k, b.y * k, b.z * k, b.w * k, b.l * k, b.h * k, b.theta);
  }
}

Frame augment(const Frame& frame, const GtDatabase& db, const AugmentSpec& spec,
              std::uint64_t seed) {
  Frame f = frame;
  std::mt19937_64 rng(seed);
  if (spec.gt_sampling && spec.gt_samples_per_frame > 0) {
    sample_ground_truth(f, db, spec.gt_samples_per_frame, rng);
  }
  if (spec.box_noise) perturb_boxes(f, spec, rng);
  if (spec.flip) {
    std::bernoulli_distribution coin(spec.flip_probability);
    if (coin(rng)) flip_frame(f);
  }
  if (spec.global_rotation) {
    std::uniform_real_distribution<double> rot(-spec.global_rotation_max,
                                               spec.global_rotation_max);
    rotate_frame(f, rot(rng));
  }
  if (spec.global_scale) {
    std::uniform_real_distribution<double> scale(spec.scale_min, spec.scale_max);
    scale_frame(f, scale(rng));
  }
  return f;
}

}  // namespace keypillar::pipeline
