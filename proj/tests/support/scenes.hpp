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

// Random evaluation scenes shared by the unit and acceptance suites.

#pragma once

#include <random>
#include <vector>

#include "keypillar/data_io.hpp"
#include "keypillar/geometry.hpp"

namespace oracle {

struct EvalScene {
  std::vector<std::vector<keypillar::geometry::Detection>> dets;
  std::vector<std::vector<keypillar::data::KittiObject>> gts;
};

// Ground truths with mixed difficulty attributes and classes; detections are
// jittered copies of some of them plus clutter. Scores sit on a coarse grid so
// ties occur.
inline EvalScene random_eval_scene(std::mt19937_64& rng) {
  using keypillar::geometry::Box3D;
  std::uniform_real_distribution<double> u(0.0, 1.0), pos(0.0, 30.0), ang(-3.14, 3.14);
  std::uniform_int_distribution<int> frames(1, 4), count(0, 5), occl(0, 3), score(1, 20);
  EvalScene s;
  const int nf = frames(rng);
  for (int f = 0; f < nf; ++f) {
    std::vector<keypillar::data::KittiObject> gt;
    std::vector<keypillar::geometry::Detection> det;
    const int ng = count(rng);
    for (int i = 0; i < ng; ++i) {
      keypillar::data::KittiObject o;
      o.class_id = u(rng) < 0.85 ? 0 : 1;
      o.box = Box3D(pos(rng), pos(rng) - 15, -1.0, 1.6, 4.0, 1.5, ang(rng));
      const double top = 100.0;
      o.bbox = {0.0, top, 10.0, top + 15.0 + 40.0 * u(rng)};
      o.occlusion = occl(rng);
      o.truncation = 0.6 * u(rng);
      gt.push_back(o);
      const int copies = u(rng) < 0.7 ? 1 : (u(rng) < 0.5 ? 0 : 2);
      for (int c = 0; c < copies; ++c) {
        Box3D b = o.box;
        b.x += 0.6 * (u(rng) - 0.5);
        b.y += 0.6 * (u(rng) - 0.5);
        b.z += 0.4 * (u(rng) - 0.5);
        b.theta = keypillar::geometry::canonical_angle(b.theta + 0.3 * (u(rng) - 0.5));
        det.push_back({b, 0.05 * score(rng), o.class_id});
      }
    }
    const int clutter = count(rng);
    for (int i = 0; i < clutter; ++i) {
      det.push_back({Box3D(pos(rng), pos(rng) - 15, -1.0, 1.6, 4.0, 1.5, ang(rng)),
                     0.05 * score(rng), u(rng) < 0.85 ? 0 : 1});
    }
    s.gts.push_back(std::move(gt));
    s.dets.push_back(std::move(det));
  }
  return s;
}

}  // namespace oracle
