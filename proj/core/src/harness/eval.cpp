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
#include <cstdio>
#include <tuple>

#include "keypillar/harness.hpp"

namespace keypillar::harness {
namespace {

constexpr DifficultyRule kRules[] = {
    {40.0, 0, 0.15},
    {25.0, 1, 0.30},
    {25.0, 2, 0.50},
};

auto box_key(const geometry::Box3D& b) {
  return std::make_tuple(b.x, b.y, b.z, b.w, b.l, b.h, b.theta);
}

bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return box_key(a.box) < box_key(b.box);
}

enum class Outcome { kTruePositive, kFalsePositive, kIgnored };

double overlap(const geometry::Box3D& a, const geometry::Box3D& b, IouKind kind) {
  return kind == IouKind::k3D ? geometry::iou_3d(a, b) : geometry::iou_bev(a, b);
}

}  // namespace

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
    case Difficulty::kAll: return "all";
  }
  return "?";
}

const char* iou_kind_name(IouKind k) { return k == IouKind::k3D ? "3d" : "bev"; }

bool meets(const KittiObject& gt, Difficulty d) {
  if (d == Difficulty::kAll) return true;
  const DifficultyRule& r = kRules[static_cast<int>(d)];
  return gt.bbox_height() >= r.min_height_px && gt.occlusion <= r.max_occlusion &&
         gt.truncation <= r.max_truncation;
}

std::vector<double> recall_levels(Interpolation interpolation) {
  std::vector<double> r;
  if (interpolation == Interpolation::k40) {
    for (int k = 1; k <= 40; ++k) r.push_back(k / 40.0);
  } else {
    for (int k = 0; k <= 10; ++k) r.push_back(k / 10.0);
  }
  return r;
}

ApResult evaluate_ap(std::span<const std::vector<Detection>> dets,
                     std::span<const std::vector<KittiObject>> gts,
                     const EvalOptions& options) {
  ApResult result;
  result.difficulty = options.difficulty;
  result.iou_threshold = options.iou_threshold;
  result.kind = options.kind;

  std::vector<std::pair<double, bool>> scored;  // (score, is true positive)
  const std::size_t frames = std::max(dets.size(), gts.size());
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<const KittiObject*> truth;
    std::vector<bool> valid;
    if (f < gts.size()) {
      for (const KittiObject& g : gts[f]) {
        if (g.class_id != options.class_id) continue;
        truth.push_back(&g);
        valid.push_back(meets(g, options.difficulty));
        if (valid.back()) ++result.num_gt;
      }
    }
    std::vector<Detection> mine;
    if (f < dets.size()) {
      for (const Detection& d : dets[f]) {
        if (d.class_id == options.class_id) mine.push_back(d);
      }
    }
    std::sort(mine.begin(), mine.end(), detection_before);
    std::vector<bool> taken(truth.size(), false);
    for (const Detection& d : mine) {
      Outcome outcome = Outcome::kFalsePositive;
      for (bool want_valid : {true, false}) {
        int best = -1;
        double best_iou = options.iou_threshold;
        for (std::size_t j = 0; j < truth.size(); ++j) {
          if (taken[j] || valid[j] != want_valid) continue;
          const double iou = overlap(d.box, truth[j]->box, options.kind);
          if (iou >= best_iou && (best < 0 || iou > best_iou)) {
            best = static_cast<int>(j);
            best_iou = iou;
          }
        }
        if (best >= 0) {
          taken[best] = true;
          outcome = want_valid ? Outcome::kTruePositive : Outcome::kIgnored;
          break;
        }
      }
      if (outcome == Outcome::kIgnored) continue;
      scored.emplace_back(d.score, outcome == Outcome::kTruePositive);
    }
  }

  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  // Operating points, one per distinct score threshold.
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  int tp = 0, fp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    scored[i].second ? ++tp : ++fp;
    if (i + 1 < scored.size() && scored[i + 1].first == scored[i].first) continue;
    const double recall = result.num_gt > 0 ? static_cast<double>(tp) / result.num_gt : 0.0;
    points.emplace_back(recall, static_cast<double>(tp) / (tp + fp));
  }
  result.num_tp = tp;
  result.num_fp = fp;

  double sum = 0.0;
  const std::vector<double> levels = recall_levels(options.interpolation);
  for (double r : levels) {
    double p = 0.0;
    if (result.num_gt > 0) {
      for (const auto& [rec, prec] : points) {
        if (rec >= r) p = std::max(p, prec);
      }
    }
    result.curve.push_back({r, p});
    sum += p;
  }
  result.ap = sum / static_cast<double>(levels.size());
  return result;
}

std::string ap_csv(std::span<const ApResult> results, std::span<const std::string> class_names,
                   std::span<const int> class_ids) {
  std::string out = "class,difficulty,metric,iou,ap\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const ApResult& r = results[i];
    const int cls = i < class_ids.size() ? class_ids[i] : 0;
    const std::string name =
        cls >= 0 && cls < static_cast<int>(class_names.size()) ? class_names[cls] : "?";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.2f,%.6f\n", name.c_str(),
                  difficulty_name(r.difficulty), iou_kind_name(r.kind), r.iou_threshold, r.ap);
    out += buf;
  }
  return out;
}

}  // namespace keypillar::harness
