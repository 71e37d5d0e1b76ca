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

#include "keypillar/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "keypillar/errors.hpp"

namespace keypillar::targets {
namespace {

using geometry::kPi;

constexpr double kMinDecodedExtent = 1e-3;

void check_class(int class_id, int num_classes) {
  if (class_id < 0 || class_id >= num_classes) {
    throw RangeError("class id outside [0, num_classes)");
  }
}

// Squared distance from the center of pixel (ix, iy) to keypoint p.
double center_distance2(const Keypoint& kp, int ix, int iy) {
  const double dx = ix + 0.5 - kp.px;
  const double dy = iy + 0.5 - kp.py;
  return dx * dx + dy * dy;
}

bool in_bin(double theta, int bin) {
  // theta is canonical; test it and its 2pi-aliases that fall in
  // [-7pi/6, 7pi/6].
  for (double t : {theta, theta - 2.0 * kPi, theta + 2.0 * kPi}) {
    if (t >= kBinLow[bin] && t <= kBinHigh[bin]) return true;
  }
  return false;
}

}  // namespace

Keypoint encode_keypoint(const Box3D& box, const GridSpec& grid) {
  if (!grid.contains_bev(box.x, box.y)) {
    throw RangeError("box center outside the detection range");
  }
  Keypoint kp;
  kp.px = (box.x - grid.back) / grid.b;
  kp.py = (box.y - grid.left) / grid.b;
  kp.ix = std::clamp(static_cast<int>(std::floor(kp.px)), 0, grid.nx - 1);
  kp.iy = std::clamp(static_cast<int>(std::floor(kp.py)), 0, grid.ny - 1);
  return kp;
}

double carshape_value(double d) {
  if (d == 0.0) return 1.0;
  if (d == 1.0) return 0.8;
  return 1.0 / d;
}

DenseMap encode_heatmap_carshape(std::span<const LabeledBox> boxes,
                                 const GridSpec& grid, int num_classes) {
  DenseMap m(num_classes, grid.nx, grid.ny);
  for (const LabeledBox& lb : boxes) {
    check_class(lb.class_id, num_classes);
    if (!grid.contains_bev(lb.box.x, lb.box.y)) continue;
    const Keypoint kp = encode_keypoint(lb.box, grid);
    const double reach = 0.5 * std::hypot(lb.box.w, lb.box.l) / grid.b + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(kp.px - reach)));
    const int x1 = std::min(grid.nx - 1, static_cast<int>(std::ceil(kp.px + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(kp.py - reach)));
    const int y1 = std::min(grid.ny - 1, static_cast<int>(std::ceil(kp.py + reach)));
    for (int ix = x0; ix <= x1; ++ix) {
      for (int iy = y0; iy <= y1; ++iy) {
        const bool center = ix == kp.ix && iy == kp.iy;
        const double cx = grid.back + (ix + 0.5) * grid.b;
        const double cy = grid.left + (iy + 0.5) * grid.b;
        if (!center && !geometry::point_in_footprint(lb.box, cx, cy)) continue;
        const double d = std::hypot(static_cast<double>(ix - kp.ix),
                                    static_cast<double>(iy - kp.iy));
        double& v = m.at(lb.class_id, ix, iy);
        v = std::max(v, carshape_value(d));
      }
    }
  }
  return m;
}

double gaussian_radius(double length_px, double width_px, double min_overlap) {
  const double h = length_px, w = width_px, mo = min_overlap;
  const double b1 = h + w;
  const double c1 = w * h * (1 - mo) / (1 + mo);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4 * c1)) / 2;
  const double b2 = 2 * (h + w);
  const double c2 = (1 - mo) * w * h;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 16 * c2)) / 2;
  const double a3 = 4 * mo;
  const double b3 = -2 * mo * (h + w);
  const double c3 = (mo - 1) * w * h;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4 * a3 * c3)) / 2;
  return std::min({r1, r2, r3});
}

double gaussian_value(double dx, double dy, double sigma) {
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

DenseMap encode_heatmap_gaussian(std::span<const LabeledBox> boxes,
                                 const GridSpec& grid, int num_classes,
                                 double min_overlap) {
  DenseMap m(num_classes, grid.nx, grid.ny);
  for (const LabeledBox& lb : boxes) {
    check_class(lb.class_id, num_classes);
    if (!grid.contains_bev(lb.box.x, lb.box.y)) continue;
    const Keypoint kp = encode_keypoint(lb.box, grid);
    const int radius = std::max(
        0, static_cast<int>(gaussian_radius(lb.box.l / grid.b, lb.box.w / grid.b,
                                            min_overlap)));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    for (int dx = -radius; dx <= radius; ++dx) {
      for (int dy = -radius; dy <= radius; ++dy) {
        const int ix = kp.ix + dx, iy = kp.iy + dy;
        if (ix < 0 || ix >= grid.nx || iy < 0 || iy >= grid.ny) continue;
        double& v = m.at(lb.class_id, ix, iy);
        v = std::max(v, gaussian_value(dx, dy, sigma));
      }
    }
  }
  return m;
}

OffsetTarget encode_offset(std::span<const LabeledBox> boxes,
                           const GridSpec& grid, int radius) {
  if (radius < 0) throw RangeError("offset radius must be non-negative");
  OffsetTarget t{DenseMap(2, grid.nx, grid.ny),
                 std::vector<std::uint8_t>(static_cast<std::size_t>(grid.nx) * grid.ny, 0)};
  std::vector<double> owner_d2(t.mask.size(), std::numeric_limits<double>::infinity());
  for (const LabeledBox& lb : boxes) {
    if (!grid.contains_bev(lb.box.x, lb.box.y)) continue;
    const Keypoint kp = encode_keypoint(lb.box, grid);
    for (int dx = -radius; dx <= radius; ++dx) {
      for (int dy = -radius; dy <= radius; ++dy) {
        const int ix = kp.ix + dx, iy = kp.iy + dy;
        if (ix < 0 || ix >= grid.nx || iy < 0 || iy >= grid.ny) continue;
        const std::size_t pix = static_cast<std::size_t>(ix) * grid.ny + iy;
        const double d2 = center_distance2(kp, ix, iy);
        if (d2 >= owner_d2[pix]) continue;
        owner_d2[pix] = d2;
        t.mask[pix] = 1;
        t.offset.at(0, ix, iy) = grid.b * (kp.px - ix - 0.5);
        t.offset.at(1, ix, iy) = grid.b * (kp.py - iy - 0.5);
      }
    }
  }
  return t;
}

OrientationTarget encode_orientation(double theta) {
  const double t = geometry::canonical_angle(theta);
  OrientationTarget o;
  for (int i = 0; i < 2; ++i) {
    o.eta[i] = in_bin(t, i) ? 1 : 0;
    o.nu[i] = {std::sin(t - kBinCenters[i]), std::cos(t - kBinCenters[i])};
  }
  return o;
}

double decode_orientation(const std::array<std::array<double, 2>, 2>& mu_hat,
                          const std::array<std::array<double, 2>, 2>& nu_hat) {
  // In-bin softmax probability is monotone in the logit difference.
  const double s0 = mu_hat[0][1] - mu_hat[0][0];
  const double s1 = mu_hat[1][1] - mu_hat[1][0];
  const int j = s1 > s0 ? 1 : 0;
  return geometry::canonical_angle(std::atan2(nu_hat[j][0], nu_hat[j][1]) +
                                   kBinCenters[j]);
}

RegressionTargets encode_regression(std::span<const LabeledBox> boxes,
                                    const GridSpec& grid) {
  RegressionTargets r{DenseMap(1, grid.nx, grid.ny), DenseMap(3, grid.nx, grid.ny),
                      std::vector<std::uint8_t>(static_cast<std::size_t>(grid.nx) * grid.ny, 0),
                      {}};
  std::vector<int> owner(r.center_mask.size(), -1);
  for (const LabeledBox& lb : boxes) {
    if (!grid.contains_bev(lb.box.x, lb.box.y)) continue;
    ObjectTarget obj;
    obj.keypoint = encode_keypoint(lb.box, grid);
    obj.class_id = lb.class_id;
    obj.z = lb.box.z;
    obj.size = {lb.box.w, lb.box.l, lb.box.h};
    obj.orientation = encode_orientation(lb.box.theta);
    const std::size_t pix =
        static_cast<std::size_t>(obj.keypoint.ix) * grid.ny + obj.keypoint.iy;
    const int k = static_cast<int>(r.objects.size());
    if (owner[pix] >= 0) {
      ObjectTarget& prev = r.objects[owner[pix]];
      const double d_prev = center_distance2(prev.keypoint, obj.keypoint.ix, obj.keypoint.iy);
      const double d_new = center_distance2(obj.keypoint, obj.keypoint.ix, obj.keypoint.iy);
      if (d_new < d_prev) {
        prev.owns_center = false;
        owner[pix] = k;
      } else {
        obj.owns_center = false;
      }
    } else {
      owner[pix] = k;
    }
    r.objects.push_back(obj);
  }
  for (const ObjectTarget& obj : r.objects) {
    if (!obj.owns_center) continue;
    const int ix = obj.keypoint.ix, iy = obj.keypoint.iy;
    r.center_mask[static_cast<std::size_t>(ix) * grid.ny + iy] = 1;
    r.z.at(0, ix, iy) = obj.z;
    for (int c = 0; c < 3; ++c) r.size.at(c, ix, iy) = obj.size[c];
  }
  return r;
}

HeadTargets encode_targets(std::span<const LabeledBox> boxes,
                           const GridSpec& grid, const TargetOptions& options) {
  HeadTargets t;
  t.heatmap = options.heatmap_mode == HeatmapMode::kCarShape
                  ? encode_heatmap_carshape(boxes, grid, options.num_classes)
                  : encode_heatmap_gaussian(boxes, grid, options.num_classes,
                                            options.gaussian_min_overlap);
  t.offset = encode_offset(boxes, grid, options.offset_radius);
  RegressionTargets r = encode_regression(boxes, grid);
  t.z = std::move(r.z);
  t.size = std::move(r.size);
  t.center_mask = std::move(r.center_mask);
  t.objects = std::move(r.objects);
  return t;
}

DenseMap max_pool3x3(const DenseMap& map) {
  const int nx = map.nx, ny = map.ny;
  DenseMap rows(map.channels, nx, ny);
  DenseMap out(map.channels, nx, ny);
  for (int c = 0; c < map.channels; ++c) {
    const double* src = map.data.data() + map.index(c, 0, 0);
    double* tmp = rows.data.data() + rows.index(c, 0, 0);
    double* dst = out.data.data() + out.index(c, 0, 0);
    // Separable: max along iy, then along ix.
    for (int ix = 0; ix < nx; ++ix) {
      const double* s = src + static_cast<std::size_t>(ix) * ny;
      double* t = tmp + static_cast<std::size_t>(ix) * ny;
      for (int iy = 0; iy < ny; ++iy) {
        double v = s[iy];
        if (iy > 0) v = std::max(v, s[iy - 1]);
        if (iy + 1 < ny) v = std::max(v, s[iy + 1]);
        t[iy] = v;
      }
    }
    for (int ix = 0; ix < nx; ++ix) {
      const double* mid = tmp + static_cast<std::size_t>(ix) * ny;
      const double* up = ix > 0 ? mid - ny : nullptr;
      const double* down = ix + 1 < nx ? mid + ny : nullptr;
      double* d = dst + static_cast<std::size_t>(ix) * ny;
      for (int iy = 0; iy < ny; ++iy) {
        double v = mid[iy];
        if (up) v = std::max(v, up[iy]);
        if (down) v = std::max(v, down[iy]);
        d[iy] = v;
      }
    }
  }
  return out;
}

std::vector<Peak> extract_peaks(const DenseMap& heatmap, int max_objects,
                                double score_threshold) {
  const DenseMap pooled = max_pool3x3(heatmap);
  std::vector<Peak> peaks;
  for (int c = 0; c < heatmap.channels; ++c) {
    for (int ix = 0; ix < heatmap.nx; ++ix) {
      const std::size_t row = heatmap.index(c, ix, 0);
      for (int iy = 0; iy < heatmap.ny; ++iy) {
        const double v = heatmap.data[row + iy];
        if (v >= score_threshold && v == pooled.data[row + iy]) {
          peaks.push_back({c, ix, iy, v});
        }
      }
    }
  }
  // Collected in (channel, row, column) order, so a stable sort on score
  // leaves that as the tie-break.
  const auto by_score = [](const Peak& a, const Peak& b) { return a.score > b.score; };
  const std::size_t k = std::min<std::size_t>(peaks.size(), std::max(0, max_objects));
  if (k < peaks.size()) {
    std::nth_element(peaks.begin(), peaks.begin() + static_cast<std::ptrdiff_t>(k),
                     peaks.end(), [&](const Peak& a, const Peak& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return std::tie(a.class_id, a.ix, a.iy) <
                              std::tie(b.class_id, b.ix, b.iy);
                     });
    peaks.resize(k);
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
      if (a.score != b.score) return a.score > b.score;
      return std::tie(a.class_id, a.ix, a.iy) < std::tie(b.class_id, b.ix, b.iy);
    });
  } else {
    std::stable_sort(peaks.begin(), peaks.end(), by_score);
  }
  return peaks;
}

std::vector<Detection> decode_boxes(std::span<const Peak> peaks,
                                    const HeadMaps& maps, const GridSpec& grid) {
  std::vector<Detection> dets;
  dets.reserve(peaks.size());
  for (const Peak& pk : peaks) {
    if (pk.ix < 0 || pk.ix >= grid.nx || pk.iy < 0 || pk.iy >= grid.ny) {
      throw RangeError("peak outside the lattice");
    }
    const int ix = pk.ix, iy = pk.iy;
    const double x = grid.back + grid.b * (ix + 0.5) + maps.offset.at(0, ix, iy);
    const double y = grid.left + grid.b * (iy + 0.5) + maps.offset.at(1, ix, iy);
    std::array<std::array<double, 2>, 2> mu{}, nu{};
    for (int bin = 0; bin < 2; ++bin) {
      for (int k = 0; k < 2; ++k) {
        mu[bin][k] = maps.orientation.at(logit_channel(bin, k), ix, iy);
        nu[bin][k] = maps.orientation.at(residual_channel(bin, k), ix, iy);
      }
    }
    const double w = std::max(kMinDecodedExtent, maps.size.at(0, ix, iy));
    const double l = std::max(kMinDecodedExtent, maps.size.at(1, ix, iy));
    const double h = std::max(kMinDecodedExtent, maps.size.at(2, ix, iy));
    Detection d;
    d.box = Box3D(x, y, maps.z.at(0, ix, iy), w, l, h, decode_orientation(mu, nu));
    d.score = std::clamp(pk.score, 0.0, 1.0);
    d.class_id = pk.class_id;
    dets.push_back(d);
  }
  return dets;
}

HeadMaps perfect_predictions(const HeadTargets& t, double logit_margin) {
  const int nx = t.heatmap.nx, ny = t.heatmap.ny;
  HeadMaps m;
  m.heatmap = t.heatmap;
  m.offset = t.offset.offset;
  m.z = t.z;
  m.size = t.size;
  m.orientation = DenseMap(kOrientationChannels, nx, ny);
  for (const ObjectTarget& obj : t.objects) {
    if (!obj.owns_center) continue;
    const int ix = obj.keypoint.ix, iy = obj.keypoint.iy;
    for (int bin = 0; bin < 2; ++bin) {
      const int label = obj.orientation.eta[bin];
      m.orientation.at(logit_channel(bin, label), ix, iy) = logit_margin;
      m.orientation.at(logit_channel(bin, 1 - label), ix, iy) = 0.0;
      for (int k = 0; k < 2; ++k) {
        m.orientation.at(residual_channel(bin, k), ix, iy) = obj.orientation.nu[bin][k];
      }
    }
  }
  return m;
}

}  // namespace keypillar::targets
