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

#include "keypillar/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "keypillar/errors.hpp"

namespace keypillar::encoder {
namespace {

// ceil(q) that ignores representation noise, so 70.4 / 0.16 gives 440.
int tolerant_ceil(double q) {
  const double nearest = std::round(q);
  if (std::abs(q - nearest) <= 1e-9 * std::max(1.0, std::abs(q))) {
    return static_cast<int>(nearest);
  }
  return static_cast<int>(std::ceil(q));
}

// Half-open cell index of `v` on a lattice starting at `origin`.
int cell_index(double v, double origin, double b) {
  int i = static_cast<int>(std::floor((v - origin) / b));
  if (origin + i * b > v) --i;
  if (origin + (i + 1) * b <= v) ++i;
  return i;
}

}  // namespace

bool GridSpec::contains_bev(double x, double y) const {
  return x >= back && x < front && y >= left && y < right;
}

bool GridSpec::contains(double x, double y, double z) const {
  return contains_bev(x, y) && z >= z_min && z < z_max;
}

GridSpec make_grid(const Range3& range, double b) {
  if (!(b > 0.0) || !std::isfinite(b)) {
    throw RangeError("pillar side length must be positive");
  }
  if (!(range.front > range.back) || !(range.right > range.left) ||
      !(range.z_max > range.z_min)) {
    throw RangeError("detection range bounds are inverted or empty");
  }
  GridSpec g;
  g.back = range.back;
  g.front = range.front;
  g.left = range.left;
  g.right = range.right;
  g.z_min = range.z_min;
  g.z_max = range.z_max;
  g.b = b;
  g.nx = tolerant_ceil((range.front - range.back) / b);
  g.ny = tolerant_ceil((range.right - range.left) / b);
  return g;
}

PillarSet pillarize(const PointCloud& cloud, const GridSpec& grid,
                    const PillarizeOptions& options) {
  struct Bucket {
    PillarCoord coord;
    std::vector<const Point*> points;
  };
  std::vector<Bucket> buckets;
  std::unordered_map<long long, int> lookup;
  for (const Point& p : cloud.points) {
    if (!grid.contains(p.x, p.y, p.z)) continue;
    const int ix = cell_index(p.x, grid.back, grid.b);
    const int iy = cell_index(p.y, grid.left, grid.b);
    if (ix < 0 || ix >= grid.nx || iy < 0 || iy >= grid.ny) continue;
    const long long key = static_cast<long long>(ix) * grid.ny + iy;
    auto [it, inserted] = lookup.try_emplace(key, static_cast<int>(buckets.size()));
    if (inserted) buckets.push_back({{ix, iy}, {}});
    auto& pts = buckets[it->second].points;
    if (static_cast<int>(pts.size()) < options.max_points) pts.push_back(&p);
  }

  std::vector<int> kept(buckets.size());
  std::iota(kept.begin(), kept.end(), 0);
  if (static_cast<int>(kept.size()) > options.max_pillars) {
    std::mt19937_64 rng(options.seed);
    // Partial Fisher-Yates, then restore first-occupancy order.
    for (int i = 0; i < options.max_pillars; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(kept.size()) - 1);
      std::swap(kept[i], kept[pick(rng)]);
    }
    kept.resize(options.max_pillars);
    std::sort(kept.begin(), kept.end());
  }

  PillarSet out;
  out.max_points = options.max_points;
  const std::size_t P = kept.size();
  out.features.assign(P * options.max_points * kPointDims, 0.0);
  out.counts.reserve(P);
  out.coords.reserve(P);
  for (std::size_t k = 0; k < P; ++k) {
    const Bucket& bucket = buckets[kept[k]];
    const auto& pts = bucket.points;
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (const Point* p : pts) {
      cx += p->x;
      cy += p->y;
      cz += p->z;
    }
    const double n = static_cast<double>(pts.size());
    cx /= n;
    cy /= n;
    cz /= n;
    const double px = grid.back + (bucket.coord.ix + 0.5) * grid.b;
    const double py = grid.left + (bucket.coord.iy + 0.5) * grid.b;
    for (std::size_t s = 0; s < pts.size(); ++s) {
      const Point& p = *pts[s];
      double* f = out.features.data() + (k * options.max_points + s) * kPointDims;
      f[0] = p.x;
      f[1] = p.y;
      f[2] = p.z;
      f[3] = p.r;
      f[4] = p.x - cx;
      f[5] = p.y - cy;
      f[6] = p.z - cz;
      f[7] = p.x - px;
      f[8] = p.y - py;
    }
    out.counts.push_back(static_cast<int>(pts.size()));
    out.coords.push_back(bucket.coord);
  }
  return out;
}

PillarSet concat_pillars(std::span<const PillarSet> sets,
                         std::vector<int>* offsets) {
  PillarSet out;
  out.max_points = 0;
  for (const PillarSet& s : sets) out.max_points = std::max(out.max_points, s.max_points);
  if (offsets) offsets->assign(1, 0);
  for (const PillarSet& s : sets) {
    for (int p = 0; p < s.size(); ++p) {
      const std::size_t base = out.features.size();
      out.features.resize(base + static_cast<std::size_t>(out.max_points) * kPointDims, 0.0);
      std::copy_n(s.features.begin() +
                      static_cast<std::ptrdiff_t>(p) * s.max_points * kPointDims,
                  static_cast<std::size_t>(s.counts[p]) * kPointDims,
                  out.features.begin() + static_cast<std::ptrdiff_t>(base));
      out.counts.push_back(s.counts[p]);
      out.coords.push_back(s.coords[p]);
    }
    if (offsets) offsets->push_back(out.size());
  }
  return out;
}

PfnOutput pfn_forward(const PillarSet& pillars, PfnParams& params,
                      bool training) {
  constexpr int D = kPointDims;
  const int F = params.out_channels;
  if (F <= 0 || params.weight.size() != static_cast<std::size_t>(F) * D ||
      params.bn.gamma.size() != static_cast<std::size_t>(F) ||
      params.bn.beta.size() != static_cast<std::size_t>(F)) {
    throw ShapeError("pillar feature weights must be shaped 9 -> F");
  }
  const int P = pillars.size();
  PfnOutput out;
  PfnCache& c = out.cache;
  c.training = training;
  c.num_pillars = P;
  c.max_points = pillars.max_points;
  c.out_channels = F;
  c.counts = pillars.counts;
  c.point_offset.assign(P + 1, 0);
  for (int p = 0; p < P; ++p) c.point_offset[p + 1] = c.point_offset[p] + pillars.counts[p];
  const int M = c.point_offset[P];

  c.inputs.resize(static_cast<std::size_t>(M) * D);
  for (int p = 0; p < P; ++p) {
    for (int s = 0; s < pillars.counts[p]; ++s) {
      const auto src = pillars.point(p, s);
      std::copy(src.begin(), src.end(),
                c.inputs.begin() + static_cast<std::ptrdiff_t>(c.point_offset[p] + s) * D);
    }
  }

  std::vector<double> linear(static_cast<std::size_t>(M) * F);
  for (int m = 0; m < M; ++m) {
    const double* x = c.inputs.data() + static_cast<std::size_t>(m) * D;
    for (int f = 0; f < F; ++f) {
      const double* w = params.weight.data() + static_cast<std::size_t>(f) * D;
      double acc = 0.0;
      for (int d = 0; d < D; ++d) acc += w[d] * x[d];
      linear[static_cast<std::size_t>(m) * F + f] = acc;
    }
  }

  BatchNormParams& bn = params.bn;
  std::vector<double> mean(F, 0.0), var(F, 0.0);
  if (training && M > 0) {
    for (int m = 0; m < M; ++m)
      for (int f = 0; f < F; ++f) mean[f] += linear[static_cast<std::size_t>(m) * F + f];
    for (int f = 0; f < F; ++f) mean[f] /= M;
    for (int m = 0; m < M; ++m)
      for (int f = 0; f < F; ++f) {
        const double d = linear[static_cast<std::size_t>(m) * F + f] - mean[f];
        var[f] += d * d;
      }
    for (int f = 0; f < F; ++f) var[f] /= M;
    const double unbias = M > 1 ? static_cast<double>(M) / (M - 1) : 1.0;
    for (int f = 0; f < F; ++f) {
      bn.running_mean[f] = (1.0 - bn.momentum) * bn.running_mean[f] + bn.momentum * mean[f];
      bn.running_var[f] =
          (1.0 - bn.momentum) * bn.running_var[f] + bn.momentum * var[f] * unbias;
    }
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }
  c.inv_std.resize(F);
  for (int f = 0; f < F; ++f) c.inv_std[f] = 1.0 / std::sqrt(var[f] + bn.eps);

  c.normalized.resize(static_cast<std::size_t>(M) * F);
  c.activated.resize(static_cast<std::size_t>(M) * F);
  for (int m = 0; m < M; ++m) {
    for (int f = 0; f < F; ++f) {
      const std::size_t i = static_cast<std::size_t>(m) * F + f;
      const double xhat = (linear[i] - mean[f]) * c.inv_std[f];
      c.normalized[i] = xhat;
      c.activated[i] = std::max(0.0, bn.gamma[f] * xhat + bn.beta[f]);
    }
  }

  out.features.assign(static_cast<std::size_t>(F) * P, 0.0);
  c.argmax.assign(static_cast<std::size_t>(F) * P, -1);
  for (int p = 0; p < P; ++p) {
    for (int f = 0; f < F; ++f) {
      double best = -std::numeric_limits<double>::infinity();
      int best_m = -1;
      for (int m = c.point_offset[p]; m < c.point_offset[p + 1]; ++m) {
        const double v = c.activated[static_cast<std::size_t>(m) * F + f];
        if (v > best) {
          best = v;
          best_m = m;
        }
      }
      out.features[static_cast<std::size_t>(f) * P + p] = best_m >= 0 ? best : 0.0;
      c.argmax[static_cast<std::size_t>(f) * P + p] = best_m;
    }
  }
  return out;
}

PfnGrads pfn_backward(const PfnCache& c, const PfnParams& params,
                      std::span<const double> upstream) {
  constexpr int D = kPointDims;
  const int F = c.out_channels;
  const int P = c.num_pillars;
  const int M = c.point_offset.empty() ? 0 : c.point_offset[P];
  if (upstream.size() != static_cast<std::size_t>(F) * P) {
    throw ShapeError("pillar feature upstream gradient must be F x P");
  }
  PfnGrads g;
  g.weight.assign(static_cast<std::size_t>(F) * D, 0.0);
  g.gamma.assign(F, 0.0);
  g.beta.assign(F, 0.0);
  g.inputs.assign(static_cast<std::size_t>(P) * c.max_points * D, 0.0);
  if (M == 0) return g;

  // Max routes to the argmax point; rectifier masks it.
  std::vector<double> d_act(static_cast<std::size_t>(M) * F, 0.0);
  for (int f = 0; f < F; ++f) {
    for (int p = 0; p < P; ++p) {
      const int m = c.argmax[static_cast<std::size_t>(f) * P + p];
      if (m >= 0) d_act[static_cast<std::size_t>(m) * F + f] += upstream[static_cast<std::size_t>(f) * P + p];
    }
  }
  std::vector<double> d_xhat(static_cast<std::size_t>(M) * F);
  for (int m = 0; m < M; ++m) {
    for (int f = 0; f < F; ++f) {
      const std::size_t i = static_cast<std::size_t>(m) * F + f;
      const double d = c.activated[i] > 0.0 ? d_act[i] : 0.0;
      g.gamma[f] += d * c.normalized[i];
      g.beta[f] += d;
      d_xhat[i] = d * params.bn.gamma[f];
    }
  }

  std::vector<double> d_lin(static_cast<std::size_t>(M) * F);
  if (c.training) {
    std::vector<double> sum_d(F, 0.0), sum_dx(F, 0.0);
    for (int m = 0; m < M; ++m)
      for (int f = 0; f < F; ++f) {
        const std::size_t i = static_cast<std::size_t>(m) * F + f;
        sum_d[f] += d_xhat[i];
        sum_dx[f] += d_xhat[i] * c.normalized[i];
      }
    for (int m = 0; m < M; ++m)
      for (int f = 0; f < F; ++f) {
        const std::size_t i = static_cast<std::size_t>(m) * F + f;
        d_lin[i] = c.inv_std[f] / M *
                   (M * d_xhat[i] - sum_d[f] - c.normalized[i] * sum_dx[f]);
      }
  } else {
    for (int m = 0; m < M; ++m)
      for (int f = 0; f < F; ++f) {
        const std::size_t i = static_cast<std::size_t>(m) * F + f;
        d_lin[i] = d_xhat[i] * c.inv_std[f];
      }
  }

  for (int p = 0; p < P; ++p) {
    for (int m = c.point_offset[p]; m < c.point_offset[p + 1]; ++m) {
      const int slot = m - c.point_offset[p];
      const double* x = c.inputs.data() + static_cast<std::size_t>(m) * D;
      double* dx = g.inputs.data() +
                   (static_cast<std::size_t>(p) * c.max_points + slot) * D;
      for (int f = 0; f < F; ++f) {
        const double dl = d_lin[static_cast<std::size_t>(m) * F + f];
        if (dl == 0.0) continue;
        const double* w = params.weight.data() + static_cast<std::size_t>(f) * D;
        double* dw = g.weight.data() + static_cast<std::size_t>(f) * D;
        for (int d = 0; d < D; ++d) {
          dw[d] += dl * x[d];
          dx[d] += dl * w[d];
        }
      }
    }
  }
  return g;
}

PseudoImage scatter(std::span<const double> features, int channels,
                    std::span<const PillarCoord> coords, const GridSpec& grid) {
  const std::size_t P = coords.size();
  if (features.size() != static_cast<std::size_t>(channels) * P) {
    throw ShapeError("scatter expects F x P features");
  }
  PseudoImage img;
  img.nx = grid.nx;
  img.ny = grid.ny;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(channels) * grid.nx * grid.ny, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    const PillarCoord& c = coords[p];
    if (c.ix < 0 || c.ix >= grid.nx || c.iy < 0 || c.iy >= grid.ny) {
      throw RangeError("scatter coordinate outside the lattice");
    }
    for (int f = 0; f < channels; ++f) {
      img.data[(static_cast<std::size_t>(f) * grid.nx + c.ix) * grid.ny + c.iy] =
          features[static_cast<std::size_t>(f) * P + p];
    }
  }
  return img;
}

std::vector<double> gather(const PseudoImage& image,
                           std::span<const PillarCoord> coords) {
  const std::size_t P = coords.size();
  std::vector<double> out(static_cast<std::size_t>(image.channels) * P);
  for (std::size_t p = 0; p < P; ++p) {
    const PillarCoord& c = coords[p];
    if (c.ix < 0 || c.ix >= image.nx || c.iy < 0 || c.iy >= image.ny) {
      throw RangeError("gather coordinate outside the lattice");
    }
    for (int f = 0; f < image.channels; ++f) {
      out[static_cast<std::size_t>(f) * P + p] = image.at(c.ix, c.iy, f);
    }
  }
  return out;
}

}  // namespace keypillar::encoder
