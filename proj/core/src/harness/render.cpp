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
#include <fstream>
#include <string>

#include "keypillar/errors.hpp"
#include "keypillar/harness.hpp"

namespace keypillar::harness {

std::vector<std::uint8_t> render_heatmap(const targets::DenseMap& heatmap,
                                         const targets::GridSpec& grid,
                                         std::span<const Detection> detections) {
  const int w = heatmap.nx, h = heatmap.ny;
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t base = out.size();
  out.resize(base + static_cast<std::size_t>(w) * h * 3, 0);
  const auto pixel = [&](int ix, int iy) { return base + (static_cast<std::size_t>(iy) * w + ix) * 3; };
  for (int ix = 0; ix < w; ++ix) {
    for (int iy = 0; iy < h; ++iy) {
      double v = 0.0;
      for (int c = 0; c < heatmap.channels; ++c) v = std::max(v, heatmap.at(c, ix, iy));
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(pixel(ix, iy)), 3, g);
    }
  }
  for (const Detection& d : detections) {
    const int ix = static_cast<int>(std::floor((d.box.x - grid.back) / grid.b));
    const int iy = static_cast<int>(std::floor((d.box.y - grid.left) / grid.b));
    if (ix < 0 || iy < 0 || ix >= w || iy >= h) continue;
    const std::size_t p = pixel(ix, iy);
    out[p] = 255;
    out[p + 1] = 0;
    out[p + 2] = 0;
  }
  return out;
}

void write_heatmap(const std::filesystem::path& path, const targets::DenseMap& heatmap,
                   const targets::GridSpec& grid, std::span<const Detection> detections) {
  const auto bytes = render_heatmap(heatmap, grid, detections);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing image " + path.string());
}

}  // namespace keypillar::harness
