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

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace keypillar::net {

// Dense NCHW tensor of doubles.
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w)
      : shape{n, c, h, w}, data(static_cast<std::size_t>(n) * c * h * w, 0.0) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape[2]) * shape[3]; }

  std::size_t index(int n_, int c_, int h_, int w_) const {
    return ((static_cast<std::size_t>(n_) * shape[1] + c_) * shape[2] + h_) * shape[3] + w_;
  }
  double& at(int n_, int c_, int h_, int w_) { return data[index(n_, c_, h_, w_)]; }
  double at(int n_, int c_, int h_, int w_) const { return data[index(n_, c_, h_, w_)]; }

  double* sample(int n_) { return data.data() + static_cast<std::size_t>(n_) * shape[1] * plane(); }
  const double* sample(int n_) const {
    return data.data() + static_cast<std::size_t>(n_) * shape[1] * plane();
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_string(const std::array<int, 4>& shape);

}  // namespace keypillar::net
