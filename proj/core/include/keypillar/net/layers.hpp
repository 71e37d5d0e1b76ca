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

// Layers with exact analytic backward passes. Every layer caches what its
// backward pass needs during the most recent forward call, so a layer
// instance serves one forward/backward pair at a time.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "keypillar/net/tensor.hpp"

namespace keypillar::net {

// A named parameter (or persistent buffer) and its gradient accumulator.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;  // null for buffers
  int fan_in = 0;          // 0 for biases, normalization affine and buffers
};

struct Cost {
  long long params = 0;
  long long macs = 0;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& input, bool training) = 0;
  // Returns the gradient with respect to the last forward input and
  // accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad_output) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    (void)prefix;
    (void)out;
  }
  // Output shape for an input shape; adds this layer's cost to `cost`.
  virtual std::array<int, 4> trace(const std::array<int, 4>& input, Cost& cost) const = 0;
};

class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding,
         bool bias = true);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::array<int, 4> trace(const std::array<int, 4>& input, Cost& cost) const override;

  Tensor weight;  // Cout x Cin x k x k
  Tensor bias;    // 1 x Cout x 1 x 1 (empty when disabled)
  Tensor weight_grad, bias_grad;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

 private:
  int in_, out_, kernel_, stride_, padding_;
  bool has_bias_;
  Tensor input_;
};

// Transposed convolution; output size (H - 1) * stride - 2 * padding + kernel
// + output_padding.
class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(int in_channels, int out_channels, int kernel, int stride,
                  int padding, int output_padding, bool bias = true);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::array<int, 4> trace(const std::array<int, 4>& input, Cost& cost) const override;

  Tensor weight;  // Cin x Cout x k x k
  Tensor bias;
  Tensor weight_grad, bias_grad;

 private:
  int in_, out_, kernel_, stride_, padding_, output_padding_;
  bool has_bias_;
  Tensor input_;
};

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-3, double momentum = 0.1);

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::array<int, 4> trace(const std::array<int, 4>& input, Cost& cost) const override;

  Tensor gamma, beta, running_mean, running_var;
  Tensor gamma_grad, beta_grad;

 private:
  int channels_;
  double eps_, momentum_;
  bool training_ = false;
  Tensor normalized_;
  std::vector<double> inv_std_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  std::array<int, 4> trace(const std::array<int, 4>& input, Cost& cost) const override;

 private:
  Tensor output_;
};

// 3x3, stride 1, padding 1 (padding never wins the max).
Tensor maxpool3x3(const Tensor& input);

class Sequential final : public Layer {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }

  Tensor forward(const Tensor& input, bool training) override;
  Tensor backward(const Tensor& grad_output) override;
  void collect(const std::string& prefix, std::vector<ParamRef>& out) override;
  std::array<int, 4> trace(const std::array<int, 4>& input, Cost& cost) const override;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace keypillar::net
