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

// Backbone blocks, upsampling necks and the five detection heads.
//
//   input -> block_0 -> block_1 -> ...          (each block: E x conv-BN-ReLU,
//              |          |                      first conv strided by T)
//            neck_0     neck_1   ...            (transposed conv-BN-ReLU)
//              \__________\_____ concat ----> heads (conv3x3-ReLU-conv1x1)

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "keypillar/net/layers.hpp"

namespace keypillar::net {

struct BlockSpec {
  int stride = 1;  // T
  int layers = 1;  // E
  int channels = 1;  // A
};

struct NeckSpec {
  int stride = 1;  // T
  int channels = 1;  // A
};

struct HeadSpec {
  int hidden = 32;
  int kernel = 3;
  int num_classes = 1;
};

enum HeadIndex : int { kHeatmap = 0, kOffset, kZ, kSize, kOrientation, kNumHeads };

// Output channels of each head for `num_classes` heatmap channels.
int head_channels(HeadIndex head, int num_classes);
const char* head_name(HeadIndex head);

struct NetworkSpec {
  int in_channels = 64;
  std::vector<BlockSpec> blocks;
  std::vector<NeckSpec> necks;
  HeadSpec heads;

  // B(1,7,32) + B(2,8,64), V(1,64) + V(2,64), 32-wide heads.
  static NetworkSpec kitti_car(int in_channels = 64, int num_classes = 1);
  std::string describe() const;
};

struct HeadOutputs {
  std::array<Tensor, kNumHeads> heads;
};

class Network {
 public:
  // Throws ShapeError on invalid specs or when the block/neck strides do not
  // bring every neck back to the input resolution.
  Network(const NetworkSpec& spec, std::uint64_t seed);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkSpec& spec() const { return spec_; }
  int head_input_channels() const { return concat_channels_; }

  HeadOutputs forward(const Tensor& input, bool training);
  // Gradients for each head output; returns the gradient w.r.t. the input.
  Tensor backward(const HeadOutputs& grads);

  std::vector<ParamRef> parameters();
  void zero_grad();

  Cost cost(int width, int height) const;

 private:
  NetworkSpec spec_;
  int concat_channels_ = 0;
  std::vector<Sequential> blocks_;
  std::vector<Sequential> necks_;
  std::vector<Sequential> heads_;
  std::vector<int> neck_channels_;
  std::vector<std::array<int, 4>> block_out_shapes_;
};

struct ParamMacCount {
  long long params = 0;
  long long macs = 0;
};

// Parameters and multiply-accumulates of one forward pass on a width x height
// input: conv weights (+ biases), batchnorm affine pairs; MACs are weight
// count times output positions for both convolution kinds.
ParamMacCount count_params_macs(const Network& net, int width, int height);

}  // namespace keypillar::net
