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

#include "keypillar/net/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "keypillar/errors.hpp"

namespace keypillar::net {
namespace {

// Initial heatmap bias: sigmoid(-2.19) ~ 0.1.
constexpr double kHeatmapPriorBias = -2.19;

bool power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

void add_conv_bn_relu(Sequential& seq, int in, int out, int stride) {
  seq.add(std::make_unique<Conv2d>(in, out, 3, stride, 1));
  seq.add(std::make_unique<BatchNorm2d>(out));
  seq.add(std::make_unique<ReLU>());
}

}  // namespace

int head_channels(HeadIndex head, int num_classes) {
  switch (head) {
    case kHeatmap: return num_classes;
    case kOffset: return 2;
    case kZ: return 1;
    case kSize: return 3;
    case kOrientation: return 8;
    default: break;
  }
  throw ShapeError("unknown head");
}

const char* head_name(HeadIndex head) {
  static const char* names[] = {"heatmap", "offset", "z", "size", "orientation"};
  return names[head];
}

NetworkSpec NetworkSpec::kitti_car(int in_channels, int num_classes) {
  NetworkSpec s;
  s.in_channels = in_channels;
  s.blocks = {{1, 7, 32}, {2, 8, 64}};
  s.necks = {{1, 64}, {2, 64}};
  s.heads = {32, 3, num_classes};
  return s;
}

std::string NetworkSpec::describe() const {
  std::ostringstream out;
  out << "in=" << in_channels;
  for (const BlockSpec& b : blocks) out << " B(" << b.stride << "," << b.layers << "," << b.channels << ")";
  for (const NeckSpec& v : necks) out << " V(" << v.stride << "," << v.channels << ")";
  out << " H(" << heads.hidden << "," << heads.kernel << "," << heads.num_classes << ")";
  return out.str();
}

Network::Network(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
  if (spec.in_channels < 1) throw ShapeError("network input channels must be >= 1");
  if (spec.blocks.size() != spec.necks.size()) {
    throw ShapeError("every block needs exactly one upsampling neck");
  }
  if (spec.heads.hidden < 1 || spec.heads.num_classes < 1 || spec.heads.kernel < 1 ||
      spec.heads.kernel % 2 == 0) {
    throw ShapeError("invalid head spec");
  }
  int channels = spec.in_channels;
  int cumulative = 1;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const BlockSpec& b = spec.blocks[i];
    const NeckSpec& v = spec.necks[i];
    if (b.stride < 1 || b.stride > 2 || b.layers < 1 || b.channels < 1) {
      throw ShapeError("block spec requires T in {1,2}, E >= 1, A >= 1");
    }
    if (!power_of_two(v.stride) || v.channels < 1) {
      throw ShapeError("neck spec requires a power-of-two stride and A >= 1");
    }
    cumulative *= b.stride;
    if (cumulative != v.stride) {
      std::ostringstream msg;
      msg << "neck " << i << " upsamples by " << v.stride << " but block " << i
          << " output is downsampled by " << cumulative
          << "; neck outputs must match the input resolution";
      throw ShapeError(msg.str());
    }
    Sequential block;
    add_conv_bn_relu(block, channels, b.channels, b.stride);
    for (int e = 1; e < b.layers; ++e) add_conv_bn_relu(block, b.channels, b.channels, 1);
    blocks_.push_back(std::move(block));

    Sequential neck;
    neck.add(std::make_unique<ConvTranspose2d>(b.channels, v.channels, 3, v.stride, 1,
                                               v.stride - 1));
    neck.add(std::make_unique<BatchNorm2d>(v.channels));
    neck.add(std::make_unique<ReLU>());
    necks_.push_back(std::move(neck));
    neck_channels_.push_back(v.channels);
    concat_channels_ += v.channels;
    channels = b.channels;
  }
  if (concat_channels_ == 0) concat_channels_ = spec.in_channels;

  for (int h = 0; h < kNumHeads; ++h) {
    Sequential head;
    const int k = spec.heads.kernel;
    head.add(std::make_unique<Conv2d>(concat_channels_, spec.heads.hidden, k, 1, k / 2));
    head.add(std::make_unique<ReLU>());
    head.add(std::make_unique<Conv2d>(spec.heads.hidden,
                                      head_channels(static_cast<HeadIndex>(h), spec.heads.num_classes),
                                      1, 1, 0));
    heads_.push_back(std::move(head));
  }

  // He fan-in initialization, drawn in parameter order.
  std::mt19937_64 rng(seed);
  for (ParamRef& p : parameters()) {
    if (p.fan_in <= 0) continue;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / p.fan_in));
    for (double& v : p.value->data) v = dist(rng);
  }
  auto& heat_out = static_cast<Conv2d&>(heads_[kHeatmap][2]);
  heat_out.bias.fill(kHeatmapPriorBias);
}

HeadOutputs Network::forward(const Tensor& input, bool training) {
  Tensor features;
  if (blocks_.empty()) {
    features = input;
  } else {
    std::vector<Tensor> ups;
    ups.reserve(blocks_.size());
    Tensor x = input;
    block_out_shapes_.clear();
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i].forward(x, training);
      block_out_shapes_.push_back(x.shape);
      ups.push_back(necks_[i].forward(x, training));
      if (ups.back().h() != input.h() || ups.back().w() != input.w()) {
        throw ShapeError("neck output " + shape_string(ups.back().shape) +
                         " does not match input " + shape_string(input.shape) +
                         "; input dims must be divisible by the total stride");
      }
    }
    features = Tensor(input.n(), concat_channels_, input.h(), input.w());
    const std::size_t plane = input.plane();
    for (int n = 0; n < input.n(); ++n) {
      int c0 = 0;
      for (const Tensor& u : ups) {
        std::copy_n(u.sample(n), static_cast<std::size_t>(u.c()) * plane,
                    features.data.begin() +
                        static_cast<std::ptrdiff_t>(features.index(n, c0, 0, 0)));
        c0 += u.c();
      }
    }
  }
  HeadOutputs out;
  for (int h = 0; h < kNumHeads; ++h) out.heads[h] = heads_[h].forward(features, training);
  return out;
}

Tensor Network::backward(const HeadOutputs& grads) {
  Tensor d_features;
  for (int h = 0; h < kNumHeads; ++h) {
    Tensor g = heads_[h].backward(grads.heads[h]);
    if (h == 0) {
      d_features = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) d_features.data[i] += g.data[i];
    }
  }
  if (blocks_.empty()) return d_features;

  const int N = d_features.n();
  const std::size_t plane = d_features.plane();
  // Split the concatenated gradient per neck.
  std::vector<Tensor> d_ups;
  int c0 = 0;
  for (int ch : neck_channels_) {
    Tensor d(N, ch, d_features.h(), d_features.w());
    for (int n = 0; n < N; ++n) {
      std::copy_n(d_features.data.begin() +
                      static_cast<std::ptrdiff_t>(d_features.index(n, c0, 0, 0)),
                  static_cast<std::size_t>(ch) * plane, d.sample(n));
    }
    d_ups.push_back(std::move(d));
    c0 += ch;
  }
  Tensor d_x;  // gradient flowing into the output of block i from block i+1
  for (std::size_t ii = blocks_.size(); ii-- > 0;) {
    Tensor d_block = necks_[ii].backward(d_ups[ii]);
    if (!d_x.data.empty()) {
      for (std::size_t k = 0; k < d_block.size(); ++k) d_block.data[k] += d_x.data[k];
    }
    d_x = blocks_[ii].backward(d_block);
  }
  return d_x;
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect("block" + std::to_string(i) + ".", out);
  }
  for (std::size_t i = 0; i < necks_.size(); ++i) {
    necks_[i].collect("neck" + std::to_string(i) + ".", out);
  }
  for (int h = 0; h < kNumHeads; ++h) {
    heads_[h].collect(std::string("head.") + head_name(static_cast<HeadIndex>(h)) + ".", out);
  }
  return out;
}

void Network::zero_grad() {
  for (ParamRef& p : parameters()) {
    if (p.grad) p.grad->fill(0.0);
  }
}

Cost Network::cost(int width, int height) const {
  Cost cost;
  std::array<int, 4> shape{1, spec_.in_channels, width, height};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    shape = blocks_[i].trace(shape, cost);
    necks_[i].trace(shape, cost);
  }
  const std::array<int, 4> head_in{1, concat_channels_, width, height};
  for (const Sequential& head : heads_) head.trace(head_in, cost);
  return cost;
}

ParamMacCount count_params_macs(const Network& net, int width, int height) {
  const Cost c = net.cost(width, height);
  return {c.params, c.macs};
}

}  // namespace keypillar::net
