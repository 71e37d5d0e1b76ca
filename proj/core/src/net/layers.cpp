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

#include "keypillar/net/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "keypillar/errors.hpp"

namespace keypillar::net {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Eigen picks its vectorized summation order from operand addresses, so every
// product runs on Eigen-owned (aligned) copies. Tensor storage comes from
// std::vector, whose alignment varies between runs.
RowMatrix aligned_copy(const double* data, int rows, int cols) {
  return ConstMatMap(data, rows, cols);
}

void store(const RowMatrix& m, double* out) { std::copy_n(m.data(), m.size(), out); }

void add_bias(const Tensor& bias, int channels, std::size_t plane, double* out) {
  for (int c = 0; c < channels; ++c) {
    double* row = out + static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) row[i] += bias.data[c];
  }
}

void accumulate_bias_grad(const double* dy, int channels, std::size_t plane, Tensor& grad) {
  for (int c = 0; c < channels; ++c) {
    const double* row = dy + static_cast<std::size_t>(c) * plane;
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += row[i];
    grad.data[c] += sum;
  }
}

void add_into(const RowMatrix& m, Tensor& t) {
  for (Eigen::Index i = 0; i < m.size(); ++i) t.data[i] += m.data()[i];
}

// Patch geometry shared by convolution and its transpose: an "image" of
// channels x height x width is read through k x k windows at `stride`, giving
// out_h x out_w window positions.
struct Patches {
  int channels, height, width, kernel, stride, padding, out_h, out_w;

  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_h * out_w; }
};

void im2col(const double* img, const Patches& g, double* col) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        double* dst = col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          double* row = dst + static_cast<std::size_t>(oh) * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(row, row + g.out_w, 0.0);
            continue;
          }
          const double* src = img + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            row[ow] = (iw >= 0 && iw < g.width) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates patch columns back into the image.
void col2im(const double* col, const Patches& g, double* img) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const double* src = col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          const double* row = src + static_cast<std::size_t>(oh) * g.out_w;
          double* dst = img + (static_cast<std::size_t>(c) * g.height + ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += row[ow];
          }
        }
      }
    }
  }
}

void check_channels(const Tensor& t, int channels, const char* who) {
  if (t.c() != channels) {
    std::ostringstream msg;
    msg << who << ": expected " << channels << " input channels, got "
        << shape_string(t.shape);
    throw ShapeError(msg.str());
  }
}

}  // namespace

std::string shape_string(const std::array<int, 4>& s) {
  std::ostringstream out;
  out << "[" << s[0] << "," << s[1] << "," << s[2] << "," << s[3] << "]";
  return out.str();
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride,
               int padding, bool bias)
    : weight(out_channels, in_channels, kernel, kernel),
      weight_grad(out_channels, in_channels, kernel, kernel),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      has_bias_(bias) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || padding < 0) {
    throw ShapeError("Conv2d: invalid geometry");
  }
  if (bias) {
    this->bias = Tensor(1, out_channels, 1, 1);
    bias_grad = Tensor(1, out_channels, 1, 1);
  }
}

std::array<int, 4> Conv2d::trace(const std::array<int, 4>& in, Cost& cost) const {
  if (in[1] != in_) throw ShapeError("Conv2d: channel mismatch in trace");
  const int oh = (in[2] + 2 * padding_ - kernel_) / stride_ + 1;
  const int ow = (in[3] + 2 * padding_ - kernel_) / stride_ + 1;
  const long long weights = static_cast<long long>(out_) * in_ * kernel_ * kernel_;
  cost.params += weights + (has_bias_ ? out_ : 0);
  cost.macs += weights * oh * ow;
  return {in[0], out_, oh, ow};
}

Tensor Conv2d::forward(const Tensor& input, bool) {
  check_channels(input, in_, "Conv2d");
  input_ = input;
  const Patches g{in_, input.h(), input.w(), kernel_, stride_, padding_,
                  (input.h() + 2 * padding_ - kernel_) / stride_ + 1,
                  (input.w() + 2 * padding_ - kernel_) / stride_ + 1};
  if (g.out_h < 1 || g.out_w < 1) throw ShapeError("Conv2d: input smaller than kernel");
  Tensor out(input.n(), out_, g.out_h, g.out_w);
  RowMatrix col(g.rows(), g.cols()), y(out_, g.cols());
  const RowMatrix w = aligned_copy(weight.data.data(), out_, g.rows());
  for (int n = 0; n < input.n(); ++n) {
    im2col(input.sample(n), g, col.data());
    y.noalias() = w * col;
    store(y, out.sample(n));
    if (has_bias_) add_bias(bias, out_, out.plane(), out.sample(n));
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_output) {
  const Patches g{in_, input_.h(), input_.w(), kernel_, stride_, padding_,
                  grad_output.h(), grad_output.w()};
  Tensor grad_input(input_.n(), in_, input_.h(), input_.w());
  RowMatrix col(g.rows(), g.cols());
  const RowMatrix w = aligned_copy(weight.data.data(), out_, g.rows());
  RowMatrix dw = RowMatrix::Zero(out_, g.rows());
  for (int n = 0; n < input_.n(); ++n) {
    const RowMatrix dy = aligned_copy(grad_output.sample(n), out_, g.cols());
    im2col(input_.sample(n), g, col.data());
    dw.noalias() += dy * col.transpose();
    if (has_bias_) accumulate_bias_grad(grad_output.sample(n), out_, grad_output.plane(), bias_grad);
    col.noalias() = w.transpose() * dy;
    col2im(col.data(), g, grad_input.sample(n));
  }
  add_into(dw, weight_grad);
  return grad_input;
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "weight", &weight, &weight_grad, in_ * kernel_ * kernel_});
  if (has_bias_) out.push_back({prefix + "bias", &bias, &bias_grad, 0});
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_channels, int out_channels, int kernel,
                                 int stride, int padding, int output_padding,
                                 bool bias)
    : weight(in_channels, out_channels, kernel, kernel),
      weight_grad(in_channels, out_channels, kernel, kernel),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      output_padding_(output_padding),
      has_bias_(bias) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 ||
      padding < 0 || output_padding < 0 || output_padding >= stride) {
    throw ShapeError("ConvTranspose2d: invalid geometry");
  }
  if (bias) {
    this->bias = Tensor(1, out_channels, 1, 1);
    bias_grad = Tensor(1, out_channels, 1, 1);
  }
}

std::array<int, 4> ConvTranspose2d::trace(const std::array<int, 4>& in, Cost& cost) const {
  if (in[1] != in_) throw ShapeError("ConvTranspose2d: channel mismatch in trace");
  const int oh = (in[2] - 1) * stride_ - 2 * padding_ + kernel_ + output_padding_;
  const int ow = (in[3] - 1) * stride_ - 2 * padding_ + kernel_ + output_padding_;
  const long long weights = static_cast<long long>(out_) * in_ * kernel_ * kernel_;
  cost.params += weights + (has_bias_ ? out_ : 0);
  cost.macs += weights * oh * ow;
  return {in[0], out_, oh, ow};
}

Tensor ConvTranspose2d::forward(const Tensor& input, bool) {
  check_channels(input, in_, "ConvTranspose2d");
  input_ = input;
  const int oh = (input.h() - 1) * stride_ - 2 * padding_ + kernel_ + output_padding_;
  const int ow = (input.w() - 1) * stride_ - 2 * padding_ + kernel_ + output_padding_;
  if (oh < 1 || ow < 1) throw ShapeError("ConvTranspose2d: empty output");
  // The output plays the image role of a convolution whose windows are the
  // input positions.
  const Patches g{out_, oh, ow, kernel_, stride_, padding_, input.h(), input.w()};
  Tensor out(input.n(), out_, oh, ow);
  RowMatrix col(g.rows(), g.cols());
  const RowMatrix w = aligned_copy(weight.data.data(), in_, g.rows());
  for (int n = 0; n < input.n(); ++n) {
    const RowMatrix x = aligned_copy(input.sample(n), in_, g.cols());
    col.noalias() = w.transpose() * x;
    col2im(col.data(), g, out.sample(n));
    if (has_bias_) add_bias(bias, out_, out.plane(), out.sample(n));
  }
  return out;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_output) {
  const Patches g{out_, grad_output.h(), grad_output.w(), kernel_, stride_,
                  padding_, input_.h(), input_.w()};
  Tensor grad_input(input_.n(), in_, input_.h(), input_.w());
  RowMatrix col(g.rows(), g.cols()), dx(in_, g.cols());
  const RowMatrix w = aligned_copy(weight.data.data(), in_, g.rows());
  RowMatrix dw = RowMatrix::Zero(in_, g.rows());
  for (int n = 0; n < input_.n(); ++n) {
    im2col(grad_output.sample(n), g, col.data());
    const RowMatrix x = aligned_copy(input_.sample(n), in_, g.cols());
    dw.noalias() += x * col.transpose();
    dx.noalias() = w * col;
    store(dx, grad_input.sample(n));
    if (has_bias_) accumulate_bias_grad(grad_output.sample(n), out_, grad_output.plane(), bias_grad);
  }
  add_into(dw, weight_grad);
  return grad_input;
}

void ConvTranspose2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  // Each output position receives contributions from in_ channels through at
  // most k*k taps; the stride-1 equivalent fan-in.
  out.push_back({prefix + "weight", &weight, &weight_grad, in_ * kernel_ * kernel_});
  if (has_bias_) out.push_back({prefix + "bias", &bias, &bias_grad, 0});
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : gamma(1, channels, 1, 1),
      beta(1, channels, 1, 1),
      running_mean(1, channels, 1, 1),
      running_var(1, channels, 1, 1),
      gamma_grad(1, channels, 1, 1),
      beta_grad(1, channels, 1, 1),
      channels_(channels),
      eps_(eps),
      momentum_(momentum) {
  gamma.fill(1.0);
  running_var.fill(1.0);
}

std::array<int, 4> BatchNorm2d::trace(const std::array<int, 4>& in, Cost& cost) const {
  if (in[1] != channels_) throw ShapeError("BatchNorm2d: channel mismatch in trace");
  cost.params += 2LL * channels_;
  return in;
}

Tensor BatchNorm2d::forward(const Tensor& input, bool training) {
  check_channels(input, channels_, "BatchNorm2d");
  training_ = training;
  const std::size_t plane = input.plane();
  const double count = static_cast<double>(input.n()) * static_cast<double>(plane);
  normalized_ = Tensor(input.n(), channels_, input.h(), input.w());
  inv_std_.assign(channels_, 0.0);
  Tensor out(input.n(), channels_, input.h(), input.w());
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (int n = 0; n < input.n(); ++n) {
        const double* p = input.data.data() + input.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / count;
      double sq = 0.0;
      for (int n = 0; n < input.n(); ++n) {
        const double* p = input.data.data() + input.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / count;
      const double unbias = count > 1 ? count / (count - 1) : 1.0;
      running_mean.data[c] = (1 - momentum_) * running_mean.data[c] + momentum_ * mean;
      running_var.data[c] = (1 - momentum_) * running_var.data[c] + momentum_ * var * unbias;
    } else {
      mean = running_mean.data[c];
      var = running_var.data[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma.data[c], b = beta.data[c];
    for (int n = 0; n < input.n(); ++n) {
      const std::size_t base = input.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (input.data[base + i] - mean) * inv;
        normalized_.data[base + i] = xhat;
        out.data[base + i] = g * xhat + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const std::size_t plane = dy.plane();
  const double count = static_cast<double>(dy.n()) * static_cast<double>(plane);
  Tensor dx(dy.n(), channels_, dy.h(), dy.w());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const std::size_t base = dy.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy.data[base + i];
        sum_dy_xhat += dy.data[base + i] * normalized_.data[base + i];
      }
    }
    gamma_grad.data[c] += sum_dy_xhat;
    beta_grad.data[c] += sum_dy;
    const double g = gamma.data[c], inv = inv_std_[c];
    for (int n = 0; n < dy.n(); ++n) {
      const std::size_t base = dy.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        if (training_) {
          dx.data[base + i] = g * inv / count *
                              (count * dy.data[base + i] - sum_dy -
                               normalized_.data[base + i] * sum_dy_xhat);
        } else {
          dx.data[base + i] = g * inv * dy.data[base + i];
        }
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "gamma", &gamma, &gamma_grad, 0});
  out.push_back({prefix + "beta", &beta, &beta_grad, 0});
  out.push_back({prefix + "running_mean", &running_mean, nullptr, 0});
  out.push_back({prefix + "running_var", &running_var, nullptr, 0});
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(const Tensor& input, bool) {
  output_ = input;
  for (double& v : output_.data) v = v > 0.0 ? v : 0.0;
  return output_;
}

Tensor ReLU::backward(const Tensor& grad_output) {
  Tensor dx = grad_output;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(output_.data[i] > 0.0)) dx.data[i] = 0.0;
  }
  return dx;
}

std::array<int, 4> ReLU::trace(const std::array<int, 4>& in, Cost&) const { return in; }

Tensor maxpool3x3(const Tensor& input) {
  Tensor out(input.n(), input.c(), input.h(), input.w());
  const int H = input.h(), W = input.w();
  for (int n = 0; n < input.n(); ++n) {
    for (int c = 0; c < input.c(); ++c) {
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          double best = -std::numeric_limits<double>::infinity();
          for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
              const int a = i + di, b = j + dj;
              if (a < 0 || a >= H || b < 0 || b >= W) continue;
              best = std::max(best, input.at(n, c, a, b));
            }
          }
          out.at(n, c, i, j) = best;
        }
      }
    }
  }
  return out;
}

// ------------------------------------------------------------ Sequential

Tensor Sequential::forward(const Tensor& input, bool training) {
  Tensor x = input;
  for (auto& layer : layers_) x = layer->forward(x, training);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_output) {
  Tensor g = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect(prefix + std::to_string(i) + ".", out);
  }
}

std::array<int, 4> Sequential::trace(const std::array<int, 4>& in, Cost& cost) const {
  std::array<int, 4> s = in;
  for (const auto& layer : layers_) s = layer->trace(s, cost);
  return s;
}

}  // namespace keypillar::net
