// Copyright (c) 2026 The sdquant Authors. All Rights Reserved.
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

// Forward/backward pairs for the differentiable ops. Layers cache whatever a
// backward call needs and invoke them in reverse order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdq/tensor.hpp"

namespace sdq {

// [m, k] x [k, n] -> [m, n]
Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
  Tensor a;
  Tensor b;
};
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g_out);

// x: [n, in] (higher ranks are flattened per sample), w: [out, in], bias: [out] or empty.
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& bias);

struct LinearGrads {
  Tensor x;  // shaped like the forward input
  Tensor w;
  Tensor bias;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& g_out, bool with_bias);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x: [n, c, h, w], w: [o, c, kh, kw], bias: [o] or empty -> [n, o, oh, ow]
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dParams p);

struct Conv2dGrads {
  Tensor x;
  Tensor w;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& g_out, Conv2dParams p, bool with_bias);

// Per-channel batch normalization over [n, c, ...] inputs.
struct BatchNorm {
  explicit BatchNorm(std::size_t channels = 0);

  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  std::size_t channels() const { return gamma.size(); }
};

struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
  bool training = true;
};

// Training mode normalizes with batch statistics and updates running stats.
Tensor batchnorm_forward(const Tensor& x, BatchNorm& bn, bool training, BatchNormCache* cache);

struct BatchNormGrads {
  Tensor x;
  Tensor gamma;
  Tensor beta;
};
// Gradient of whichever forward filled the cache (batch or running statistics).
BatchNormGrads batchnorm_backward(const Tensor& g_out, const BatchNorm& bn, const BatchNormCache& cache);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& g_out);

struct LossResult {
  double loss = 0.0;  // mean over the batch
  std::size_t correct = 0;
  Tensor grad;  // d(mean loss)/d(logits)
};
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels);

std::vector<std::size_t> argmax_rows(const Tensor& logits);

// Cosine annealing from lr0, evaluated on total + 1 points so the last
// training step (step = total - 1) keeps a strictly positive rate.
double cosine_lr(std::size_t step, std::size_t total, double lr0);

struct OptimizerConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// A trainable buffer and its gradient, both views into storage owned elsewhere.
struct ParamRef {
  std::span<double> value;
  std::span<const double> grad;
  bool decay = true;
  // Skipped by the optimizer but kept so velocity slots stay aligned.
  bool frozen = false;
};

// SGD with heavy-ball momentum and L2 weight decay (PyTorch convention):
//   v <- momentum * v + (g + wd * w);  w <- w - lr * v
class Sgd {
 public:
  explicit Sgd(OptimizerConfig config = {}) : config_(config) {}

  void step(std::span<const ParamRef> params, double lr);

  const OptimizerConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }
  void set_velocity(std::vector<std::vector<double>> v) { velocity_ = std::move(v); }
  void reset() { velocity_.clear(); }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> velocity_;
};

void sgd_step(std::span<const ParamRef> params, const OptimizerConfig& config, double lr,
              std::vector<std::vector<double>>& velocity);

}  // namespace sdq
