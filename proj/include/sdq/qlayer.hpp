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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdq/ops.hpp"
#include "sdq/quant.hpp"
#include "sdq/stats.hpp"
#include "sdq/tensor.hpp"

namespace sdq {

enum class LayerKind : std::uint8_t { linear = 0, conv2d = 1 };

struct LayerSpec {
  LayerKind kind = LayerKind::conv2d;
  std::size_t out = 1;  // output channels or features
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool batchnorm = true;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Per-sample input shape plus the layer stack; the last layer emits logits.
struct ModelSpec {
  Shape input;
  std::vector<LayerSpec> layers;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct QuantConfig {
  bool enabled = true;
  int weight_bits = 3;
  int act_bits = 3;
  QuantMode weight_mode = QuantMode::uniform;
  double alpha_init = 3.0;
  double weight_grad_scale = 1.0;
  double act_grad_scale = 1.0;
  double alpha_weight_decay = 5e-4;  // lambda, normally the network's weight decay
  double sigma_momentum = SigmaTracker::kDefaultMomentum;
  OutsideGrad weight_outside_grad = OutsideGrad::zero;
  bool quantize_first = false;
  bool quantize_last = false;
};

// alpha is kept at or above this after every optimizer step.
inline constexpr double kMinAlpha = 1e-3;

// Linear or convolutional unit: [activation quantizer | ReLU] -> weights
// (fake-quantized from a full-precision master copy) -> optional batchnorm.
//
// The activation quantizer sits on the layer input and fuses the ReLU of the
// previous layer; its sigma is the running average of activation_sigma() over
// training batches. The weight sigma is recomputed from the master weights on
// every forward unless the layer is frozen.
class QuantizedLayer {
 public:
  QuantizedLayer() = default;
  QuantizedLayer(const LayerSpec& spec, const Shape& input_shape, bool input_relu, Rng& rng);

  Tensor forward(const Tensor& x, bool training);
  // Requires a preceding forward. Accumulates parameter gradients and
  // returns the gradient with respect to the layer input.
  Tensor backward(const Tensor& g_out);

  void zero_grads();
  // value/grad views in a fixed order: weight, bias, gamma, beta, weight alpha, act alpha
  void collect_params(std::vector<ParamRef>& out);

  // Configures quantization on this layer; `with_act` adds the input quantizer.
  void set_quantized(bool weights, bool with_act, const QuantConfig& qc);

  // Freeze alpha and sigma (weight sigma is snapshotted from the current weights).
  void freeze();
  void unfreeze();
  bool frozen() const { return frozen_; }

  bool quantized() const { return quantized_; }
  bool has_act_quant() const { return has_act_quant_; }
  bool input_relu() const { return input_relu_; }
  const LayerSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t fan_in() const;

  // Weight sigma the quantizer uses now (snapshot when frozen).
  double current_weight_sigma() const;
  // Quantizes the master weights with the current state.
  QuantOutput quantized_weights() const;

  Tensor weight;
  Tensor bias;
  std::optional<BatchNorm> bn;
  QuantizerState weight_quant;
  QuantizerState act_quant;
  SigmaTracker act_sigma;
  double frozen_weight_sigma = 0.0;
  double weight_alpha_grad = 0.0;
  double act_alpha_grad = 0.0;

 private:
  friend class CheckpointCodec;

  LayerSpec spec_;
  Shape input_shape_;
  Shape output_shape_;
  bool input_relu_ = false;
  bool quantized_ = false;
  bool has_act_quant_ = false;
  bool frozen_ = false;

  // forward caches
  Tensor x_in_;
  Tensor a_;
  Tensor w_eff_;
  BatchNormCache bn_cache_;
  bool have_cache_ = false;
};

class Model {
 public:
  Model() = default;
  Model(ModelSpec spec, const QuantConfig& qc, Rng& rng);

  // x: [n, input...]; returns logits [n, classes].
  Tensor forward(const Tensor& x, bool training);
  void backward(const Tensor& g_logits);
  void zero_grads();
  std::vector<ParamRef> params();
  // Keeps alpha >= kMinAlpha.
  void project();

  // Re-applies a quantization config (bits, mode, scales) to every layer.
  void configure(const QuantConfig& qc);
  void freeze_quantizers();
  void unfreeze_quantizers();

  // Training hands back models in eval mode; integer export requires it.
  void set_eval(bool eval) { eval_ = eval; }
  bool eval_mode() const { return eval_; }

  const ModelSpec& spec() const { return spec_; }
  const QuantConfig& quant_config() const { return quant_; }
  std::size_t num_classes() const;

  std::vector<QuantizedLayer> layers;

 private:
  ModelSpec spec_;
  QuantConfig quant_;
  bool eval_ = false;
};

}  // namespace sdq
