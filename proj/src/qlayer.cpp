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

#include "sdq/qlayer.hpp"

#include <algorithm>

namespace sdq {

QuantizedLayer::QuantizedLayer(const LayerSpec& spec, const Shape& input_shape, bool input_relu, Rng& rng)
    : spec_(spec), input_shape_(input_shape), input_relu_(input_relu) {
  if (spec.out == 0) throw Error("layer output size must be positive");
  if (spec.kind == LayerKind::conv2d) {
    if (input_shape.size() != 3) throw ShapeError("conv2d layer expects a [c, h, w] input, got " + shape_str(input_shape));
    if (spec.kernel == 0 || spec.stride == 0) throw Error("conv2d kernel and stride must be positive");
    const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h + 2 * spec.padding < spec.kernel || w + 2 * spec.padding < spec.kernel) {
      throw ShapeError("conv2d kernel " + std::to_string(spec.kernel) + " does not fit input " + shape_str(input_shape));
    }
    const std::size_t oh = (h + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    const std::size_t ow = (w + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    weight = Tensor({spec.out, c, spec.kernel, spec.kernel});
    output_shape_ = {spec.out, oh, ow};
  } else {
    weight = Tensor({spec.out, shape_numel(input_shape)});
    output_shape_ = {spec.out};
  }
  init_fan_in_uniform(weight, fan_in(), rng);
  bias = Tensor({spec.out}, 0.0);
  if (spec.batchnorm) bn.emplace(spec.out);
  weight_quant.is_signed = true;
  act_quant.is_signed = false;
}

std::size_t QuantizedLayer::fan_in() const { return weight.size() / weight.dim(0); }

void QuantizedLayer::set_quantized(bool weights, bool with_act, const QuantConfig& qc) {
  const bool was_quantized = quantized_;
  const bool had_act = has_act_quant_;
  quantized_ = weights;
  has_act_quant_ = weights && with_act && input_relu_;

  const double w_alpha = was_quantized ? weight_quant.alpha : qc.alpha_init;
  const double w_sigma = weight_quant.sigma;
  weight_quant = QuantizerState{};
  weight_quant.alpha = w_alpha;
  weight_quant.sigma = w_sigma;
  weight_quant.bits = qc.weight_bits;
  weight_quant.is_signed = true;
  weight_quant.mode = qc.weight_mode;
  weight_quant.grad_scale = qc.weight_grad_scale;
  weight_quant.weight_decay = qc.alpha_weight_decay;
  weight_quant.outside_grad = qc.weight_outside_grad;

  const double a_alpha = had_act ? act_quant.alpha : qc.alpha_init;
  const double a_sigma = had_act ? act_quant.sigma : 0.0;
  act_quant = QuantizerState{};
  act_quant.alpha = a_alpha;
  act_quant.sigma = a_sigma;
  act_quant.bits = qc.act_bits;
  act_quant.is_signed = false;
  act_quant.mode = QuantMode::uniform;
  act_quant.grad_scale = qc.act_grad_scale;
  act_quant.weight_decay = qc.alpha_weight_decay;
  if (!had_act) {
    act_sigma = SigmaTracker(qc.sigma_momentum, SigmaSource::activations);
  }
  if (quantized_) weight_quant.validate();
  if (has_act_quant_) act_quant.validate();
}

void QuantizedLayer::freeze() {
  frozen_weight_sigma = weight_sigma(weight.data());
  frozen_ = true;
}

void QuantizedLayer::unfreeze() { frozen_ = false; }

double QuantizedLayer::current_weight_sigma() const {
  return frozen_ ? frozen_weight_sigma : weight_sigma(weight.data());
}

QuantOutput QuantizedLayer::quantized_weights() const {
  QuantizerState st = weight_quant;
  st.sigma = current_weight_sigma();
  return fake_quantize(weight, st);
}

Tensor QuantizedLayer::forward(const Tensor& x, bool training) {
  Shape expect = input_shape_;
  expect.insert(expect.begin(), x.rank() ? x.dim(0) : 0);
  if (x.shape() != expect) {
    throw ShapeError("layer input " + shape_str(x.shape()) + " does not match expected " + shape_str(expect));
  }
  x_in_ = x;
  if (has_act_quant_) {
    if (training && !frozen_) act_sigma.update(activation_sigma(x.data()));
    act_quant.sigma = act_sigma.value();
    a_ = quantize_forward(x, act_quant).values;
  } else if (input_relu_) {
    a_ = relu_forward(x);
  } else {
    a_ = x;
  }

  if (quantized_) {
    weight_quant.sigma = current_weight_sigma();
    w_eff_ = fake_quantize(weight, weight_quant).values;
  } else {
    w_eff_ = weight;
  }

  Tensor z = spec_.kind == LayerKind::conv2d
                 ? conv2d_forward(a_, w_eff_, bias, Conv2dParams{spec_.stride, spec_.padding})
                 : linear_forward(a_, w_eff_, bias);
  if (bn) z = batchnorm_forward(z, *bn, training, &bn_cache_);
  have_cache_ = true;
  return z;
}

Tensor QuantizedLayer::backward(const Tensor& g_out) {
  if (!have_cache_) throw Error("QuantizedLayer::backward called before forward");
  Tensor g = g_out;
  if (bn) {
    BatchNormGrads bg = batchnorm_backward(g, *bn, bn_cache_);
    auto gg = bn->gamma.grad();
    auto gb = bn->beta.grad();
    for (std::size_t c = 0; c < gg.size(); ++c) {
      gg[c] += bg.gamma[c];
      gb[c] += bg.beta[c];
    }
    g = std::move(bg.x);
  }

  Tensor g_a, g_w, g_b;
  if (spec_.kind == LayerKind::conv2d) {
    Conv2dGrads cg = conv2d_backward(a_, w_eff_, g, Conv2dParams{spec_.stride, spec_.padding}, true);
    g_a = std::move(cg.x);
    g_w = std::move(cg.w);
    g_b = std::move(cg.bias);
  } else {
    LinearGrads lg = linear_backward(a_, w_eff_, g, true);
    g_a = std::move(lg.x);
    g_w = std::move(lg.w);
    g_b = std::move(lg.bias);
  }
  auto bgrad = bias.grad();
  for (std::size_t i = 0; i < bgrad.size(); ++i) bgrad[i] += g_b[i];

  auto wgrad = weight.grad();
  if (quantized_) {
    QuantGrad qg = quantize_backward(weight, g_w, weight_quant);
    for (std::size_t i = 0; i < wgrad.size(); ++i) wgrad[i] += qg.x[i];
    weight_alpha_grad += qg.alpha;
  } else {
    for (std::size_t i = 0; i < wgrad.size(); ++i) wgrad[i] += g_w[i];
  }

  if (has_act_quant_) {
    QuantGrad qa = quantize_backward(x_in_, g_a, act_quant);
    act_alpha_grad += qa.alpha;
    return std::move(qa.x);
  }
  if (input_relu_) return relu_backward(x_in_, g_a);
  return g_a;
}

void QuantizedLayer::zero_grads() {
  weight.grad();
  weight.zero_grad();
  bias.grad();
  bias.zero_grad();
  if (bn) {
    bn->gamma.grad();
    bn->gamma.zero_grad();
    bn->beta.grad();
    bn->beta.zero_grad();
  }
  weight_alpha_grad = 0.0;
  act_alpha_grad = 0.0;
}

void QuantizedLayer::collect_params(std::vector<ParamRef>& out) {
  weight.grad();
  bias.grad();
  out.push_back({weight.data(), std::as_const(weight).grad(), true, false});
  out.push_back({bias.data(), std::as_const(bias).grad(), false, false});
  if (bn) {
    bn->gamma.grad();
    bn->beta.grad();
    out.push_back({bn->gamma.data(), std::as_const(bn->gamma).grad(), false, false});
    out.push_back({bn->beta.data(), std::as_const(bn->beta).grad(), false, false});
  }
  const bool w_frozen = !quantized_ || frozen_ || weight_quant.grad_scale == 0.0;
  const bool a_frozen = !has_act_quant_ || frozen_ || act_quant.grad_scale == 0.0;
  out.push_back({std::span<double>(&weight_quant.alpha, 1), std::span<const double>(&weight_alpha_grad, 1), false,
                 w_frozen});
  out.push_back({std::span<double>(&act_quant.alpha, 1), std::span<const double>(&act_alpha_grad, 1), false,
                 a_frozen});
}

Model::Model(ModelSpec spec, const QuantConfig& qc, Rng& rng) : spec_(std::move(spec)) {
  if (spec_.layers.empty()) throw Error("model needs at least one layer");
  Shape shape = spec_.input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    layers.emplace_back(spec_.layers[i], shape, i > 0, rng);
    shape = layers.back().output_shape();
  }
  configure(qc);
}

void Model::configure(const QuantConfig& qc) {
  quant_ = qc;
  const std::size_t last = layers.size() - 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool q = qc.enabled && (i > 0 || qc.quantize_first) && (i < last || qc.quantize_last);
    layers[i].set_quantized(q, true, qc);
  }
}

std::size_t Model::num_classes() const { return layers.back().output_shape().front(); }

Tensor Model::forward(const Tensor& x, bool training) {
  Tensor h = x;
  for (auto& layer : layers) h = layer.forward(h, training);
  return h;
}

void Model::backward(const Tensor& g_logits) {
  Tensor g = g_logits;
  for (std::size_t i = layers.size(); i-- > 0;) g = layers[i].backward(g);
}

void Model::zero_grads() {
  for (auto& l : layers) l.zero_grads();
}

std::vector<ParamRef> Model::params() {
  std::vector<ParamRef> out;
  for (auto& l : layers) l.collect_params(out);
  return out;
}

void Model::project() {
  for (auto& l : layers) {
    l.weight_quant.alpha = std::max(l.weight_quant.alpha, kMinAlpha);
    l.act_quant.alpha = std::max(l.act_quant.alpha, kMinAlpha);
  }
}

void Model::freeze_quantizers() {
  for (auto& l : layers) l.freeze();
}

void Model::unfreeze_quantizers() {
  for (auto& l : layers) l.unfreeze();
}

}  // namespace sdq
