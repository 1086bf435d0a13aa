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
#include <span>
#include <string>
#include <vector>

#include "sdq/qlayer.hpp"
#include "sdq/quant.hpp"
#include "sdq/tensor.hpp"

namespace sdq {

class OverflowError : public Error {
 public:
  OverflowError(std::size_t layer, int bits)
      : Error("integer layer " + std::to_string(layer) + ": " + std::to_string(bits) + "-bit accumulator overflow"),
        layer_(layer) {}
  std::size_t layer() const { return layer_; }

 private:
  std::size_t layer_;
};

// Row-major integer activations.
struct IntTensor {
  Shape shape;
  std::vector<std::int32_t> data;
};

// Fixed-point affine q = round_half_away((acc * multiplier + bias) / 2^shift).
// |multiplier| lies in [2^30, 2^31) unless the scale is too small to reach
// that range with shift <= 62, or a large offset needs the shift lowered so
// the bias stays below 2^62.
struct Requant {
  std::int32_t multiplier = 0;
  std::int32_t shift = 0;
  std::int64_t bias = 0;

  friend bool operator==(const Requant&, const Requant&) = default;
};

// Encodes scale * acc + offset.
Requant make_requant(double scale, double offset);
// Unclamped result of the fixed-point affine.
std::int64_t apply_requant(std::int64_t acc, const Requant& r);

// One conv or linear layer running on integer activations. A linear layer is
// stored as a conv with in_h = in_w = kernel = 1 over in_c features.
struct IntegerLayer {
  LayerKind kind = LayerKind::conv2d;
  std::size_t in_c = 0, in_h = 1, in_w = 1;
  std::size_t out = 0, kernel = 1, stride = 1, padding = 0;
  QuantMode weight_mode = QuantMode::uniform;
  std::vector<std::int32_t> weights;  // uniform: y_d, [out, in_c * kernel * kernel]
  std::vector<Pow2Code> codes;        // log2: one code per weight, same layout
  std::int64_t weight_max = 0;        // grid bound on |weight|: L_P or L_p2
  std::int32_t in_max = 0;            // input activations lie in [0, in_max]
  int acc_bits = 32;                  // 32 or 64
  // When set, the output is requantized onto [0, out_max] for the next
  // integer layer; otherwise it is made real with out_scale/out_bias.
  bool requantize = false;
  std::int32_t out_max = 0;
  std::vector<Requant> requant;  // per output channel
  std::vector<double> out_scale;  // per output channel
  std::vector<double> out_bias;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
  std::size_t fan_in() const { return in_c * kernel * kernel; }
  // Weight value as a signed integer.
  std::int64_t weight_at(std::size_t i) const;
  // fan_in * weight_max * in_max, saturated to 2^64 - 1.
  std::uint64_t accumulator_bound() const;
};

// Float prefix (leading unquantized layers), the integer body, and a float
// suffix (trailing unquantized layers).
struct IntegerModel {
  static constexpr std::uint32_t kVersion = 1;

  Shape input;  // per sample
  std::vector<QuantizedLayer> prefix;
  QuantizerState input_quant;  // grid of the first integer layer's input
  std::vector<IntegerLayer> layers;
  std::vector<QuantizedLayer> suffix;
};

// Requires an eval-mode model whose quantized layers are contiguous and each
// have an activation quantizer.
IntegerModel export_integer_model(const Model& model);

enum class IntKernel { serial, omp };

// Raw accumulators of one layer, [n, out, out_h, out_w] flattened. Throws
// OverflowError(layer_index) when a partial sum leaves the accumulator range
// and Error when an input lies outside [0, in_max].
std::vector<std::int64_t> accumulate(const IntegerLayer& layer, const IntTensor& x, std::size_t layer_index,
                                     IntKernel kernel = IntKernel::omp);

// Float prefix output -> integer grid of the first integer layer.
IntTensor quantize_input(const IntegerModel& im, const Tensor& x);
Tensor run_prefix(const IntegerModel& im, const Tensor& x);

// Integer body plus float suffix; returns logits [n, classes].
Tensor shiftadd_forward(const IntegerModel& im, const IntTensor& x_int, IntKernel kernel = IntKernel::omp);
// Full pipeline from float inputs.
Tensor integer_predict(const IntegerModel& im, const Tensor& x, IntKernel kernel = IntKernel::omp);

struct EquivalenceReport {
  std::size_t samples = 0;
  double max_abs_deviation = 0.0;
  double logit_scale = 0.0;           // max |float logit|
  double normalized_deviation = 0.0;  // max_abs_deviation / logit_scale
  double argmax_agreement = 0.0;
};

EquivalenceReport verify_equivalence(Model& float_model, const IntegerModel& im, const Tensor& inputs,
                                     std::size_t batch_size = 250);

std::vector<std::uint8_t> encode_integer_model(const IntegerModel& im);
IntegerModel decode_integer_model(std::span<const std::uint8_t> bytes);
void save_integer_model(const IntegerModel& im, const std::string& path);
IntegerModel load_integer_model(const std::string& path);

}  // namespace sdq
