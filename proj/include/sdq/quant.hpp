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

// Quantizers whose clipping threshold is alpha * sigma: a learnable multiplier
// alpha on the measured standard deviation sigma of the data being quantized.
//
// Uniform mode:
//   y   = clip(x)                                   (signed or ReLU-fused)
//   y_d = clamp(round(y * L_P / (alpha sigma)), -L_N, L_P)
//   y_q = y_d * alpha sigma / L_P
//
// Base-2 logarithmic mode (signed weights only):
//   y_int = round(log2(|y| * L_p2 / (alpha sigma)))
//   y_p2  = clamp(sign(y) * 2^y_int, -L_p2, L_p2) if y_int >= 0, else 0
//   y_q   = y_p2 * alpha sigma / L_p2,   L_p2 = 2^(2^(b-1) - 2)
//
// Backward uses the straight-through estimator: rounding passes gradients,
// clipped inputs do not, and alpha collects sigma * g_y (signed by x) from
// every clipped element. The tensor-level alpha gradient is
//   g_alpha = s * sum(per-element terms) + lambda * alpha.

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "sdq/tensor.hpp"

namespace sdq {

enum class QuantMode : std::uint8_t { uniform = 0, log2 = 1 };

// What a signed quantizer passes to its input outside |x| < alpha sigma.
enum class OutsideGrad : std::uint8_t { zero = 0, pass_through = 1 };

std::string_view to_string(QuantMode m);
QuantMode parse_quant_mode(std::string_view s);

struct Levels {
  std::int32_t negative;  // L_N
  std::int32_t positive;  // L_P
};

// Signed: L_N = L_P = 2^(b-1) - 1. Unsigned: L_N = 0, L_P = 2^b - 1.
Levels levels(int bits, bool is_signed);

// L_p2 = 2^(2^(b-1) - 2); bits in [2, 6] so every level fits in 32 bits.
std::int64_t log_levels(int bits);

// Largest log2 exponent, 2^(b-1) - 2.
int log_max_exponent(int bits);

// Floor applied to sigma before dividing by the threshold (dead layers).
inline constexpr double kMinSigma = 1e-8;

struct QuantizerState {
  double alpha = 3.0;
  double sigma = 0.0;
  int bits = 3;
  bool is_signed = true;
  QuantMode mode = QuantMode::uniform;
  double grad_scale = 1.0;
  double weight_decay = 0.0;
  OutsideGrad outside_grad = OutsideGrad::zero;

  double effective_sigma() const { return sigma > kMinSigma ? sigma : kMinSigma; }
  // alpha * sigma as stored, without the sigma floor.
  double threshold() const { return alpha * sigma; }
  double effective_threshold() const { return alpha * effective_sigma(); }
  // L_P in uniform mode, L_p2 in log2 mode.
  std::int64_t max_level() const;
  // Real value of one integer level.
  double step() const { return effective_threshold() / static_cast<double>(max_level()); }

  // Throws when alpha, bits or the mode/signedness combination is invalid.
  void validate() const;
};

// Scalar clipping functions; `threshold` is alpha * sigma.
inline double clip_signed(double x, double threshold) {
  if (x >= threshold) return threshold;
  if (x <= -threshold) return -threshold;
  return x;
}
inline double clip_unsigned(double x, double threshold) {
  if (x <= 0.0) return 0.0;
  return x < threshold ? x : threshold;
}

Tensor clip_signed(const Tensor& x, const QuantizerState& st);
Tensor clip_unsigned(const Tensor& x, const QuantizerState& st);

struct QuantOutput {
  Tensor values;                     // y_q, same shape as the input
  std::vector<std::int32_t> levels;  // y_d (uniform) or y_p2 (log2)
  double step = 0.0;                 // alpha sigma / L
  std::int64_t max_level = 0;        // L_P or L_p2
};
using Log2Output = QuantOutput;

QuantOutput quantize_forward(const Tensor& x, const QuantizerState& st);
Log2Output quantize_log2_forward(const Tensor& x, const QuantizerState& st);
// Dispatches on st.mode.
QuantOutput fake_quantize(const Tensor& x, const QuantizerState& st);

// Single-element versions of the forward maps, returning the integer level.
std::int32_t quantize_level(double x, const QuantizerState& st);
std::int32_t quantize_log2_level(double x, const QuantizerState& st);

// Half-width of the zero bin: alpha sigma / (2 L_P) in uniform mode and
// alpha sigma / (sqrt(2) L_p2) in log2 mode. Uses the raw sigma.
double pruning_threshold(const QuantizerState& st);

// Fraction of zero levels.
double pruning_ratio(const std::vector<std::int32_t>& levels);

struct QuantGrad {
  Tensor x;            // g_x
  double alpha = 0.0;  // g_alpha, scaled and weight-decayed
};

QuantGrad quantize_backward(const Tensor& x, const Tensor& g_y, const QuantizerState& st);
// Same contract as the signed uniform backward.
QuantGrad log2_backward(const Tensor& x, const Tensor& g_y, const QuantizerState& st);

// Exported power-of-two weight: value = (zero ? 0 : (negative ? -1 : 1) * 2^exponent).
struct Pow2Code {
  bool zero = true;
  bool negative = false;
  std::uint8_t exponent = 0;

  // bit 7 zero flag, bit 6 sign, bits 0..5 exponent
  std::uint8_t pack() const;
  static Pow2Code unpack(std::uint8_t byte);
  std::int64_t value() const;
  friend bool operator==(const Pow2Code&, const Pow2Code&) = default;
};

// Encodes a y_p2 level; throws if it is not zero or a signed power of two.
Pow2Code encode_pow2(std::int32_t level);

}  // namespace sdq
