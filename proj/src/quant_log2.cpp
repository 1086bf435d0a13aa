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

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "sdq/quant.hpp"

namespace sdq {

int log_max_exponent(int bits) {
  if (bits < 2 || bits > 6) throw Error("log2 quantization supports 2..6 bits, got " + std::to_string(bits));
  return (1 << (bits - 1)) - 2;
}

std::int64_t log_levels(int bits) { return std::int64_t{1} << log_max_exponent(bits); }

namespace {

struct Log2Map {
  double threshold;
  double lp2;   // L_p2
  double step;  // alpha sigma / L_p2
  int max_exp;

  explicit Log2Map(const QuantizerState& st) {
    max_exp = log_max_exponent(st.bits);
    const double l = static_cast<double>(std::int64_t{1} << max_exp);
    threshold = st.effective_threshold();
    lp2 = l;
    step = threshold / l;
  }

  // round(log2(r)) with ties going up, from the exact binary exponent of r:
  // r = m * 2^e with m in [0.5, 1), so log2(r) = (e - 1) + log2(2m) and the
  // fractional part reaches 1/2 exactly when m >= 1/sqrt(2). Exact powers of
  // two (m = 0.5) return their own exponent.
  static int round_log2(double r) {
    int e = 0;
    const double m = std::frexp(r, &e);
    return (e - 1) + (m >= std::numbers::sqrt2 / 2.0 ? 1 : 0);
  }

  std::int32_t level(double x) const {
    const double y = clip_signed(x, threshold);
    if (y == 0.0) return 0;
    const int k = round_log2(std::abs(y) * lp2 / threshold);
    if (k < 0) return 0;
    const std::int32_t mag = std::int32_t{1} << std::min(k, max_exp);
    return y < 0.0 ? -mag : mag;
  }
};

}  // namespace

std::int32_t quantize_log2_level(double x, const QuantizerState& st) { return Log2Map(st).level(x); }

Log2Output quantize_log2_forward(const Tensor& x, const QuantizerState& st) {
  st.validate();
  if (!st.is_signed) throw Error("quantize_log2_forward: requires a signed quantizer");
  const Log2Map map(st);
  Log2Output out;
  out.values = Tensor(x.shape());
  out.levels.resize(x.size());
  out.step = map.step;
  out.max_level = std::int64_t{1} << map.max_exp;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::int32_t p = map.level(x[i]);
    out.levels[i] = p;
    out.values[i] = static_cast<double>(p) * map.step;
  }
  return out;
}

QuantGrad log2_backward(const Tensor& x, const Tensor& g_y, const QuantizerState& st) {
  if (!st.is_signed) throw Error("log2_backward: requires a signed quantizer");
  return quantize_backward(x, g_y, st);
}

std::uint8_t Pow2Code::pack() const {
  return static_cast<std::uint8_t>((zero ? 0x80 : 0) | (negative ? 0x40 : 0) | (exponent & 0x3f));
}

Pow2Code Pow2Code::unpack(std::uint8_t byte) {
  Pow2Code c;
  c.zero = (byte & 0x80) != 0;
  c.negative = (byte & 0x40) != 0;
  c.exponent = static_cast<std::uint8_t>(byte & 0x3f);
  return c;
}

std::int64_t Pow2Code::value() const {
  if (zero) return 0;
  const std::int64_t mag = std::int64_t{1} << exponent;
  return negative ? -mag : mag;
}

Pow2Code encode_pow2(std::int32_t level) {
  Pow2Code c;
  if (level == 0) return c;
  const std::uint32_t mag = static_cast<std::uint32_t>(level < 0 ? -static_cast<std::int64_t>(level) : level);
  if (!std::has_single_bit(mag)) throw Error("encode_pow2: " + std::to_string(level) + " is not a power of two");
  c.zero = false;
  c.negative = level < 0;
  c.exponent = static_cast<std::uint8_t>(std::countr_zero(mag));
  return c;
}

}  // namespace sdq
