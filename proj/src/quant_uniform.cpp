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
#include <cmath>
#include <string>

#include "sdq/quant.hpp"

namespace sdq {

std::string_view to_string(QuantMode m) { return m == QuantMode::log2 ? "log2" : "uniform"; }

QuantMode parse_quant_mode(std::string_view s) {
  if (s == "uniform") return QuantMode::uniform;
  if (s == "log2") return QuantMode::log2;
  throw Error("unknown quantization mode '" + std::string(s) + "' (expected uniform or log2)");
}

Levels levels(int bits, bool is_signed) {
  if (bits < 2 || bits > 16) throw Error("levels: bit-width must be in [2, 16], got " + std::to_string(bits));
  if (is_signed) {
    const std::int32_t l = (std::int32_t{1} << (bits - 1)) - 1;
    return {l, l};
  }
  return {0, (std::int32_t{1} << bits) - 1};
}

std::int64_t QuantizerState::max_level() const {
  return mode == QuantMode::log2 ? log_levels(bits) : levels(bits, is_signed).positive;
}

void QuantizerState::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error("quantizer alpha must be positive and finite");
  if (!(sigma >= 0.0)) throw Error("quantizer sigma must be non-negative");
  if (!(grad_scale >= 0.0)) throw Error("quantizer gradient scale must be non-negative");
  if (!(weight_decay >= 0.0)) throw Error("quantizer weight decay must be non-negative");
  if (mode == QuantMode::log2 && !is_signed) throw Error("log2 quantization applies to signed data only");
  (void)max_level();
}

Tensor clip_signed(const Tensor& x, const QuantizerState& st) {
  Tensor y(x.shape());
  const double t = st.threshold();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = clip_signed(x[i], t);
  return y;
}

Tensor clip_unsigned(const Tensor& x, const QuantizerState& st) {
  Tensor y(x.shape());
  const double t = st.threshold();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = clip_unsigned(x[i], t);
  return y;
}

namespace {

struct UniformMap {
  double threshold;
  double lp;    // L_P
  double step;  // alpha sigma / L_P
  std::int32_t lo;
  std::int32_t hi;
  bool is_signed;

  explicit UniformMap(const QuantizerState& st) {
    const Levels l = levels(st.bits, st.is_signed);
    threshold = st.effective_threshold();
    lp = static_cast<double>(l.positive);
    step = threshold / static_cast<double>(l.positive);
    lo = -l.negative;
    hi = l.positive;
    is_signed = st.is_signed;
  }

  std::int32_t level(double x) const {
    const double y = is_signed ? clip_signed(x, threshold) : clip_unsigned(x, threshold);
    // std::round breaks ties away from zero, which keeps q(-x) = -q(x).
    // Evaluated as (y L_P) / (alpha sigma), in the order the map is defined.
    const double r = std::round(y * lp / threshold);
    return static_cast<std::int32_t>(std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
  }
};

void check_state(const QuantizerState& st) {
  st.validate();
  if (st.mode != QuantMode::uniform) throw Error("quantize_forward: state is not in uniform mode");
}

}  // namespace

std::int32_t quantize_level(double x, const QuantizerState& st) { return UniformMap(st).level(x); }

QuantOutput quantize_forward(const Tensor& x, const QuantizerState& st) {
  check_state(st);
  const UniformMap map(st);
  QuantOutput out;
  out.values = Tensor(x.shape());
  out.levels.resize(x.size());
  out.step = map.step;
  out.max_level = map.hi;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::int32_t d = map.level(x[i]);
    out.levels[i] = d;
    out.values[i] = static_cast<double>(d) * map.step;
  }
  return out;
}

QuantOutput fake_quantize(const Tensor& x, const QuantizerState& st) {
  return st.mode == QuantMode::log2 ? quantize_log2_forward(x, st) : quantize_forward(x, st);
}

double pruning_threshold(const QuantizerState& st) {
  const double l = static_cast<double>(st.max_level());
  if (st.mode == QuantMode::log2) return st.threshold() / (std::sqrt(2.0) * l);
  return st.threshold() / (2.0 * l);
}

double pruning_ratio(const std::vector<std::int32_t>& levels) {
  if (levels.empty()) return 0.0;
  const auto zeros = std::count(levels.begin(), levels.end(), 0);
  return static_cast<double>(zeros) / static_cast<double>(levels.size());
}

QuantGrad quantize_backward(const Tensor& x, const Tensor& g_y, const QuantizerState& st) {
  if (x.shape() != g_y.shape()) {
    throw ShapeError("quantize_backward: input " + shape_str(x.shape()) + " vs gradient " + shape_str(g_y.shape()));
  }
  st.validate();
  const double t = st.effective_threshold();
  const double sigma = st.effective_sigma();
  const bool pass = st.is_signed && st.outside_grad == OutsideGrad::pass_through;
  QuantGrad g{Tensor(x.shape()), 0.0};
  double alpha_sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (st.is_signed) {
      if (std::abs(v) < t) {
        g.x[i] = g_y[i];
      } else {
        g.x[i] = pass ? g_y[i] : 0.0;
        alpha_sum += (v > 0.0 ? sigma : -sigma) * g_y[i];
      }
    } else {
      if (v >= t) {
        alpha_sum += sigma * g_y[i];
      } else if (v > 0.0) {
        g.x[i] = g_y[i];
      }
    }
  }
  g.alpha = st.grad_scale * alpha_sum + st.weight_decay * st.alpha;
  return g;
}

}  // namespace sdq
