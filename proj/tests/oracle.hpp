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

// Reference evaluations written directly from the defining formulas. They
// share no code with the library beyond Tensor, so a disagreement points at
// one side or the other rather than at a common helper.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sdq/tensor.hpp"

namespace sdq::oracle {

inline std::int64_t uniform_lp(int bits, bool is_signed) {
  return is_signed ? (std::int64_t{1} << (bits - 1)) - 1 : (std::int64_t{1} << bits) - 1;
}

inline std::int64_t uniform_ln(int bits, bool is_signed) { return is_signed ? uniform_lp(bits, true) : 0; }

// Clip at threshold t: signed x if |x| < t else sign(x) t; unsigned fuses ReLU.
inline double clip(double x, double t, bool is_signed) {
  if (is_signed) {
    if (std::fabs(x) < t) return x;
    return x < 0 ? -t : t;
  }
  if (x <= 0) return 0.0;
  return x < t ? x : t;
}

inline double round_half_away(double v) { return v < 0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5); }

// y_d = clamp(round(y L_P / t), -L_N, L_P)
inline std::int64_t uniform_level(double x, double t, int bits, bool is_signed) {
  const std::int64_t lp = uniform_lp(bits, is_signed);
  const std::int64_t ln = uniform_ln(bits, is_signed);
  const double y = clip(x, t, is_signed);
  std::int64_t d = static_cast<std::int64_t>(round_half_away(y * static_cast<double>(lp) / t));
  if (d > lp) d = lp;
  if (d < -ln) d = -ln;
  return d;
}

inline std::int64_t log2_lp2(int bits) { return std::int64_t{1} << ((std::int64_t{1} << (bits - 1)) - 2); }

// y_int = round(log2(|y| L_p2 / t)) with ties up; y_p2 = clamp(sign(y) 2^y_int) or 0.
inline std::int64_t log2_level(double x, double t, int bits) {
  const std::int64_t lp2 = log2_lp2(bits);
  const double y = clip(x, t, true);
  if (y == 0.0) return 0;
  const double v = std::fabs(y) * static_cast<double>(lp2) / t;
  const double yint = std::floor(std::log2(v) + 0.5);
  if (yint < 0) return 0;
  std::int64_t mag = std::int64_t{1} << static_cast<int>(yint);
  if (mag > lp2) mag = lp2;
  return y < 0 ? -mag : mag;
}

// Direct 7-loop convolution, x [n,c,h,w], w [o,c,k,k].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({n, o, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = bias.empty() ? 0.0 : bias[oc];
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(wd)) continue;
                s += x[((b * c + ic) * h + r) * wd + q] * w[((oc * c + ic) * kh + u) * kw + v];
              }
          y[((b * o + oc) * oh + i) * ow + j] = s;
        }
  return y;
}

// Central difference of a scalar function of buffer[i].
inline double central_diff(const std::function<double()>& f, double& slot, double h) {
  const double saved = slot;
  slot = saved + h;
  const double fp = f();
  slot = saved - h;
  const double fm = f();
  slot = saved;
  return (fp - fm) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
// turning roundoff into large relative errors.
inline double rel_error(double a, double b, double floor = 1e-6) {
  const double d = std::fabs(a - b);
  const double m = std::max({std::fabs(a), std::fabs(b), floor});
  return d / m;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace sdq::oracle
