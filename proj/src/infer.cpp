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

#include "sdq/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "model_io.hpp"
#include "sdq/kernels.hpp"
#include "sdq/ops.hpp"

namespace sdq {

namespace {

constexpr int kMaxShift = 62;
constexpr int kMaxExponent = 30;
constexpr std::int64_t kBiasLimit = std::int64_t{1} << 62;

}  // namespace

Requant make_requant(double scale, double offset) {
  if (!std::isfinite(scale) || !std::isfinite(offset)) throw Error("make_requant: non-finite scale or offset");
  int shift = kMaxShift;
  if (scale != 0.0) {
    int e = 0;
    std::frexp(scale, &e);  // |scale| = f * 2^e, f in [0.5, 1)
    shift = std::min(31 - e, kMaxShift);
    if (shift < 0) throw Error("make_requant: scale " + std::to_string(scale) + " exceeds 2^31");
  }
  // The bias must stay representable; give up multiplier bits if it is not.
  while (shift > 0 && std::abs(std::ldexp(offset, shift)) >= static_cast<double>(kBiasLimit)) --shift;
  double m = std::round(std::ldexp(scale, shift));
  if (std::abs(m) >= 2147483648.0) {  // f * 2^31 rounded up to 2^31
    --shift;
    m = std::round(std::ldexp(scale, shift));
  }
  if (std::abs(std::ldexp(offset, shift)) >= static_cast<double>(kBiasLimit)) {
    throw Error("make_requant: offset " + std::to_string(offset) + " is out of range");
  }
  Requant r;
  r.multiplier = static_cast<std::int32_t>(m);
  r.shift = shift;
  r.bias = static_cast<std::int64_t>(std::llround(std::ldexp(offset, shift)));
  return r;
}

std::int64_t apply_requant(std::int64_t acc, const Requant& r) {
  const __int128 v = static_cast<__int128>(acc) * r.multiplier + r.bias;
  __int128 q;
  if (r.shift == 0) {
    q = v;
  } else {
    const __int128 half = static_cast<__int128>(1) << (r.shift - 1);
    q = v >= 0 ? (v + half) >> r.shift : -((-v + half) >> r.shift);
  }
  constexpr auto lo = std::numeric_limits<std::int64_t>::min();
  constexpr auto hi = std::numeric_limits<std::int64_t>::max();
  return static_cast<std::int64_t>(std::clamp<__int128>(q, lo, hi));
}

std::int64_t IntegerLayer::weight_at(std::size_t i) const {
  return weight_mode == QuantMode::log2 ? codes[i].value() : weights[i];
}

std::uint64_t IntegerLayer::accumulator_bound() const {
  const unsigned __int128 b = static_cast<unsigned __int128>(fan_in()) *
                              static_cast<unsigned __int128>(std::max<std::int64_t>(weight_max, 0)) *
                              static_cast<unsigned __int128>(std::max(in_max, 0));
  const auto cap = static_cast<unsigned __int128>(std::numeric_limits<std::uint64_t>::max());
  return static_cast<std::uint64_t>(std::min(b, cap));
}

namespace {

void check_layer(const IntegerLayer& l, std::size_t index) {
  const std::string where = "integer layer " + std::to_string(index) + ": ";
  if (l.out == 0 || l.in_c == 0 || l.kernel == 0 || l.stride == 0) throw Error(where + "empty geometry");
  if (l.in_h + 2 * l.padding < l.kernel || l.in_w + 2 * l.padding < l.kernel) {
    throw Error(where + "kernel does not fit the input");
  }
  const std::size_t n = l.out * l.fan_in();
  if (l.weight_mode == QuantMode::log2) {
    if (l.codes.size() != n) throw Error(where + "weight code count mismatch");
    for (const auto& c : l.codes)
      if (c.exponent > kMaxExponent) throw Error(where + "weight exponent above 2^30");
  } else if (l.weights.size() != n) {
    throw Error(where + "weight count mismatch");
  }
  if (l.in_max <= 0) throw Error(where + "input grid must have a positive maximum");
  if (l.weight_max <= 0) throw Error(where + "weight grid must have a positive maximum");
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t w = l.weight_at(i);
    if (w > l.weight_max || w < -l.weight_max) throw Error(where + "weight level outside the grid");
  }
  if (l.acc_bits != 32 && l.acc_bits != 64) throw Error(where + "accumulator width must be 32 or 64");
  if (l.requantize) {
    if (l.requant.size() != l.out || l.out_max <= 0) throw Error(where + "requantization table mismatch");
    for (const auto& r : l.requant)
      if (r.shift < 0 || r.shift > kMaxShift) throw Error(where + "requantization shift out of range");
  } else if (l.out_scale.size() != l.out || l.out_bias.size() != l.out) {
    throw Error(where + "output affine mismatch");
  }
}

void check_input(const IntegerLayer& l, const IntTensor& x, std::size_t index) {
  const std::size_t per = l.in_c * l.in_h * l.in_w;
  if (x.shape.size() < 2 || x.data.size() != shape_numel(x.shape) || x.data.size() != x.shape[0] * per) {
    throw ShapeError("integer layer " + std::to_string(index) + ": input " + shape_str(x.shape) +
                     " does not hold samples of " + std::to_string(per) + " values");
  }
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (x.data[i] < 0 || x.data[i] > l.in_max) {
      throw Error("integer layer " + std::to_string(index) + ": input " + std::to_string(x.data[i]) + " at " +
                  std::to_string(i) + " is outside [0, " + std::to_string(l.in_max) + "]");
    }
  }
}

// Adds one weight-activation product; returns true on overflow.
template <typename Acc>
inline bool mac(Acc& acc, std::int32_t a, std::int64_t weight, const Pow2Code* code) {
  if (code) {
    if (code->zero) return false;
    const std::int64_t term = static_cast<std::int64_t>(a) << code->exponent;
    return code->negative ? __builtin_sub_overflow(acc, term, &acc) : __builtin_add_overflow(acc, term, &acc);
  }
  return __builtin_add_overflow(acc, weight * a, &acc);
}

template <typename Acc>
void accumulate_serial(const IntegerLayer& l, const IntTensor& x, std::size_t index, std::vector<std::int64_t>& out) {
  const std::size_t n = x.shape[0], oh = l.out_h(), ow = l.out_w(), fan = l.fan_in();
  const bool log2 = l.weight_mode == QuantMode::log2;
  out.assign(n * l.out * oh * ow, 0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < l.out; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          Acc acc = 0;
          for (std::size_t c = 0; c < l.in_c; ++c)
            for (std::size_t ki = 0; ki < l.kernel; ++ki)
              for (std::size_t kj = 0; kj < l.kernel; ++kj) {
                const long iy = static_cast<long>(y * l.stride + ki) - static_cast<long>(l.padding);
                const long ix = static_cast<long>(xo * l.stride + kj) - static_cast<long>(l.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(l.in_h) || ix >= static_cast<long>(l.in_w)) continue;
                const std::int32_t a = x.data[((s * l.in_c + c) * l.in_h + iy) * l.in_w + ix];
                const std::size_t wi = o * fan + (c * l.kernel + ki) * l.kernel + kj;
                const bool ovf = log2 ? mac(acc, a, 0, &l.codes[wi]) : mac(acc, a, l.weights[wi], nullptr);
                if (ovf) throw OverflowError(index, l.acc_bits);
              }
          out[((s * l.out + o) * oh + y) * ow + xo] = acc;
        }
}

// im2col over integers, then one pass per output channel that streams every
// nonzero weight across all columns. Partial sums for an output element are
// added in the same (c, ki, kj) order as the serial reference.
template <typename Acc>
void accumulate_omp(const IntegerLayer& l, const IntTensor& x, std::size_t index, std::vector<std::int64_t>& out) {
  const std::size_t n = x.shape[0], oh = l.out_h(), ow = l.out_w(), fan = l.fan_in();
  const std::size_t plane = oh * ow, ld = n * plane;
  const bool log2 = l.weight_mode == QuantMode::log2;
  [[maybe_unused]] const int threads = kernels::num_threads();

  std::vector<std::int32_t> cols(fan * ld);
  const long rows = static_cast<long>(fan);
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (long row = 0; row < rows; ++row) {
    const std::size_t kj = static_cast<std::size_t>(row) % l.kernel;
    const std::size_t ki = (static_cast<std::size_t>(row) / l.kernel) % l.kernel;
    const std::size_t c = static_cast<std::size_t>(row) / (l.kernel * l.kernel);
    std::int32_t* dst = cols.data() + static_cast<std::size_t>(row) * ld;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t y = 0; y < oh; ++y) {
        const long iy = static_cast<long>(y * l.stride + ki) - static_cast<long>(l.padding);
        for (std::size_t xo = 0; xo < ow; ++xo) {
          const long ix = static_cast<long>(xo * l.stride + kj) - static_cast<long>(l.padding);
          const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(l.in_h) && ix < static_cast<long>(l.in_w);
          dst[(s * oh + y) * ow + xo] = inside ? x.data[((s * l.in_c + c) * l.in_h + iy) * l.in_w + ix] : 0;
        }
      }
  }

  out.assign(n * l.out * plane, 0);
  std::vector<unsigned char> overflow(l.out, 0);
  const long outs = static_cast<long>(l.out);
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (long o = 0; o < outs; ++o) {
    std::vector<Acc> acc(ld, 0);
    bool ovf = false;
    for (std::size_t p = 0; p < fan; ++p) {
      const std::size_t wi = static_cast<std::size_t>(o) * fan + p;
      const std::int32_t* src = cols.data() + p * ld;
      if (log2) {
        const Pow2Code code = l.codes[wi];
        if (code.zero) continue;
        for (std::size_t j = 0; j < ld; ++j) ovf |= mac(acc[j], src[j], 0, &code);
      } else {
        const std::int64_t w = l.weights[wi];
        if (w == 0) continue;
        for (std::size_t j = 0; j < ld; ++j) ovf |= mac(acc[j], src[j], w, nullptr);
      }
    }
    overflow[static_cast<std::size_t>(o)] = ovf;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t q = 0; q < plane; ++q) out[(s * l.out + o) * plane + q] = acc[s * plane + q];
  }
  if (std::any_of(overflow.begin(), overflow.end(), [](unsigned char f) { return f != 0; })) {
    throw OverflowError(index, l.acc_bits);
  }
}

Shape layer_out_shape(const IntegerLayer& l, std::size_t n) {
  if (l.kind == LayerKind::linear) return {n, l.out};
  return {n, l.out, l.out_h(), l.out_w()};
}

// Fresh float layer holding only parameters (no forward caches).
QuantizedLayer float_copy(const QuantizedLayer& src) {
  Rng scratch(0);
  QuantizedLayer l(src.spec(), src.input_shape(), src.input_relu(), scratch);
  l.weight = src.weight;
  l.bias = src.bias;
  l.bn = src.bn;
  return l;
}

Tensor run_float(const std::vector<QuantizedLayer>& layers, const Tensor& x) {
  Tensor h = x;
  for (const auto& layer : layers) {
    QuantizedLayer l = layer;
    h = l.forward(h, false);
  }
  return h;
}

QuantizerState act_state(const QuantizedLayer& l) {
  QuantizerState st = l.act_quant;
  st.sigma = l.act_sigma.value();
  return st;
}

}  // namespace

std::vector<std::int64_t> accumulate(const IntegerLayer& layer, const IntTensor& x, std::size_t layer_index,
                                     IntKernel kernel) {
  check_layer(layer, layer_index);
  check_input(layer, x, layer_index);
  std::vector<std::int64_t> out;
  if (layer.acc_bits == 32) {
    kernel == IntKernel::serial ? accumulate_serial<std::int32_t>(layer, x, layer_index, out)
                                : accumulate_omp<std::int32_t>(layer, x, layer_index, out);
  } else {
    kernel == IntKernel::serial ? accumulate_serial<std::int64_t>(layer, x, layer_index, out)
                                : accumulate_omp<std::int64_t>(layer, x, layer_index, out);
  }
  return out;
}

IntegerModel export_integer_model(const Model& model) {
  if (!model.eval_mode()) throw Error("export requires a model in eval mode");
  const auto& L = model.layers;
  const std::size_t count = L.size();
  std::size_t begin = 0;
  while (begin < count && !L[begin].quantized()) ++begin;
  if (begin == count) throw Error("export: model has no quantized layer");
  std::size_t end = begin;
  while (end < count && L[end].quantized()) ++end;
  for (std::size_t i = end; i < count; ++i) {
    if (L[i].quantized()) throw Error("export: unquantized middle layer " + std::to_string(end));
  }
  for (std::size_t i = begin; i < end; ++i) {
    if (!L[i].has_act_quant()) {
      throw Error("export: quantized layer " + std::to_string(i) + " has no activation quantizer");
    }
    if (!L[i].act_sigma.initialized()) {
      throw Error("export: activation sigma of layer " + std::to_string(i) + " was never observed");
    }
  }

  IntegerModel im;
  im.input = model.spec().input;
  for (std::size_t i = 0; i < begin; ++i) im.prefix.push_back(float_copy(L[i]));
  for (std::size_t i = end; i < count; ++i) im.suffix.push_back(float_copy(L[i]));
  im.input_quant = act_state(L[begin]);

  for (std::size_t i = begin; i < end; ++i) {
    const QuantizedLayer& src = L[i];
    IntegerLayer il;
    il.kind = src.spec().kind;
    il.out = src.spec().out;
    if (il.kind == LayerKind::conv2d) {
      il.in_c = src.input_shape()[0];
      il.in_h = src.input_shape()[1];
      il.in_w = src.input_shape()[2];
      il.kernel = src.spec().kernel;
      il.stride = src.spec().stride;
      il.padding = src.spec().padding;
    } else {
      il.in_c = shape_numel(src.input_shape());
    }
    il.weight_mode = src.weight_quant.mode;
    const QuantOutput wq = src.quantized_weights();
    if (il.weight_mode == QuantMode::log2) {
      il.codes.reserve(wq.levels.size());
      for (auto v : wq.levels) il.codes.push_back(encode_pow2(v));
    } else {
      il.weights = wq.levels;
    }
    il.weight_max = wq.max_level;
    const QuantizerState in = act_state(src);
    il.in_max = static_cast<std::int32_t>(in.max_level());
    const double unit = in.step() * wq.step;

    std::vector<double> a(il.out), b(il.out);
    for (std::size_t c = 0; c < il.out; ++c) {
      a[c] = unit;
      b[c] = src.bias[c];
      if (src.bn) {
        const auto& bn = *src.bn;
        const double inv_std = 1.0 / std::sqrt(bn.running_var[c] + bn.eps);
        a[c] = unit * bn.gamma[c] * inv_std;
        b[c] = bn.gamma[c] * ((src.bias[c] - bn.running_mean[c]) * inv_std) + bn.beta[c];
      }
    }
    if (i + 1 < end) {
      const QuantizerState next = act_state(L[i + 1]);
      il.requantize = true;
      il.out_max = static_cast<std::int32_t>(next.max_level());
      const double to_grid = static_cast<double>(next.max_level()) / next.effective_threshold();
      for (std::size_t c = 0; c < il.out; ++c) il.requant.push_back(make_requant(a[c] * to_grid, b[c] * to_grid));
    } else {
      il.out_scale = std::move(a);
      il.out_bias = std::move(b);
    }
    const std::uint64_t bound = il.accumulator_bound();
    if (bound <= static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max())) {
      il.acc_bits = 32;
    } else if (bound <= static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      il.acc_bits = 64;
    } else {
      throw Error("export: layer " + std::to_string(i) + " accumulator bound exceeds 64 bits");
    }
    check_layer(il, im.layers.size());
    im.layers.push_back(std::move(il));
  }
  return im;
}

Tensor run_prefix(const IntegerModel& im, const Tensor& x) { return run_float(im.prefix, x); }

IntTensor quantize_input(const IntegerModel& im, const Tensor& x) {
  if (im.layers.empty()) throw Error("integer model has no layers");
  const QuantOutput q = quantize_forward(x, im.input_quant);
  return {x.shape(), q.levels};
}

Tensor shiftadd_forward(const IntegerModel& im, const IntTensor& x_int, IntKernel kernel) {
  if (im.layers.empty()) throw Error("integer model has no layers");
  IntTensor h = x_int;
  Tensor real;
  for (std::size_t li = 0; li < im.layers.size(); ++li) {
    const IntegerLayer& l = im.layers[li];
    const std::vector<std::int64_t> acc = accumulate(l, h, li, kernel);
    const std::size_t n = h.shape[0], plane = l.out_h() * l.out_w();
    const Shape shape = layer_out_shape(l, n);
    if (l.requantize) {
      if (li + 1 == im.layers.size()) throw Error("last integer layer cannot requantize");
      IntTensor next{shape, std::vector<std::int32_t>(acc.size())};
      for (std::size_t i = 0; i < acc.size(); ++i) {
        const Requant& r = l.requant[(i / plane) % l.out];
        next.data[i] = static_cast<std::int32_t>(std::clamp<std::int64_t>(apply_requant(acc[i], r), 0, l.out_max));
      }
      h = std::move(next);
    } else {
      if (li + 1 != im.layers.size()) throw Error("integer layer " + std::to_string(li) + " must requantize");
      real = Tensor(shape);
      for (std::size_t i = 0; i < acc.size(); ++i) {
        const std::size_t c = (i / plane) % l.out;
        real[i] = l.out_scale[c] * static_cast<double>(acc[i]) + l.out_bias[c];
      }
    }
  }
  return run_float(im.suffix, real);
}

Tensor integer_predict(const IntegerModel& im, const Tensor& x, IntKernel kernel) {
  return shiftadd_forward(im, quantize_input(im, run_prefix(im, x)), kernel);
}

EquivalenceReport verify_equivalence(Model& float_model, const IntegerModel& im, const Tensor& inputs,
                                     std::size_t batch_size) {
  if (inputs.rank() < 2) throw ShapeError("verify_equivalence expects batched inputs");
  EquivalenceReport rep;
  const std::size_t n = inputs.dim(0), per = inputs.size() / n;
  std::size_t agree = 0;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t m = std::min(batch_size, n - begin);
    Shape shape = inputs.shape();
    shape[0] = m;
    const Tensor batch(shape, std::vector<double>(inputs.values().begin() + begin * per,
                                                  inputs.values().begin() + (begin + m) * per));
    const Tensor ref = float_model.forward(batch, false);
    const Tensor got = integer_predict(im, batch);
    if (ref.shape() != got.shape()) throw ShapeError("float and integer logits differ in shape");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      rep.max_abs_deviation = std::max(rep.max_abs_deviation, std::abs(ref[i] - got[i]));
      rep.logit_scale = std::max(rep.logit_scale, std::abs(ref[i]));
    }
    const auto a = argmax_rows(ref), b = argmax_rows(got);
    for (std::size_t i = 0; i < m; ++i) agree += a[i] == b[i];
  }
  rep.samples = n;
  rep.normalized_deviation = rep.logit_scale > 0.0 ? rep.max_abs_deviation / rep.logit_scale : rep.max_abs_deviation;
  rep.argmax_agreement = n ? static_cast<double>(agree) / static_cast<double>(n) : 1.0;
  return rep;
}

namespace {

using detail::ByteReader;
using detail::ByteWriter;

constexpr std::string_view kMagic = "SDQI";
constexpr std::uint32_t kLayerTag = 0x5259414c;  // "LAYR" little-endian

void write_float_layers(ByteWriter& w, const std::vector<QuantizedLayer>& layers) {
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    detail::write_layer_spec(w, l.spec());
    w.shape(l.input_shape());
    w.boolean(l.input_relu());
    w.tensor(l.weight);
    w.tensor(l.bias);
    detail::write_batchnorm(w, l.bn);
  }
}

std::vector<QuantizedLayer> read_float_layers(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > 1024) throw ParseError(r.what() + ": implausible float layer count", r.pos() - 4);
  std::vector<QuantizedLayer> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.pos();
    const LayerSpec spec = detail::read_layer_spec(r);
    const Shape in = r.shape();
    const bool relu = r.boolean();
    Rng scratch(0);
    QuantizedLayer l;
    try {
      l = QuantizedLayer(spec, in, relu, scratch);
    } catch (const Error& e) {
      throw ParseError(r.what() + ": invalid float layer: " + e.what(), at);
    }
    detail::read_tensor_into(r, l.weight, "weight");
    detail::read_tensor_into(r, l.bias, "bias");
    detail::read_batchnorm(r, l.bn);
    out.push_back(std::move(l));
  }
  return out;
}

void write_int_layer(ByteWriter& w, const IntegerLayer& l) {
  ByteWriter body;
  body.u8(static_cast<std::uint8_t>(l.kind));
  for (std::size_t v : {l.in_c, l.in_h, l.in_w, l.out, l.kernel, l.stride, l.padding}) body.u64(v);
  body.u8(static_cast<std::uint8_t>(l.weight_mode));
  if (l.weight_mode == QuantMode::log2) {
    body.u64(l.codes.size());
    for (const auto& c : l.codes) body.u8(c.pack());
  } else {
    body.u64(l.weights.size());
    for (auto v : l.weights) body.i32(v);
  }
  body.i64(l.weight_max);
  body.i32(l.in_max);
  body.u8(static_cast<std::uint8_t>(l.acc_bits));
  body.boolean(l.requantize);
  body.i32(l.out_max);
  if (l.requantize) {
    body.u64(l.requant.size());
    for (const auto& r : l.requant) {
      body.i32(r.multiplier);
      body.i32(r.shift);
      body.i64(r.bias);
    }
  } else {
    body.f64s(l.out_scale);
    body.f64s(l.out_bias);
  }
  w.u32(kLayerTag);
  w.u64(body.size());
  w.bytes(std::string_view(reinterpret_cast<const char*>(body.buffer().data()), body.size()));
}

IntegerLayer read_int_layer(ByteReader& r) {
  const std::size_t at = r.pos();
  if (r.u32() != kLayerTag) throw ParseError(r.what() + ": missing layer section tag", at);
  const std::uint64_t length = r.u64();
  const std::size_t start = r.pos();
  IntegerLayer l;
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw ParseError(r.what() + ": invalid layer kind", start);
  l.kind = static_cast<LayerKind>(kind);
  for (std::size_t* v : {&l.in_c, &l.in_h, &l.in_w, &l.out, &l.kernel, &l.stride, &l.padding}) *v = r.u64();
  const std::size_t mode_at = r.pos();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw ParseError(r.what() + ": invalid weight mode", mode_at);
  l.weight_mode = static_cast<QuantMode>(mode);
  if (l.weight_mode == QuantMode::log2) {
    l.codes.resize(r.count(1));
    for (auto& c : l.codes) c = Pow2Code::unpack(r.u8());
  } else {
    l.weights.resize(r.count(4));
    for (auto& v : l.weights) v = r.i32();
  }
  l.weight_max = r.i64();
  l.in_max = r.i32();
  l.acc_bits = r.u8();
  l.requantize = r.boolean();
  l.out_max = r.i32();
  if (l.requantize) {
    l.requant.resize(r.count(16));
    for (auto& q : l.requant) {
      q.multiplier = r.i32();
      q.shift = r.i32();
      q.bias = r.i64();
    }
  } else {
    l.out_scale = r.f64s();
    l.out_bias = r.f64s();
  }
  if (r.pos() - start != length) throw ParseError(r.what() + ": layer section length mismatch", start - 8);
  return l;
}

}  // namespace

std::vector<std::uint8_t> encode_integer_model(const IntegerModel& im) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(IntegerModel::kVersion);
  w.shape(im.input);
  write_float_layers(w, im.prefix);
  detail::write_quantizer(w, im.input_quant);
  w.u32(static_cast<std::uint32_t>(im.layers.size()));
  for (const auto& l : im.layers) write_int_layer(w, l);
  write_float_layers(w, im.suffix);
  return std::move(w.buffer());
}

IntegerModel decode_integer_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "integer model");
  r.expect(kMagic);
  const std::uint32_t version = r.u32();
  if (version != IntegerModel::kVersion) {
    throw Error("unsupported integer model version " + std::to_string(version) + " (expected " +
                std::to_string(IntegerModel::kVersion) + ")");
  }
  IntegerModel im;
  im.input = r.shape();
  im.prefix = read_float_layers(r);
  im.input_quant = detail::read_quantizer(r);
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 1024) throw ParseError("integer model: implausible layer count", r.pos() - 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t at = r.pos();
    im.layers.push_back(read_int_layer(r));
    try {
      check_layer(im.layers.back(), i);
    } catch (const Error& e) {
      throw ParseError(std::string("integer model: ") + e.what(), at);
    }
  }
  im.suffix = read_float_layers(r);
  r.finish();
  return im;
}

void save_integer_model(const IntegerModel& im, const std::string& path) {
  detail::write_file(path, encode_integer_model(im));
}

IntegerModel load_integer_model(const std::string& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_integer_model(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

}  // namespace sdq
