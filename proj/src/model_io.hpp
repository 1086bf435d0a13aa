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

#include <optional>

#include "binary_io.hpp"
#include "sdq/qlayer.hpp"

namespace sdq::detail {

inline void write_quantizer(ByteWriter& w, const QuantizerState& q) {
  w.f64(q.alpha);
  w.f64(q.sigma);
  w.i32(q.bits);
  w.boolean(q.is_signed);
  w.u8(static_cast<std::uint8_t>(q.mode));
  w.f64(q.grad_scale);
  w.f64(q.weight_decay);
  w.u8(static_cast<std::uint8_t>(q.outside_grad));
}

inline QuantizerState read_quantizer(ByteReader& r) {
  QuantizerState q;
  q.alpha = r.f64();
  q.sigma = r.f64();
  q.bits = r.i32();
  q.is_signed = r.boolean();
  const std::size_t at = r.pos();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw ParseError(r.what() + ": invalid quantizer mode", at);
  q.mode = static_cast<QuantMode>(mode);
  q.grad_scale = r.f64();
  q.weight_decay = r.f64();
  const std::uint8_t outside = r.u8();
  if (outside > 1) throw ParseError(r.what() + ": invalid outside-gradient flag", at);
  q.outside_grad = static_cast<OutsideGrad>(outside);
  return q;
}

inline void write_layer_spec(ByteWriter& w, const LayerSpec& l) {
  w.u8(static_cast<std::uint8_t>(l.kind));
  w.u64(l.out);
  w.u64(l.kernel);
  w.u64(l.stride);
  w.u64(l.padding);
  w.boolean(l.batchnorm);
}

inline LayerSpec read_layer_spec(ByteReader& r) {
  LayerSpec l;
  const std::size_t at = r.pos();
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw ParseError(r.what() + ": invalid layer kind", at);
  l.kind = static_cast<LayerKind>(kind);
  l.out = r.u64();
  l.kernel = r.u64();
  l.stride = r.u64();
  l.padding = r.u64();
  l.batchnorm = r.boolean();
  return l;
}

inline void write_spec(ByteWriter& w, const ModelSpec& spec) {
  w.shape(spec.input);
  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (const auto& l : spec.layers) write_layer_spec(w, l);
}

inline ModelSpec read_spec(ByteReader& r) {
  ModelSpec spec;
  spec.input = r.shape();
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 1024) throw ParseError(r.what() + ": implausible layer count", r.pos() - 4);
  for (std::uint32_t i = 0; i < n; ++i) spec.layers.push_back(read_layer_spec(r));
  return spec;
}

// Batchnorm presence flag followed by its tensors and constants.
inline void write_batchnorm(ByteWriter& w, const std::optional<BatchNorm>& bn) {
  w.boolean(bn.has_value());
  if (!bn) return;
  w.tensor(bn->gamma);
  w.tensor(bn->beta);
  w.tensor(bn->running_mean);
  w.tensor(bn->running_var);
  w.f64(bn->momentum);
  w.f64(bn->eps);
}

inline void read_tensor_into(ByteReader& r, Tensor& dst, const char* name) {
  const std::size_t at = r.pos();
  Tensor t = r.tensor();
  if (t.shape() != dst.shape()) {
    throw ParseError(r.what() + ": " + name + " shape " + shape_str(t.shape()) + " does not match " +
                         shape_str(dst.shape()),
                     at);
  }
  dst = std::move(t);
}

inline void read_batchnorm(ByteReader& r, std::optional<BatchNorm>& bn) {
  const std::size_t at = r.pos();
  if (r.boolean() != bn.has_value()) throw ParseError(r.what() + ": batchnorm presence mismatch", at);
  if (!bn) return;
  read_tensor_into(r, bn->gamma, "gamma");
  read_tensor_into(r, bn->beta, "beta");
  read_tensor_into(r, bn->running_mean, "running mean");
  read_tensor_into(r, bn->running_var, "running var");
  bn->momentum = r.f64();
  bn->eps = r.f64();
}

}  // namespace sdq::detail
