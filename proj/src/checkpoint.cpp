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

#include "sdq/checkpoint.hpp"

#include "binary_io.hpp"
#include "model_io.hpp"

namespace sdq {

namespace {

using detail::ByteReader;
using detail::ByteWriter;
using detail::read_quantizer;
using detail::read_spec;
using detail::write_quantizer;
using detail::write_spec;

constexpr std::string_view kMagic = "SDQC";

void write_quant_config(ByteWriter& w, const QuantConfig& qc) {
  w.boolean(qc.enabled);
  w.i32(qc.weight_bits);
  w.i32(qc.act_bits);
  w.u8(static_cast<std::uint8_t>(qc.weight_mode));
  w.f64(qc.alpha_init);
  w.f64(qc.weight_grad_scale);
  w.f64(qc.act_grad_scale);
  w.f64(qc.alpha_weight_decay);
  w.f64(qc.sigma_momentum);
  w.u8(static_cast<std::uint8_t>(qc.weight_outside_grad));
  w.boolean(qc.quantize_first);
  w.boolean(qc.quantize_last);
}

QuantConfig read_quant_config(ByteReader& r) {
  QuantConfig qc;
  qc.enabled = r.boolean();
  qc.weight_bits = r.i32();
  qc.act_bits = r.i32();
  const std::size_t at = r.pos();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw ParseError(r.what() + ": invalid weight mode", at);
  qc.weight_mode = static_cast<QuantMode>(mode);
  qc.alpha_init = r.f64();
  qc.weight_grad_scale = r.f64();
  qc.act_grad_scale = r.f64();
  qc.alpha_weight_decay = r.f64();
  qc.sigma_momentum = r.f64();
  const std::uint8_t outside = r.u8();
  if (outside > 1) throw ParseError(r.what() + ": invalid outside-gradient flag", at);
  qc.weight_outside_grad = static_cast<OutsideGrad>(outside);
  qc.quantize_first = r.boolean();
  qc.quantize_last = r.boolean();
  return qc;
}

}  // namespace

std::string Checkpoint::meta(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return fallback;
}

void CheckpointCodec::set_flags(QuantizedLayer& layer, bool quantized, bool has_act_quant, bool frozen) {
  layer.quantized_ = quantized;
  layer.has_act_quant_ = has_act_quant;
  layer.frozen_ = frozen;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(Checkpoint::kVersion);
  write_spec(w, ckpt.model.spec());
  write_quant_config(w, ckpt.model.quant_config());
  w.boolean(ckpt.model.eval_mode());
  for (const auto& l : ckpt.model.layers) {
    w.tensor(l.weight);
    w.tensor(l.bias);
    detail::write_batchnorm(w, l.bn);
    w.boolean(l.quantized());
    w.boolean(l.has_act_quant());
    w.boolean(l.frozen());
    w.f64(l.frozen_weight_sigma);
    write_quantizer(w, l.weight_quant);
    write_quantizer(w, l.act_quant);
    w.f64(l.act_sigma.momentum());
    w.u8(static_cast<std::uint8_t>(l.act_sigma.source()));
    w.boolean(l.act_sigma.initialized());
    w.f64(l.act_sigma.value());
  }
  w.f64(ckpt.optimizer.lr);
  w.f64(ckpt.optimizer.momentum);
  w.f64(ckpt.optimizer.weight_decay);
  w.u64(ckpt.velocity.size());
  for (const auto& v : ckpt.velocity) w.f64s(v);
  w.u64(ckpt.epoch);
  w.u64(ckpt.step);
  w.u64(ckpt.rng.seed());
  w.u64(ckpt.rng.counter());
  w.u64(ckpt.metadata.size());
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect(kMagic);
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(Checkpoint::kVersion) + ")");
  }
  ModelSpec spec = read_spec(r);
  const QuantConfig qc = read_quant_config(r);
  Rng scratch(0);
  Checkpoint ckpt;
  try {
    ckpt.model = Model(spec, qc, scratch);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint: invalid model: ") + e.what(), r.pos());
  }
  ckpt.model.set_eval(r.boolean());
  for (auto& l : ckpt.model.layers) {
    detail::read_tensor_into(r, l.weight, "weight");
    detail::read_tensor_into(r, l.bias, "bias");
    detail::read_batchnorm(r, l.bn);
    const bool quantized = r.boolean();
    const bool has_act = r.boolean();
    const bool frozen = r.boolean();
    CheckpointCodec::set_flags(l, quantized, has_act, frozen);
    l.frozen_weight_sigma = r.f64();
    l.weight_quant = read_quantizer(r);
    l.act_quant = read_quantizer(r);
    const double momentum = r.f64();
    const std::size_t src_at = r.pos();
    const std::uint8_t source = r.u8();
    if (source > 1) throw ParseError("checkpoint: invalid sigma source", src_at);
    const bool initialized = r.boolean();
    const double value = r.f64();
    try {
      l.act_sigma = SigmaTracker(momentum, static_cast<SigmaSource>(source));
      l.act_sigma.restore(value, initialized);
      if (quantized) l.weight_quant.validate();
      if (has_act) l.act_quant.validate();
    } catch (const Error& e) {
      throw ParseError(std::string("checkpoint: invalid quantizer state: ") + e.what(), src_at);
    }
  }
  ckpt.optimizer.lr = r.f64();
  ckpt.optimizer.momentum = r.f64();
  ckpt.optimizer.weight_decay = r.f64();
  const std::size_t nv = r.count(8);
  ckpt.velocity.resize(nv);
  for (auto& v : ckpt.velocity) v = r.f64s();
  ckpt.epoch = r.u64();
  ckpt.step = r.u64();
  const std::uint64_t seed = r.u64();
  const std::uint64_t counter = r.u64();
  ckpt.rng = Rng(seed, counter);
  const std::size_t nm = r.count(16);
  for (std::size_t i = 0; i < nm; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    ckpt.metadata.emplace_back(std::move(k), std::move(v));
  }
  r.finish();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  detail::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

}  // namespace sdq
