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

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdq/ops.hpp"
#include "sdq/qlayer.hpp"
#include "sdq/tensor.hpp"

namespace sdq {

// Everything needed to resume training or to derive a lower-bit model.
// The byte layout is described in docs/file_formats.md.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  Model model;
  OptimizerConfig optimizer;
  std::vector<std::vector<double>> velocity;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  Rng rng;
  // Free-form, order preserved.
  std::vector<std::pair<std::string, std::string>> metadata;

  // Value for `key`, or `fallback` when absent.
  std::string meta(const std::string& key, const std::string& fallback = "") const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws ParseError on malformed or truncated input and Error on a version mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Restores private layer state; only the checkpoint codec and tests use it.
class CheckpointCodec {
 public:
  static void set_flags(QuantizedLayer& layer, bool quantized, bool has_act_quant, bool frozen);
};

}  // namespace sdq
