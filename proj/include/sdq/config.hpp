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
#include <string>
#include <vector>

#include "sdq/dataset.hpp"
#include "sdq/qlayer.hpp"
#include "sdq/training.hpp"

namespace sdq {

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  int threads = 1;
};

struct ProgressiveConfig {
  std::string checkpoint;  // higher-bit source
  int bits = 2;
  bool rescale = true;
  // Gradient scales swept by `progressive --grid`, each with and without re-scaling.
  std::vector<double> grid_scales{1.0, 0.01, 0.0};
};

struct Config {
  RunConfig run;
  DataSpec data;
  ModelSpec model;
  QuantConfig quant;
  TrainPlan train;
  ProgressiveConfig progressive;

  // Throws Error naming the offending key.
  void validate() const;
};

// Desk network: conv 16 -> conv 32 -> linear 10 on 1x28x28 inputs.
ModelSpec default_model_spec();
Config default_config();

// Grammar in docs/config.md. Unknown sections or keys, duplicates and
// malformed values are errors.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
// Canonical text that parse_config() maps back to an equal Config.
std::string format_config(const Config& config);

// "conv 16 k3 s2 p1 bn; linear 10"
std::vector<LayerSpec> parse_layers(const std::string& text);
std::string format_layers(const std::vector<LayerSpec>& layers);

}  // namespace sdq
