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

// Small models and synthetic data shared by the training, inference and IO tests.

#pragma once

#include "sdq/dataset.hpp"
#include "sdq/qlayer.hpp"
#include "sdq/training.hpp"

namespace sdq::fixtures {

inline LayerSpec conv(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad, bool bn = true) {
  return LayerSpec{LayerKind::conv2d, out, k, stride, pad, bn};
}

inline LayerSpec linear(std::size_t out, bool bn = false) { return LayerSpec{LayerKind::linear, out, 1, 1, 0, bn}; }

// conv -> conv -> conv -> linear on 1x8x8; the middle two convs are quantized.
inline ModelSpec toy_spec(std::size_t classes = 4) {
  return ModelSpec{{1, 8, 8}, {conv(6, 3, 1, 1), conv(8, 3, 2, 1), conv(8, 3, 1, 1), linear(classes)}};
}

inline QuantConfig toy_quant(int bits, QuantMode mode = QuantMode::uniform) {
  QuantConfig qc;
  qc.weight_bits = qc.act_bits = bits;
  qc.weight_mode = mode;
  return qc;
}

inline DataSplits toy_data(std::uint64_t seed = 5, std::size_t train = 192, std::size_t val = 64,
                           std::size_t test = 64) {
  SyntheticSpec s;
  return DataSplits{make_synthetic(s, train, seed, 0), make_synthetic(s, val, seed, 1), make_synthetic(s, test, seed, 2)};
}

inline TrainPlan toy_plan(std::size_t epochs = 2) {
  TrainPlan p;
  p.epochs = epochs;
  p.batch_size = 32;
  p.optimizer.lr = 0.05;
  return p;
}

// A trained eval-mode toy model.
inline Model trained_toy(int bits, QuantMode mode, std::uint64_t seed = 1, std::size_t epochs = 2) {
  Rng rng(seed);
  Model m(toy_spec(), toy_quant(bits, mode), rng);
  const DataSplits data = toy_data(seed + 10);
  train(toy_plan(epochs), m, data, Rng(seed).fork(7));
  return m;
}

}  // namespace sdq::fixtures
