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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sdq/tensor.hpp"

namespace sdq {

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Labeled images, [n, c, h, w].
struct Dataset {
  Tensor images;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;
  // Rows [begin, begin + count).
  Dataset slice(std::size_t begin, std::size_t count) const;
  // Gathers the given rows into a batch.
  Tensor gather(std::span<const std::size_t> rows) const;
  std::vector<std::uint8_t> gather_labels(std::span<const std::size_t> rows) const;
};

struct DataSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Raw IDX array: big-endian magic 0x000008TT (TT = 0x08 for unsigned bytes)
// followed by one big-endian u32 per dimension and the payload.
struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;
};

IdxArray parse_idx(std::span<const std::uint8_t> bytes);
IdxArray read_idx_file(const std::string& path);

// Images scaled to [0, 1] then standardized with the usual MNIST mean/std.
Dataset mnist_from_idx(const IdxArray& images, const IdxArray& labels);

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.35;
};

// Gaussian mixture over images: each class is a fixed random prototype
// (drawn from `seed`) and each sample adds i.i.d. normal pixel noise.
Dataset make_synthetic(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed, std::uint64_t stream);

struct DataSpec {
  std::string source = "mnist";  // mnist | synthetic
  std::string dir;               // empty: $SDQ_DATA_DIR, then the build default
  std::size_t train_count = 7000;
  std::size_t val_count = 1000;
  std::size_t test_count = 2000;
  SyntheticSpec synthetic;
};

// Directory searched for mnist/ when DataSpec::dir is empty.
std::string default_data_dir();

// MNIST: train and val are consecutive slices of the training file, test
// comes from the t10k file. Synthetic: three independent streams of `seed`.
DataSplits load_dataset(const DataSpec& spec, std::uint64_t seed);

}  // namespace sdq
