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

#include "sdq/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace sdq {

Shape Dataset::sample_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw Error("Dataset::slice: range exceeds " + std::to_string(size()) + " samples");
  if (count == 0) return {};
  const std::size_t stride = images.size() / size();
  Shape shape = images.shape();
  shape[0] = count;
  Dataset out;
  out.images = Tensor(shape, std::vector<double>(images.values().begin() + begin * stride,
                                                 images.values().begin() + (begin + count) * stride));
  out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  return out;
}

Tensor Dataset::gather(std::span<const std::size_t> rows) const {
  const std::size_t stride = images.size() / size();
  Shape shape = images.shape();
  shape[0] = rows.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(images.raw() + rows[i] * stride, stride, out.raw() + i * stride);
  }
  return out;
}

std::vector<std::uint8_t> Dataset::gather_labels(std::span<const std::size_t> rows) const {
  std::vector<std::uint8_t> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
  return out;
}

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  auto read_u32 = [&](std::size_t off) {
    if (off + 4 > bytes.size()) throw ParseError("IDX: truncated header", bytes.size());
    return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
           (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
  };
  const std::uint32_t magic = read_u32(0);
  if ((magic >> 16) != 0) throw ParseError("IDX: bad magic", 0);
  const std::uint32_t type = (magic >> 8) & 0xff;
  const std::uint32_t rank = magic & 0xff;
  if (type != 0x08) throw ParseError("IDX: only unsigned-byte payloads are supported", 2);
  if (rank == 0) throw ParseError("IDX: zero-rank array", 3);
  IdxArray out;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint32_t d = read_u32(4 + 4 * i);
    out.dims.push_back(d);
    count *= d;
  }
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header + count) {
    throw ParseError("IDX: truncated payload, expected " + std::to_string(count) + " bytes", bytes.size());
  }
  out.data.assign(bytes.begin() + header, bytes.begin() + header + count);
  return out;
}

IdxArray read_idx_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open IDX file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_idx(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

Dataset mnist_from_idx(const IdxArray& images, const IdxArray& labels) {
  if (images.dims.size() != 3) throw Error("MNIST images must be a rank-3 IDX array");
  if (labels.dims.size() != 1) throw Error("MNIST labels must be a rank-1 IDX array");
  if (images.dims[0] != labels.dims[0]) throw Error("MNIST image/label counts differ");
  constexpr double kMean = 0.1307, kStd = 0.3081;
  const std::size_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
  Dataset d;
  d.images = Tensor({n, 1, h, w});
  for (std::size_t i = 0; i < images.data.size(); ++i) {
    d.images[i] = (images.data[i] / 255.0 - kMean) / kStd;
  }
  d.labels = labels.data;
  for (auto l : d.labels)
    if (l > 9) throw Error("MNIST label out of range: " + std::to_string(l));
  return d;
}

Dataset make_synthetic(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed, std::uint64_t stream) {
  if (spec.classes < 2 || spec.classes > 255) throw Error("synthetic data needs 2..255 classes");
  const std::size_t pixels = spec.height * spec.width;
  Rng proto_rng = Rng(seed).fork(0x70726f746f);
  std::vector<double> prototypes(spec.classes * pixels);
  for (double& v : prototypes) v = proto_rng.normal();
  Rng rng = Rng(seed).fork(stream + 1);
  Dataset d;
  d.images = Tensor({count, 1, spec.height, spec.width});
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto label = static_cast<std::uint8_t>(rng.below(spec.classes));
    d.labels[i] = label;
    for (std::size_t p = 0; p < pixels; ++p) {
      d.images[i * pixels + p] = prototypes[label * pixels + p] + spec.noise * rng.normal();
    }
  }
  return d;
}

std::string default_data_dir() {
  if (const char* env = std::getenv("SDQ_DATA_DIR"); env && *env) return env;
#ifdef SDQ_DEFAULT_DATA_DIR
  return SDQ_DEFAULT_DATA_DIR;
#else
  return "data";
#endif
}

DataSplits load_dataset(const DataSpec& spec, std::uint64_t seed) {
  DataSplits s;
  if (spec.source == "synthetic") {
    s.train = make_synthetic(spec.synthetic, spec.train_count, seed, 0);
    s.val = make_synthetic(spec.synthetic, spec.val_count, seed, 1);
    s.test = make_synthetic(spec.synthetic, spec.test_count, seed, 2);
    return s;
  }
  if (spec.source != "mnist") throw Error("unknown data source '" + spec.source + "'");
  const std::filesystem::path root = std::filesystem::path(spec.dir.empty() ? default_data_dir() : spec.dir);
  std::filesystem::path dir = root / "mnist";
  if (!std::filesystem::exists(dir / "train-images-idx3-ubyte")) dir = root;
  const Dataset train = mnist_from_idx(read_idx_file((dir / "train-images-idx3-ubyte").string()),
                                       read_idx_file((dir / "train-labels-idx1-ubyte").string()));
  const Dataset test = mnist_from_idx(read_idx_file((dir / "t10k-images-idx3-ubyte").string()),
                                      read_idx_file((dir / "t10k-labels-idx1-ubyte").string()));
  if (spec.train_count + spec.val_count > train.size()) {
    throw Error("requested " + std::to_string(spec.train_count + spec.val_count) + " train+val samples but " +
                dir.string() + " has " + std::to_string(train.size()));
  }
  if (spec.test_count > test.size()) throw Error("requested more test samples than available");
  s.train = train.slice(0, spec.train_count);
  s.val = train.slice(spec.train_count, spec.val_count);
  s.test = test.slice(0, spec.test_count);
  return s;
}

}  // namespace sdq
