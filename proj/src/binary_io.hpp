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

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdq/dataset.hpp"
#include "sdq/tensor.hpp"

namespace sdq::detail {

// Little-endian writer; doubles are stored as their IEEE-754 bit pattern.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void boolean(bool v) { u8(v ? 1 : 0); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  void shape(const Shape& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) u64(d);
  }
  void tensor(const Tensor& t) {
    shape(t.shape());
    for (double d : t.data()) f64(d);
  }

  std::vector<std::uint8_t>& buffer() { return out_; }
  std::size_t size() const { return out_.size(); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> in, std::string what) : in_(in), what_(std::move(what)) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  bool boolean() {
    const std::size_t at = pos_;
    const std::uint8_t v = u8();
    if (v > 1) throw ParseError(what_ + ": invalid boolean byte", at);
    return v == 1;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string str() { return bytes(count(1)); }
  std::vector<double> f64s() {
    std::vector<double> v(count(8));
    for (double& d : v) d = f64();
    return v;
  }
  Shape shape() {
    const std::size_t at = pos_;
    const std::uint32_t rank = u32();
    if (rank > 8) throw ParseError(what_ + ": implausible tensor rank", at);
    Shape s(rank);
    for (auto& d : s) d = u64();
    return s;
  }
  Tensor tensor() {
    const std::size_t at = pos_;
    Shape s = shape();
    std::size_t n = 1;
    for (auto d : s) {
      if (d == 0 || d > remaining()) throw ParseError(what_ + ": invalid tensor shape", at);
      n *= d;
    }
    if (s.empty()) return Tensor();
    if (n > remaining() / 8) throw ParseError(what_ + ": truncated tensor data", in_.size());
    std::vector<double> v(n);
    for (double& d : v) d = f64();
    return Tensor(std::move(s), std::move(v));
  }

  // Element count for a following array of `elem`-byte items, bounds checked.
  std::size_t count(std::size_t elem) {
    const std::uint64_t n = u64();
    if (n > remaining() / elem) throw ParseError(what_ + ": truncated array", in_.size());
    return static_cast<std::size_t>(n);
  }
  void expect(std::string_view magic) {
    if (bytes(magic.size()) != magic) throw ParseError(what_ + ": bad magic", 0);
  }
  void finish() const {
    if (pos_ != in_.size()) throw ParseError(what_ + ": trailing bytes", pos_);
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n) {
    if (n > remaining()) throw ParseError(what_ + ": truncated input", in_.size());
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path);
}

}  // namespace sdq::detail
