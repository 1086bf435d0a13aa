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

// Serial reference kernels against their OpenMP counterparts. Shapes follow
// the second conv of the desk network (16 -> 32 channels, 3x3, stride 2, on
// 14x14 inputs) at batch 64. The trailing argument is the thread count;
// times are wall clock since worker threads do not show in process CPU time.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "sdq/infer.hpp"
#include "sdq/kernels.hpp"
#include "sdq/tensor.hpp"

namespace {

using namespace sdq;

constexpr std::size_t kBatch = 64;

kernels::ConvGeometry desk_conv() {
  kernels::ConvGeometry g;
  g.channels = 16;
  g.height = g.width = 14;
  g.kernel_h = g.kernel_w = 3;
  g.stride = 2;
  g.padding = 1;
  return g;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void set_threads(const benchmark::State& state) { kernels::set_num_threads(static_cast<int>(state.range(0))); }

template <bool Serial>
void BM_Gemm(benchmark::State& state) {
  set_threads(state);
  const auto g = desk_conv();
  const std::size_t m = 32, k = g.patch(), n = kBatch * g.out_h() * g.out_w();
  const auto a = random_vector(m * k, 1), b = random_vector(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Serial) {
      kernels::serial::gemm(false, false, m, n, k, a.data(), b.data(), 0.0, c.data());
    } else {
      kernels::omp::gemm(false, false, m, n, k, a.data(), b.data(), 0.0, c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}

template <bool Serial>
void BM_Im2col(benchmark::State& state) {
  set_threads(state);
  const auto g = desk_conv();
  const auto x = random_vector(kBatch * g.channels * g.height * g.width, 3);
  std::vector<double> cols(g.patch() * kBatch * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (Serial) {
      kernels::serial::im2col(x.data(), kBatch, g, cols.data());
    } else {
      kernels::omp::im2col(x.data(), kBatch, g, cols.data());
    }
    benchmark::DoNotOptimize(cols.data());
  }
}

template <bool Serial>
void BM_Col2im(benchmark::State& state) {
  set_threads(state);
  const auto g = desk_conv();
  const auto cols = random_vector(g.patch() * kBatch * g.out_h() * g.out_w(), 4);
  std::vector<double> dx(kBatch * g.channels * g.height * g.width);
  for (auto _ : state) {
    if constexpr (Serial) {
      kernels::serial::col2im(cols.data(), kBatch, g, dx.data());
    } else {
      kernels::omp::col2im(cols.data(), kBatch, g, dx.data());
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

// 3-bit integer layer with the desk geometry.
IntegerLayer shift_add_layer(QuantMode mode) {
  const auto g = desk_conv();
  IntegerLayer l;
  l.in_c = g.channels;
  l.in_h = g.height;
  l.in_w = g.width;
  l.out = 32;
  l.kernel = 3;
  l.stride = 2;
  l.padding = 1;
  l.weight_mode = mode;
  l.in_max = 7;
  l.out_scale.assign(l.out, 1.0);
  l.out_bias.assign(l.out, 0.0);
  Rng rng(5);
  const std::size_t n = l.out * l.fan_in();
  if (mode == QuantMode::log2) {
    l.weight_max = 4;
    static constexpr std::int32_t grid[] = {-4, -2, -1, 0, 1, 2, 4};
    for (std::size_t i = 0; i < n; ++i) l.codes.push_back(encode_pow2(grid[rng.below(7)]));
  } else {
    l.weight_max = 3;
    for (std::size_t i = 0; i < n; ++i) l.weights.push_back(static_cast<std::int32_t>(rng.below(7)) - 3);
  }
  return l;
}

template <QuantMode Mode, IntKernel Kernel>
void BM_ShiftAdd(benchmark::State& state) {
  set_threads(state);
  const IntegerLayer l = shift_add_layer(Mode);
  IntTensor x{{kBatch, l.in_c, l.in_h, l.in_w}, {}};
  Rng rng(6);
  x.data.resize(kBatch * l.in_c * l.in_h * l.in_w);
  for (auto& v : x.data) v = static_cast<std::int32_t>(rng.below(8));
  for (auto _ : state) {
    auto acc = accumulate(l, x, 0, Kernel);
    benchmark::DoNotOptimize(acc.data());
  }
}

void threads(benchmark::internal::Benchmark* b) {
  for (int t : {1, 2, 4}) b->Arg(t);
  b->ArgName("threads")->Unit(benchmark::kMicrosecond)->UseRealTime();
}

void serial_only(benchmark::internal::Benchmark* b) { b->Arg(1)->ArgName("threads")->Unit(benchmark::kMicrosecond)->UseRealTime(); }

BENCHMARK(BM_Gemm<true>)->Name("gemm/serial")->Apply(serial_only);
BENCHMARK(BM_Gemm<false>)->Name("gemm/omp")->Apply(threads);
BENCHMARK(BM_Im2col<true>)->Name("im2col/serial")->Apply(serial_only);
BENCHMARK(BM_Im2col<false>)->Name("im2col/omp")->Apply(threads);
BENCHMARK(BM_Col2im<true>)->Name("col2im/serial")->Apply(serial_only);
BENCHMARK(BM_Col2im<false>)->Name("col2im/omp")->Apply(threads);
BENCHMARK(BM_ShiftAdd<QuantMode::log2, IntKernel::serial>)->Name("shiftadd_log2/serial")->Apply(serial_only);
BENCHMARK(BM_ShiftAdd<QuantMode::log2, IntKernel::omp>)->Name("shiftadd_log2/omp")->Apply(threads);
BENCHMARK(BM_ShiftAdd<QuantMode::uniform, IntKernel::serial>)->Name("multiply_add_uniform/serial")->Apply(serial_only);
BENCHMARK(BM_ShiftAdd<QuantMode::uniform, IntKernel::omp>)->Name("multiply_add_uniform/omp")->Apply(threads);

}  // namespace

BENCHMARK_MAIN();
