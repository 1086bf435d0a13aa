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

// Dense inner loops used by the tensor ops. Each kernel exists twice:
//
//   serial::  textbook loops, kept as the reference the tests compare against.
//   omp::     cache-friendly loop order, parallelized with OpenMP over output
//             elements only. Every output element is reduced in a fixed order,
//             so results do not depend on the thread count.
//
// The ops in ops.hpp always call the omp:: variants.

#pragma once

#include <cstddef>

namespace sdq::kernels {

// Number of OpenMP threads used by omp:: kernels (1 when built without OpenMP).
void set_num_threads(int n);
int num_threads();
bool openmp_available();

// Geometry of one 2-D convolution over a single image.
struct ConvGeometry {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch() const { return channels * kernel_h * kernel_w; }
};

namespace serial {

// C[m x n] = op(A) * op(B) + beta * C. op(A) is m x k, op(B) is k x n, all
// row-major and densely packed.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double beta, double* c);

// Unfolds `batch` images [batch, C, H, W] into columns [C*kh*kw, batch*oh*ow].
void im2col(const double* x, std::size_t batch, const ConvGeometry& g, double* cols);
// Adjoint of im2col: scatters-adds columns back into dx (which is overwritten).
void col2im(const double* cols, std::size_t batch, const ConvGeometry& g, double* dx);

}  // namespace serial

namespace omp {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double beta, double* c);
void im2col(const double* x, std::size_t batch, const ConvGeometry& g, double* cols);
void col2im(const double* cols, std::size_t batch, const ConvGeometry& g, double* dx);

}  // namespace omp

}  // namespace sdq::kernels
