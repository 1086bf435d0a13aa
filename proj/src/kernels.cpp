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

#include "sdq/kernels.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdq::kernels {

namespace {
int g_num_threads = 1;

inline void scale_row(double* c, std::size_t n, double beta) {
  if (beta == 0.0) {
    std::fill(c, c + n, 0.0);
  } else if (beta != 1.0) {
    for (std::size_t j = 0; j < n; ++j) c[j] *= beta;
  }
}

// Four independent partial sums; fixed association order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += a * x[j];
}

}  // namespace

void set_num_threads(int n) { g_num_threads = std::max(1, n); }
int num_threads() {
#ifdef _OPENMP
  return g_num_threads;
#else
  return 1;
#endif
}
bool openmp_available() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

namespace serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double beta, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = (beta == 0.0 ? 0.0 : beta * c[i * n + j]) + s;
    }
  }
}

void im2col(const double* x, std::size_t batch, const ConvGeometry& g, double* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t ld = batch * oh * ow;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const std::size_t row = (c * g.kernel_h + ki) * g.kernel_w + kj;
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.padding);
              const long ix = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.padding);
              double v = 0.0;
              if (iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) && ix < static_cast<long>(g.width)) {
                v = x[((n * g.channels + c) * g.height + iy) * g.width + ix];
              }
              cols[row * ld + (n * oh + y) * ow + xo] = v;
            }
      }
}

void col2im(const double* cols, std::size_t batch, const ConvGeometry& g, double* dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t ld = batch * oh * ow;
  std::fill(dx, dx + batch * g.channels * g.height * g.width, 0.0);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki)
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const std::size_t row = (c * g.kernel_h + ki) * g.kernel_w + kj;
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.padding);
              const long ix = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.padding);
              if (iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) && ix < static_cast<long>(g.width)) {
                dx[((n * g.channels + c) * g.height + iy) * g.width + ix] += cols[row * ld + (n * oh + y) * ow + xo];
              }
            }
      }
}

}  // namespace serial

namespace omp {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double beta, double* c) {
  const long rows = static_cast<long>(m);
  [[maybe_unused]] const int threads = num_threads();
  if (!trans_b) {
    // Row of C accumulated as a sequence of axpys over rows of B.
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (long i = 0; i < rows; ++i) {
      double* crow = c + i * n;
      scale_row(crow, n, beta);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        if (av != 0.0) axpy(av, b + p * n, crow, n);
      }
    }
    return;
  }
  if (!trans_a) {
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
    for (long i = 0; i < rows; ++i) {
      double* crow = c + i * n;
      const double* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double s = dot(arow, b + j * k, k);
        crow[j] = (beta == 0.0 ? 0.0 : beta * crow[j]) + s;
      }
    }
    return;
  }
  // A^T B^T is not used by the ops; fall back to the reference loop.
  serial::gemm(trans_a, trans_b, m, n, k, a, b, beta, c);
}

void im2col(const double* x, std::size_t batch, const ConvGeometry& g, double* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t ld = batch * oh * ow;
  const long rows = static_cast<long>(g.patch());
  [[maybe_unused]] const int threads = num_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (long row = 0; row < rows; ++row) {
    const std::size_t kj = row % g.kernel_w;
    const std::size_t ki = (row / g.kernel_w) % g.kernel_h;
    const std::size_t c = row / (g.kernel_w * g.kernel_h);
    double* out = cols + row * ld;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* plane = x + (n * g.channels + c) * g.height * g.width;
      for (std::size_t y = 0; y < oh; ++y) {
        const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.padding);
        double* dst = out + (n * oh + y) * ow;
        if (iy < 0 || iy >= static_cast<long>(g.height)) {
          std::fill(dst, dst + ow, 0.0);
          continue;
        }
        const double* src = plane + iy * g.width;
        for (std::size_t xo = 0; xo < ow; ++xo) {
          const long ix = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.padding);
          dst[xo] = (ix >= 0 && ix < static_cast<long>(g.width)) ? src[ix] : 0.0;
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t batch, const ConvGeometry& g, double* dx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t ld = batch * oh * ow;
  const std::size_t kk = g.kernel_h * g.kernel_w;
  const long channels = static_cast<long>(g.channels);
  [[maybe_unused]] const int threads = num_threads();
  // Each channel's planes are written only by its own kh*kw rows, visited in
  // the same order as the reference.
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (long c = 0; c < channels; ++c) {
    for (std::size_t n = 0; n < batch; ++n) {
      double* plane = dx + (n * g.channels + c) * g.height * g.width;
      std::fill(plane, plane + g.height * g.width, 0.0);
    }
    for (std::size_t r = 0; r < kk; ++r) {
      const std::size_t ki = r / g.kernel_w, kj = r % g.kernel_w;
      const double* in = cols + (c * kk + r) * ld;
      for (std::size_t n = 0; n < batch; ++n) {
        double* plane = dx + (n * g.channels + c) * g.height * g.width;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const double* src = in + (n * oh + y) * ow;
          double* dst = plane + iy * g.width;
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const long ix = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.padding);
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst[ix] += src[xo];
          }
        }
      }
    }
  }
}

}  // namespace omp

}  // namespace sdq::kernels
