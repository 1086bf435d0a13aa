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

#include "sdq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sdq/kernels.hpp"

namespace sdq {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

std::size_t per_sample(const Tensor& x) { return x.size() / x.dim(0); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  kernels::omp::gemm(false, false, m, n, k, a.raw(), b.raw(), 0.0, out.raw());
  return out;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g_out) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(g_out.rank() == 2 && g_out.dim(0) == m && g_out.dim(1) == n, "matmul_backward: bad upstream gradient shape");
  MatmulGrads g{Tensor({m, k}), Tensor({k, n})};
  // dA = G B^T, dB = A^T G
  kernels::omp::gemm(false, true, m, k, n, g_out.raw(), b.raw(), 0.0, g.a.raw());
  kernels::omp::gemm(true, false, k, n, m, a.raw(), g_out.raw(), 0.0, g.b.raw());
  return g;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.rank() >= 2 && w.rank() == 2, "linear: expected batched input and 2-D weight");
  const std::size_t n = x.dim(0), in = per_sample(x), out_f = w.dim(0);
  require(w.dim(1) == in, "linear: input features " + std::to_string(in) + " != weight " + shape_str(w.shape()));
  require(bias.empty() || bias.size() == out_f, "linear: bias length mismatch");
  Tensor y({n, out_f});
  kernels::omp::gemm(false, true, n, out_f, in, x.raw(), w.raw(), 0.0, y.raw());
  if (!bias.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_f; ++j) y[i * out_f + j] += bias[j];
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& g_out, bool with_bias) {
  const std::size_t n = x.dim(0), in = per_sample(x), out_f = w.dim(0);
  require(g_out.rank() == 2 && g_out.dim(0) == n && g_out.dim(1) == out_f, "linear_backward: bad upstream gradient shape");
  LinearGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor()};
  kernels::omp::gemm(false, false, n, in, out_f, g_out.raw(), w.raw(), 0.0, g.x.raw());
  kernels::omp::gemm(true, false, out_f, in, n, g_out.raw(), x.raw(), 0.0, g.w.raw());
  if (with_bias) {
    g.bias = Tensor({out_f});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_f; ++j) g.bias[j] += g_out[i * out_f + j];
  }
  return g;
}

namespace {

kernels::ConvGeometry geometry(const Tensor& x, const Tensor& w, Conv2dParams p) {
  require(x.rank() == 4 && w.rank() == 4, "conv2d: expected 4-D input and weight");
  require(x.dim(1) == w.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) + " != weight " +
                                    shape_str(w.shape()));
  require(p.stride > 0, "conv2d: stride must be positive");
  kernels::ConvGeometry g;
  g.channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.kernel_h = w.dim(2);
  g.kernel_w = w.dim(3);
  g.stride = p.stride;
  g.padding = p.padding;
  require(g.height + 2 * g.padding >= g.kernel_h && g.width + 2 * g.padding >= g.kernel_w,
          "conv2d: kernel larger than padded input");
  return g;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dParams p) {
  const auto g = geometry(x, w, p);
  const std::size_t n = x.dim(0), o = w.dim(0), oh = g.out_h(), ow = g.out_w(), hw = oh * ow;
  require(bias.empty() || bias.size() == o, "conv2d: bias length mismatch");
  std::vector<double> cols(g.patch() * n * hw);
  kernels::omp::im2col(x.raw(), n, g, cols.data());
  std::vector<double> ymat(o * n * hw);
  kernels::omp::gemm(false, false, o, n * hw, g.patch(), w.raw(), cols.data(), 0.0, ymat.data());
  Tensor y({n, o, oh, ow});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < o; ++c) {
      const double b = bias.empty() ? 0.0 : bias[c];
      const double* src = ymat.data() + c * n * hw + s * hw;
      double* dst = y.raw() + (s * o + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + b;
    }
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& g_out, Conv2dParams p, bool with_bias) {
  const auto g = geometry(x, w, p);
  const std::size_t n = x.dim(0), o = w.dim(0), hw = g.out_h() * g.out_w();
  require(g_out.rank() == 4 && g_out.dim(0) == n && g_out.dim(1) == o && g_out.dim(2) == g.out_h() &&
              g_out.dim(3) == g.out_w(),
          "conv2d_backward: bad upstream gradient shape " + shape_str(g_out.shape()));
  std::vector<double> gmat(o * n * hw);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < o; ++c)
      std::copy_n(g_out.raw() + (s * o + c) * hw, hw, gmat.data() + c * n * hw + s * hw);

  std::vector<double> cols(g.patch() * n * hw);
  kernels::omp::im2col(x.raw(), n, g, cols.data());

  Conv2dGrads grads{Tensor(x.shape()), Tensor(w.shape()), Tensor()};
  kernels::omp::gemm(false, true, o, g.patch(), n * hw, gmat.data(), cols.data(), 0.0, grads.w.raw());
  kernels::omp::gemm(true, false, g.patch(), n * hw, o, w.raw(), gmat.data(), 0.0, cols.data());
  kernels::omp::col2im(cols.data(), n, g, grads.x.raw());
  if (with_bias) {
    grads.bias = Tensor({o});
    for (std::size_t c = 0; c < o; ++c) {
      double s = 0.0;
      const double* row = gmat.data() + c * n * hw;
      for (std::size_t i = 0; i < n * hw; ++i) s += row[i];
      grads.bias[c] = s;
    }
  }
  return grads;
}

BatchNorm::BatchNorm(std::size_t channels) {
  if (channels == 0) return;
  gamma = Tensor({channels}, 1.0);
  beta = Tensor({channels}, 0.0);
  running_mean = Tensor({channels}, 0.0);
  running_var = Tensor({channels}, 1.0);
}

Tensor batchnorm_forward(const Tensor& x, BatchNorm& bn, bool training, BatchNormCache* cache) {
  require(x.rank() >= 2 && x.dim(1) == bn.channels(),
          "batchnorm: input " + shape_str(x.shape()) + " vs " + std::to_string(bn.channels()) + " channels");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.size() / (n * c);
  const double count = static_cast<double>(n * inner);
  Tensor y(x.shape());
  if (cache) {
    cache->x_hat = Tensor(x.shape());
    cache->inv_std.assign(c, 0.0);
    cache->training = training;
  }
  const long channels = static_cast<long>(c);
  [[maybe_unused]] const int threads = kernels::num_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (long ch = 0; ch < channels; ++ch) {
    double mean, var;
    if (training) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.raw() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) s += p[j];
      }
      mean = s / count;
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.raw() + (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) v += (p[j] - mean) * (p[j] - mean);
      }
      var = v / count;
      const double unbiased = count > 1 ? v / (count - 1.0) : var;
      bn.running_mean[ch] = (1.0 - bn.momentum) * bn.running_mean[ch] + bn.momentum * mean;
      bn.running_var[ch] = (1.0 - bn.momentum) * bn.running_var[ch] + bn.momentum * unbiased;
    } else {
      mean = bn.running_mean[ch];
      var = bn.running_var[ch];
    }
    const double inv_std = 1.0 / std::sqrt(var + bn.eps);
    if (cache) cache->inv_std[ch] = inv_std;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        const double xh = (x[off + j] - mean) * inv_std;
        if (cache) cache->x_hat[off + j] = xh;
        y[off + j] = bn.gamma[ch] * xh + bn.beta[ch];
      }
    }
  }
  return y;
}

BatchNormGrads batchnorm_backward(const Tensor& g_out, const BatchNorm& bn, const BatchNormCache& cache) {
  require(g_out.shape() == cache.x_hat.shape(), "batchnorm_backward: gradient shape mismatch");
  const std::size_t n = g_out.dim(0), c = g_out.dim(1), inner = g_out.size() / (n * c);
  const double count = static_cast<double>(n * inner);
  BatchNormGrads g{Tensor(g_out.shape()), Tensor({c}), Tensor({c})};
  const long channels = static_cast<long>(c);
  [[maybe_unused]] const int threads = kernels::num_threads();
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
  for (long ch = 0; ch < channels; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        sum_g += g_out[off + j];
        sum_gx += g_out[off + j] * cache.x_hat[off + j];
      }
    }
    g.beta[ch] = sum_g;
    g.gamma[ch] = sum_gx;
    if (!cache.training) {
      // Running statistics are constants.
      const double k = bn.gamma[ch] * cache.inv_std[ch];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t off = (i * c + ch) * inner;
        for (std::size_t j = 0; j < inner; ++j) g.x[off + j] = k * g_out[off + j];
      }
      continue;
    }
    const double k = bn.gamma[ch] * cache.inv_std[ch] / count;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * inner;
      for (std::size_t j = 0; j < inner; ++j) {
        g.x[off + j] = k * (count * g_out[off + j] - sum_g - cache.x_hat[off + j] * sum_gx);
      }
    }
  }
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& g_out) {
  require(x.shape() == g_out.shape(), "relu_backward: shape mismatch");
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? g_out[i] : 0.0;
  return g;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels) {
  require(logits.rank() == 2 && logits.dim(0) == labels.size(), "softmax_cross_entropy: batch size mismatch");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  LossResult r;
  r.grad = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.raw() + i * k;
    require(labels[i] < k, "softmax_cross_entropy: label out of range");
    const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + k) - row);
    if (best == labels[i]) ++r.correct;
    const double mx = row[best];
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z) + mx;
    total += log_z - row[labels[i]];
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - log_z);
      r.grad[i * k + j] = (p - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.size() / logits.dim(0);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.raw() + i * k;
    out[i] = static_cast<std::size_t>(std::max_element(row, row + k) - row);
  }
  return out;
}

double cosine_lr(std::size_t step, std::size_t total, double lr0) {
  if (total == 0) return lr0;
  const double t = static_cast<double>(std::min(step, total)) / static_cast<double>(total + 1);
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * t));
}

void sgd_step(std::span<const ParamRef> params, const OptimizerConfig& config, double lr,
              std::vector<std::vector<double>>& velocity) {
  if (velocity.size() != params.size()) {
    velocity.resize(params.size());
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const ParamRef& ref = params[p];
    if (ref.value.size() != ref.grad.size()) throw ShapeError("sgd_step: value/gradient length mismatch");
    auto& v = velocity[p];
    if (v.size() != ref.value.size()) v.assign(ref.value.size(), 0.0);
    if (ref.frozen) continue;
    const double wd = ref.decay ? config.weight_decay : 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double g = ref.grad[i] + wd * ref.value[i];
      v[i] = config.momentum * v[i] + g;
      ref.value[i] -= lr * v[i];
    }
  }
}

void Sgd::step(std::span<const ParamRef> params, double lr) { sgd_step(params, config_, lr, velocity_); }

}  // namespace sdq
