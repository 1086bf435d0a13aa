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

#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <vector>

#include "oracle.hpp"
#include "sdq/kernels.hpp"
#include "sdq/ops.hpp"

namespace sdq {
namespace {

using oracle::random_tensor;

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

TEST(CosineLr, StartsAtBaseRate) { EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.1), 0.1); }

TEST(CosineLr, NonincreasingAndPositive) {
  double prev = cosine_lr(0, 50, 0.2);
  for (std::size_t s = 1; s < 50; ++s) {
    const double lr = cosine_lr(s, 50, 0.2);
    EXPECT_LE(lr, prev);
    EXPECT_GT(lr, 0.0);
    prev = lr;
  }
}

TEST(Matmul, IdentityLeavesInputUnchanged) {
  Rng rng(3);
  const Tensor a = random_tensor({4, 5}, rng);
  Tensor eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye[i * 5 + i] = 1.0;
  const Tensor y = matmul(a, eye);
  EXPECT_EQ(y.shape(), a.shape());
  EXPECT_TRUE(bitwise_equal(y.values(), a.values()));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({4, 2})), ShapeError);
}

TEST(Matmul, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  const Tensor g = random_tensor({3, 2}, rng);
  const auto grads = matmul_backward(a, b, g);
  auto f = [&] {
    const Tensor y = matmul(a, b);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
    return s;
  };
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_LT(oracle::rel_error(grads.a[i], oracle::central_diff(f, a.raw()[i], 1e-5)), 1e-4);
  for (std::size_t i = 0; i < b.size(); ++i)
    EXPECT_LT(oracle::rel_error(grads.b[i], oracle::central_diff(f, b.raw()[i], 1e-5)), 1e-4);
}

TEST(Conv2d, ForwardMatchesDirectLoops) {
  Rng rng(5);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 0}}) {
    const Tensor x = random_tensor({2, 3, 7, 6}, rng);
    const Tensor w = random_tensor({4, 3, 3, 3}, rng);
    const Tensor bias = random_tensor({4}, rng);
    const Tensor y = conv2d_forward(x, w, bias, {stride, pad});
    const Tensor ref = oracle::conv2d(x, w, bias, stride, pad);
    ASSERT_EQ(y.shape(), ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

// Gradient check of sum(g * conv(x, w) + b) on a 1x1x4x4 input and 3x3 kernel.
void check_conv_backward(std::size_t stride, std::size_t pad) {
  Rng rng(21 + stride * 7 + pad);
  Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tensor w = random_tensor({2, 1, 3, 3}, rng);
  Tensor bias = random_tensor({2}, rng);
  const Shape out = conv2d_forward(x, w, bias, {stride, pad}).shape();
  const Tensor g = random_tensor(out, rng);
  const auto grads = conv2d_backward(x, w, g, {stride, pad}, true);
  auto f = [&] {
    const Tensor y = conv2d_forward(x, w, bias, {stride, pad});
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
    return s;
  };
  const double h = 1e-4;
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, oracle::rel_error(grads.x[i], oracle::central_diff(f, x.raw()[i], h)));
  for (std::size_t i = 0; i < w.size(); ++i)
    worst = std::max(worst, oracle::rel_error(grads.w[i], oracle::central_diff(f, w.raw()[i], h)));
  for (std::size_t i = 0; i < bias.size(); ++i)
    worst = std::max(worst, oracle::rel_error(grads.bias[i], oracle::central_diff(f, bias.raw()[i], h)));
  EXPECT_LT(worst, 1e-4) << "stride " << stride << " padding " << pad;
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  check_conv_backward(1, 0);
  check_conv_backward(1, 1);
  check_conv_backward(2, 1);
}

TEST(Linear, BackwardMatchesFiniteDifferences) {
  Rng rng(8);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor bias = random_tensor({4}, rng);
  const Tensor g = random_tensor({3, 4}, rng);
  const auto grads = linear_backward(x, w, g, true);
  auto f = [&] {
    const Tensor y = linear_forward(x, w, bias);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_LT(oracle::rel_error(grads.x[i], oracle::central_diff(f, x.raw()[i], 1e-5)), 1e-4);
  for (std::size_t i = 0; i < w.size(); ++i)
    EXPECT_LT(oracle::rel_error(grads.w[i], oracle::central_diff(f, w.raw()[i], 1e-5)), 1e-4);
  for (std::size_t i = 0; i < bias.size(); ++i)
    EXPECT_LT(oracle::rel_error(grads.bias[i], oracle::central_diff(f, bias.raw()[i], 1e-5)), 1e-4);
}

TEST(BatchNorm, TrainingBackwardMatchesFiniteDifferences) {
  Rng rng(13);
  Tensor x = random_tensor({4, 3, 2, 2}, rng);
  BatchNorm bn(3);
  for (std::size_t c = 0; c < 3; ++c) {
    bn.gamma[c] = rng.uniform(0.5, 1.5);
    bn.beta[c] = rng.uniform(-0.5, 0.5);
  }
  const Tensor g = random_tensor(x.shape(), rng);
  BatchNormCache cache;
  BatchNorm probe = bn;
  batchnorm_forward(x, probe, true, &cache);
  const auto grads = batchnorm_backward(g, bn, cache);
  auto f = [&] {
    BatchNorm scratch = bn;
    const Tensor y = batchnorm_forward(x, scratch, true, nullptr);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * g[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_LT(oracle::rel_error(grads.x[i], oracle::central_diff(f, x.raw()[i], 1e-5), 1e-5), 1e-4);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_LT(oracle::rel_error(grads.gamma[c], oracle::central_diff(f, bn.gamma.raw()[c], 1e-5)), 1e-4);
    EXPECT_LT(oracle::rel_error(grads.beta[c], oracle::central_diff(f, bn.beta.raw()[c], 1e-5)), 1e-4);
  }
}

TEST(BatchNorm, TrainingUpdatesRunningStatsEvalDoesNot) {
  Rng rng(2);
  const Tensor x = random_tensor({8, 2, 3, 3}, rng);
  BatchNorm bn(2);
  batchnorm_forward(x, bn, true, nullptr);
  const BatchNorm after = bn;
  EXPECT_NE(after.running_mean[0], 0.0);
  batchnorm_forward(x, bn, false, nullptr);
  EXPECT_EQ(bn.running_mean.values(), after.running_mean.values());
  EXPECT_EQ(bn.running_var.values(), after.running_var.values());
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Tensor logits = random_tensor({3, 5}, rng, -2, 2);
  const std::vector<std::uint8_t> labels{1, 4, 0};
  const LossResult r = softmax_cross_entropy(logits, labels);
  auto f = [&] { return softmax_cross_entropy(logits, labels).loss; };
  for (std::size_t i = 0; i < logits.size(); ++i)
    EXPECT_LT(oracle::rel_error(r.grad[i], oracle::central_diff(f, logits.raw()[i], 1e-5)), 1e-4);
}

TEST(Relu, ForwardAndBackward) {
  const Tensor x({4}, std::vector<double>{-1.0, 0.0, 0.5, 2.0});
  const Tensor y = relu_forward(x);
  EXPECT_EQ(y.values(), (std::vector<double>{0.0, 0.0, 0.5, 2.0}));
  const Tensor g = relu_backward(x, Tensor({4}, 1.0));
  EXPECT_EQ(g.values(), (std::vector<double>{0.0, 0.0, 1.0, 1.0}));
}

TEST(Sgd, MomentumAndDecayFollowHeavyBall) {
  std::vector<double> w{1.0, -2.0};
  std::vector<double> g{0.5, 0.25};
  std::vector<ParamRef> params{{w, g, true, false}};
  Sgd opt({0.1, 0.9, 0.01});
  opt.step(params, 0.1);
  // v = g + wd w
  const double v0 = 0.5 + 0.01 * 1.0, v1 = 0.25 + 0.01 * -2.0;
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.1 * v0);
  EXPECT_DOUBLE_EQ(w[1], -2.0 - 0.1 * v1);
  const double w0 = w[0];
  opt.step(params, 0.1);
  const double v0b = 0.9 * v0 + (0.5 + 0.01 * w0);
  EXPECT_DOUBLE_EQ(w[0], w0 - 0.1 * v0b);
}

TEST(Sgd, FrozenParamsAreSkipped) {
  std::vector<double> w{1.0};
  std::vector<double> g{1.0};
  std::vector<ParamRef> params{{w, g, true, true}};
  Sgd opt;
  opt.step(params, 0.5);
  EXPECT_EQ(w[0], 1.0);
}

TEST(Rng, DeterministicAndForksIndependent) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  const Rng root(42);
  Rng f1 = root.fork(1), f1b = root.fork(1), f2 = root.fork(2);
  const auto x = f1.next_u64();
  EXPECT_EQ(x, f1b.next_u64());
  EXPECT_NE(x, f2.next_u64());
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
  }
}

// The parallel kernels partition over outputs only, so every output element
// is produced by the same sequence of operations as in the serial kernel.
class KernelParity : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { kernels::set_num_threads(GetParam()); }
  void TearDown() override { kernels::set_num_threads(1); }
};

// The reference and parallel gemm sum in different orders (dot vs. axpy), so
// they agree to roundoff; the parallel one is bit-identical for any thread count.
TEST_P(KernelParity, GemmMatchesReferenceAndIsThreadCountInvariant) {
  Rng rng(31);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const std::size_t m = 37, n = 29, k = 41;
      const Tensor a = random_tensor({m * k}, rng);
      const Tensor b = random_tensor({k * n}, rng);
      const Tensor c0 = random_tensor({m * n}, rng);
      std::vector<double> cs = c0.values(), co = c0.values(), c1 = c0.values();
      kernels::serial::gemm(ta, tb, m, n, k, a.raw(), b.raw(), 0.5, cs.data());
      kernels::omp::gemm(ta, tb, m, n, k, a.raw(), b.raw(), 0.5, co.data());
      kernels::set_num_threads(1);
      kernels::omp::gemm(ta, tb, m, n, k, a.raw(), b.raw(), 0.5, c1.data());
      kernels::set_num_threads(GetParam());
      EXPECT_TRUE(bitwise_equal(co, c1)) << "trans_a " << ta << " trans_b " << tb;
      for (std::size_t i = 0; i < cs.size(); ++i) ASSERT_NEAR(cs[i], co[i], 1e-12);
    }
}

TEST_P(KernelParity, Im2colCol2imBitIdenticalAndAdjoint) {
  Rng rng(32);
  kernels::ConvGeometry g;
  g.channels = 3;
  g.height = 9;
  g.width = 7;
  g.kernel_h = g.kernel_w = 3;
  g.stride = 2;
  g.padding = 1;
  const std::size_t batch = 2, cols_n = g.patch() * batch * g.out_h() * g.out_w();
  const Tensor x = random_tensor({batch * g.channels * g.height * g.width}, rng);
  std::vector<double> cs(cols_n), co(cols_n);
  kernels::serial::im2col(x.raw(), batch, g, cs.data());
  kernels::omp::im2col(x.raw(), batch, g, co.data());
  EXPECT_TRUE(bitwise_equal(cs, co));

  const Tensor c = random_tensor({cols_n}, rng);
  std::vector<double> ds(x.size()), dd(x.size());
  kernels::serial::col2im(c.raw(), batch, g, ds.data());
  kernels::omp::col2im(c.raw(), batch, g, dd.data());
  EXPECT_TRUE(bitwise_equal(ds, dd));

  // <im2col(x), c> == <x, col2im(c)>
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < cols_n; ++i) lhs += cs[i] * c[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * ds[i];
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::fabs(lhs)));
}

TEST_P(KernelParity, ConvForwardIndependentOfThreadCount) {
  Rng rng(33);
  const Tensor x = random_tensor({3, 2, 8, 8}, rng);
  const Tensor w = random_tensor({5, 2, 3, 3}, rng);
  const Tensor y = conv2d_forward(x, w, Tensor(), {1, 1});
  kernels::set_num_threads(1);
  const Tensor ref = conv2d_forward(x, w, Tensor(), {1, 1});
  EXPECT_TRUE(bitwise_equal(y.values(), ref.values()));
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelParity, ::testing::Values(1, 2, 4));

}  // namespace
}  // namespace sdq
