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

#include <cmath>
#include <vector>

#include "oracle.hpp"
#include "sdq/quant.hpp"

namespace sdq {
namespace {

QuantizerState state(double alpha, double sigma, int bits, bool is_signed) {
  QuantizerState st;
  st.alpha = alpha;
  st.sigma = sigma;
  st.bits = bits;
  st.is_signed = is_signed;
  return st;
}

Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

TEST(Levels, Examples) {
  EXPECT_EQ(levels(3, true).negative, 3);
  EXPECT_EQ(levels(3, true).positive, 3);
  EXPECT_EQ(levels(2, true).negative, 1);
  EXPECT_EQ(levels(2, true).positive, 1);
  EXPECT_EQ(levels(3, false).negative, 0);
  EXPECT_EQ(levels(3, false).positive, 7);
  EXPECT_THROW(levels(1, true), Error);
}

TEST(Levels, MatchOracleForAllWidths) {
  for (int b = 2; b <= 16; ++b)
    for (bool s : {true, false}) {
      EXPECT_EQ(levels(b, s).positive, oracle::uniform_lp(b, s));
      EXPECT_EQ(levels(b, s).negative, oracle::uniform_ln(b, s));
    }
}

TEST(Clip, SignedExamples) {
  EXPECT_DOUBLE_EQ(clip_signed(0.4, 1.0), 0.4);
  EXPECT_DOUBLE_EQ(clip_signed(-3.0, 1.0), -1.0);
  // Fixed alpha = 2: the threshold follows sigma.
  EXPECT_DOUBLE_EQ(state(2.0, 0.5, 3, true).threshold(), 1.0);
  EXPECT_DOUBLE_EQ(state(2.0, 0.25, 3, true).threshold(), 0.5);
  const Tensor y = clip_signed(Tensor({3}, std::vector<double>{-3.0, 0.4, 7.0}), state(2.0, 0.5, 3, true));
  EXPECT_EQ(y.values(), (std::vector<double>{-1.0, 0.4, 1.0}));
}

TEST(Clip, UnsignedExamples) {
  EXPECT_DOUBLE_EQ(clip_unsigned(-1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(clip_unsigned(0.3, 1.0), 0.3);
  EXPECT_DOUBLE_EQ(clip_unsigned(5.0, 1.0), 1.0);
}

TEST(Clip, ThresholdProportionalToSigma) {
  for (double sigma : {0.01, 0.1, 0.5, 2.0, 10.0})
    EXPECT_DOUBLE_EQ(state(2.0, sigma, 3, true).threshold() / sigma, 2.0);
}

TEST(QuantizeForward, Examples) {
  const QuantizerState st = state(2.0, 0.5, 3, true);
  const QuantOutput a = quantize_forward(scalar(0.4), st);
  EXPECT_EQ(a.levels[0], 1);
  EXPECT_DOUBLE_EQ(a.values[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a.step, 1.0 / 3.0);
  EXPECT_EQ(a.max_level, 3);
  const QuantOutput z = quantize_forward(scalar(0.0), st);
  EXPECT_EQ(z.levels[0], 0);
  EXPECT_EQ(z.values[0], 0.0);
  // 0.15 < alpha sigma / (2 L_P) = 1/6: pruned.
  const QuantOutput p = quantize_forward(scalar(0.15), st);
  EXPECT_EQ(p.levels[0], 0);
  EXPECT_EQ(p.values[0], 0.0);
}

TEST(QuantizeForward, DegenerateSigmaUsesFloor) {
  const QuantizerState st = state(3.0, 0.0, 3, true);
  const QuantOutput q = quantize_forward(Tensor({2}, std::vector<double>{1.0, -1.0}), st);
  EXPECT_EQ(q.levels, (std::vector<std::int32_t>{3, -3}));
  EXPECT_TRUE(std::isfinite(q.values[0]));
}

TEST(PruningThreshold, Examples) {
  EXPECT_DOUBLE_EQ(pruning_threshold(state(2.0, 0.5, 3, true)), 1.0 / 6.0);
  const double two = pruning_threshold(state(2.0, 0.5, 2, true));
  EXPECT_DOUBLE_EQ(two, 0.5);
  EXPECT_DOUBLE_EQ(two / pruning_threshold(state(2.0, 0.5, 3, true)), 3.0);
  EXPECT_EQ(pruning_threshold(state(1.0, 0.0, 3, true)), 0.0);
}

TEST(PruningRatio, Examples) {
  EXPECT_EQ(pruning_ratio({0, 0, 0}), 1.0);
  EXPECT_EQ(pruning_ratio({1, -1, 2}), 0.0);
  EXPECT_EQ(pruning_ratio({0, 1, 0, -2}), 0.5);
}

TEST(QuantizeBackward, Examples) {
  // Unsigned interior: gradient passes, no alpha contribution.
  QuantizerState u = state(2.0, 0.5, 3, false);
  QuantGrad g = quantize_backward(scalar(0.5), scalar(1.0), u);
  EXPECT_EQ(g.x[0], 1.0);
  EXPECT_EQ(g.alpha, 0.0);
  // Clipped: g_alpha = s * sigma * g_y = 0.5.
  g = quantize_backward(scalar(2.0), scalar(1.0), u);
  EXPECT_EQ(g.x[0], 0.0);
  EXPECT_DOUBLE_EQ(g.alpha, 0.5);
  // Zero upstream gradient, lambda = 0.
  Tensor x({4}, std::vector<double>{-3, -0.2, 0.4, 5});
  g = quantize_backward(x, Tensor({4}, 0.0), state(2.0, 0.5, 3, true));
  EXPECT_EQ(g.alpha, 0.0);
  for (double v : g.x.values()) EXPECT_EQ(v, 0.0);
}

TEST(QuantizeBackward, SignedNegativeBranchUsesSign) {
  const QuantGrad g = quantize_backward(scalar(-2.0), scalar(1.0), state(2.0, 0.5, 3, true));
  EXPECT_EQ(g.x[0], 0.0);
  EXPECT_DOUBLE_EQ(g.alpha, -0.5);
}

TEST(QuantizeBackward, OutsideGradientSwitch) {
  QuantizerState st = state(2.0, 0.5, 3, true);
  st.outside_grad = OutsideGrad::pass_through;
  const QuantGrad g = quantize_backward(scalar(3.0), scalar(0.7), st);
  EXPECT_EQ(g.x[0], 0.7);
  EXPECT_DOUBLE_EQ(g.alpha, 0.5 * 0.7);
}

TEST(QuantizeBackward, ShapeMismatchThrows) {
  EXPECT_THROW(quantize_backward(Tensor({2}), Tensor({3}), state(2, 0.5, 3, true)), ShapeError);
}

// g_alpha(s, lambda) = s * g_alpha(1, 0) + lambda * alpha, exactly.
TEST(QuantizeBackward, GradientScaleDecomposition) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    QuantizerState st = state(rng.uniform(0.5, 4), rng.uniform(0.1, 2), 2 + trial % 4, trial % 2 == 0);
    const Tensor x = oracle::random_tensor({64}, rng, -3 * st.threshold(), 3 * st.threshold());
    const Tensor gy = oracle::random_tensor({64}, rng);
    const double base = quantize_backward(x, gy, st).alpha;
    for (double s : {0.0, 0.001, 0.01, 0.1, 1.0})
      for (double lambda : {0.0, 5e-4, 1e-2}) {
        st.grad_scale = s;
        st.weight_decay = lambda;
        EXPECT_EQ(quantize_backward(x, gy, st).alpha, s * base + lambda * st.alpha);
      }
  }
}

// Clip derivatives vs. central differences away from the kinks |x| = alpha sigma and x = 0.
TEST(ClipGradients, MatchFiniteDifferences) {
  Rng rng(23);
  const double h = 1e-5;
  int checked = 0;
  while (checked < 2000) {
    const bool is_signed = checked % 2 == 0;
    const double alpha = rng.uniform(0.5, 4.0), sigma = rng.uniform(0.1, 2.0);
    const double t = alpha * sigma;
    const double x = rng.uniform(-3 * t, 3 * t);
    if (std::fabs(std::fabs(x) - t) < 1e-3 || std::fabs(x) < 1e-3) continue;
    QuantizerState st = state(alpha, sigma, 3, is_signed);
    const QuantGrad g = quantize_backward(scalar(x), scalar(1.0), st);
    auto clip_at = [&](double xx, double aa) { return oracle::clip(xx, aa * sigma, is_signed); };
    const double fd_x = (clip_at(x + h, alpha) - clip_at(x - h, alpha)) / (2 * h);
    const double fd_a = (clip_at(x, alpha + h) - clip_at(x, alpha - h)) / (2 * h);
    EXPECT_LT(oracle::rel_error(g.x[0], fd_x), 1e-4) << "x=" << x << " t=" << t;
    EXPECT_LT(oracle::rel_error(g.alpha, fd_a), 1e-4) << "x=" << x << " t=" << t;
    ++checked;
  }
}

struct SweepCase {
  int bits;
  bool is_signed;
};

class UniformSweep : public ::testing::TestWithParam<SweepCase> {};

TEST_P(UniformSweep, MatchesOracleAndProperties) {
  const auto [bits, is_signed] = GetParam();
  const QuantizerState st = state(2.5, 0.37, bits, is_signed);
  const double t = st.effective_threshold();
  const std::size_t n = 20001;
  Tensor x({n});
  for (std::size_t i = 0; i < n; ++i) x[i] = -3 * t + 6 * t * static_cast<double>(i) / static_cast<double>(n - 1);
  const QuantOutput q = quantize_forward(x, st);
  const auto lp = oracle::uniform_lp(bits, is_signed);
  const auto ln = oracle::uniform_ln(bits, is_signed);
  for (std::size_t i = 0; i < n; ++i) {
    ASSERT_EQ(q.levels[i], oracle::uniform_level(x[i], t, bits, is_signed)) << "x=" << x[i];
    ASSERT_GE(q.levels[i], -ln);
    ASSERT_LE(q.levels[i], lp);
    ASSERT_EQ(q.values[i], q.levels[i] * q.step);
    if (i > 0) {
      ASSERT_LE(q.values[i - 1], q.values[i]);
    }
    const bool pruned = std::fabs(oracle::clip(x[i], t, is_signed)) < t / (2.0 * static_cast<double>(lp));
    ASSERT_EQ(q.levels[i] == 0, pruned) << "x=" << x[i];
  }
  const QuantOutput again = quantize_forward(q.values, st);
  EXPECT_EQ(again.values.values(), q.values.values());
  if (is_signed) {
    Tensor neg(x.shape());
    for (std::size_t i = 0; i < n; ++i) neg[i] = -x[i];
    const QuantOutput qn = quantize_forward(neg, st);
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(qn.values[i], -q.values[i]);
  }
}

INSTANTIATE_TEST_SUITE_P(Widths, UniformSweep,
                         ::testing::Values(SweepCase{2, true}, SweepCase{3, true}, SweepCase{4, true},
                                           SweepCase{5, true}, SweepCase{2, false}, SweepCase{3, false},
                                           SweepCase{4, false}, SweepCase{5, false}));

TEST(QuantizerState, ValidateRejectsBadStates) {
  EXPECT_THROW(state(0.0, 1.0, 3, true).validate(), Error);
  EXPECT_THROW(state(-1.0, 1.0, 3, true).validate(), Error);
  EXPECT_THROW(state(1.0, 1.0, 1, true).validate(), Error);
  QuantizerState lg = state(1.0, 1.0, 3, false);
  lg.mode = QuantMode::log2;
  EXPECT_THROW(lg.validate(), Error);
  EXPECT_NO_THROW(state(1.0, 1.0, 3, true).validate());
}

}  // namespace
}  // namespace sdq
