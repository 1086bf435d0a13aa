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

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "sdq/checkpoint.hpp"
#include "sdq/training.hpp"

namespace sdq {
namespace {

using fixtures::toy_data;
using fixtures::toy_plan;
using fixtures::toy_quant;
using fixtures::toy_spec;

constexpr double kEps = std::numeric_limits<double>::epsilon();

TEST(RescaleAlpha, Examples) {
  EXPECT_DOUBLE_EQ(rescale_alpha(3.0, 2, 3, true), 1.0);
  EXPECT_EQ(rescale_alpha(2.7, 2, 3, true), 2.7 * 1.0 / 3.0);
  EXPECT_EQ(rescale_alpha(2.7, 3, 3, true), 2.7);
  EXPECT_DOUBLE_EQ(rescale_alpha(7.0, 2, 3, false), 3.0);              // L = 3 vs 7
  EXPECT_DOUBLE_EQ(rescale_alpha(4.0, 2, 3, true, QuantMode::log2), 1.0);  // L_p2 = 1 vs 4
  EXPECT_THROW(rescale_alpha(1.0, 4, 3, true), Error);
}

// Equal step sizes alpha sigma / L_P, hence equal pruning areas, across 3 -> 2.
TEST(RescaleAlpha, PreservesStepAndPruningArea) {
  for (double alpha : {0.7, 1.3, 3.0, 4.9})
    for (double sigma : {0.01, 0.2, 1.7}) {
      QuantizerState hi;
      hi.alpha = alpha;
      hi.sigma = sigma;
      hi.bits = 3;
      QuantizerState lo = hi;
      lo.bits = 2;
      lo.alpha = rescale_alpha(alpha, 2, 3, true);
      EXPECT_NEAR(lo.step(), hi.step(), 2 * kEps * hi.step());
      EXPECT_NEAR(pruning_threshold(lo), pruning_threshold(hi), 2 * kEps * pruning_threshold(hi));
      QuantizerState copied = lo;
      copied.alpha = alpha;
      EXPECT_NEAR(pruning_threshold(copied) / pruning_threshold(hi), 3.0, 1e-15);
    }
}

TEST(RescaleAlpha, ComposesWithinRounding) {
  for (double alpha : {0.9, 2.0, 3.3})
    for (bool s : {true, false}) {
      const double two_step = rescale_alpha(rescale_alpha(alpha, 3, 4, s), 2, 3, s);
      const double direct = rescale_alpha(alpha, 2, 4, s);
      EXPECT_NEAR(two_step, direct, 4 * kEps * direct);
    }
}

Checkpoint as_checkpoint(const Model& m) {
  Checkpoint c;
  c.model = m;
  return c;
}

TEST(ProgressiveInit, FourToThreeKeepsStepSizes) {
  const Model hi = fixtures::trained_toy(4, QuantMode::uniform);
  const Model lo = progressive_init(as_checkpoint(hi), 3, {});
  int checked = 0;
  for (std::size_t i = 0; i < hi.layers.size(); ++i) {
    const auto& a = hi.layers[i];
    const auto& b = lo.layers[i];
    ASSERT_EQ(a.quantized(), b.quantized());
    if (!a.quantized()) continue;
    EXPECT_EQ(b.weight_quant.bits, 3);
    QuantizerState wa = a.weight_quant, wb = b.weight_quant;
    wa.sigma = a.current_weight_sigma();
    wb.sigma = b.current_weight_sigma();
    EXPECT_NEAR(wb.step(), wa.step(), 4 * kEps * wa.step());
    if (a.has_act_quant()) {
      EXPECT_EQ(b.act_sigma.value(), a.act_sigma.value());
      EXPECT_NEAR(b.act_quant.step(), a.act_quant.step(), 4 * kEps * a.act_quant.step());
    }
    ++checked;
  }
  EXPECT_EQ(checked, 2);
}

TEST(ProgressiveInit, SameBitsIsPlainLoad) {
  Model hi = fixtures::trained_toy(3, QuantMode::uniform);
  Model same = progressive_init(as_checkpoint(hi), 3, {});
  same.set_eval(true);
  for (std::size_t i = 0; i < hi.layers.size(); ++i) {
    EXPECT_EQ(same.layers[i].weight_quant.alpha, hi.layers[i].weight_quant.alpha);
    EXPECT_EQ(same.layers[i].act_quant.alpha, hi.layers[i].act_quant.alpha);
    EXPECT_EQ(same.layers[i].weight.values(), hi.layers[i].weight.values());
  }
  const Tensor x = toy_data(3).test.images;
  EXPECT_EQ(same.forward(x, false).values(), hi.forward(x, false).values());
}

TEST(ProgressiveInit, WithoutRescaleCopiesAlpha) {
  const Model hi = fixtures::trained_toy(3, QuantMode::uniform);
  ProgressiveOptions o;
  o.rescale = false;
  const Model lo = progressive_init(as_checkpoint(hi), 2, o);
  for (std::size_t i = 0; i < hi.layers.size(); ++i)
    if (hi.layers[i].quantized()) {
      EXPECT_EQ(lo.layers[i].weight_quant.alpha, hi.layers[i].weight_quant.alpha);
    }
}

TEST(ProgressiveInit, Errors) {
  Rng rng(1);
  QuantConfig off = toy_quant(3);
  off.enabled = false;
  const Model fp(toy_spec(), off, rng);
  EXPECT_THROW(progressive_init(as_checkpoint(fp), 2, {}), Error);
  const Model three(toy_spec(), toy_quant(3), rng);
  EXPECT_THROW(progressive_init(as_checkpoint(three), 4, {}), Error);
  ProgressiveOptions neg;
  neg.weight_grad_scale = -1.0;
  EXPECT_THROW(progressive_init(as_checkpoint(three), 2, neg), Error);
}

TEST(Train, DeterministicForSameSeed) {
  const DataSplits data = toy_data();
  Rng r1(3), r2(3);
  Model a(toy_spec(), toy_quant(3), r1), b(toy_spec(), toy_quant(3), r2);
  const TrainResult ra = train(toy_plan(), a, data, Rng(9));
  const TrainResult rb = train(toy_plan(), b, data, Rng(9));
  EXPECT_EQ(encode_checkpoint(as_checkpoint(a)), encode_checkpoint(as_checkpoint(b)));
  std::ostringstream ca, cb;
  write_metrics_csv(ca, ra.history);
  write_metrics_csv(cb, rb.history);
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(Train, DropsPartialBatchAndSelectsBestEpoch) {
  const DataSplits data = toy_data(5, 200, 64, 64);
  Rng rng(4);
  Model m(toy_spec(), toy_quant(3), rng);
  TrainPlan plan = toy_plan(3);
  const TrainResult r = train(plan, m, data, Rng(2));
  EXPECT_EQ(r.steps, 3u * (200 / 32));
  EXPECT_TRUE(m.eval_mode());
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& rec : r.history)
    if (rec.split == "val" && rec.accuracy >= best) {
      best = rec.accuracy;
      best_epoch = rec.epoch;
    }
  EXPECT_EQ(r.best_val_accuracy, best);
  EXPECT_EQ(r.best_epoch, best_epoch);
  ASSERT_EQ(r.history.back().split, "test");
  EXPECT_EQ(r.history.back().epoch, best_epoch);
  // The returned model is the best-epoch snapshot.
  EXPECT_EQ(evaluate(m, data.val).accuracy, best);
}

TEST(Train, ZeroGradientScaleFreezesAlpha) {
  const DataSplits data = toy_data();
  Rng rng(5);
  QuantConfig qc = toy_quant(3);
  qc.weight_grad_scale = qc.act_grad_scale = 0.0;
  Model m(toy_spec(), qc, rng);
  std::vector<double> before;
  for (const auto& l : m.layers) before.push_back(l.weight_quant.alpha);
  train(toy_plan(), m, data, Rng(1));
  for (std::size_t i = 0; i < m.layers.size(); ++i) EXPECT_EQ(m.layers[i].weight_quant.alpha, before[i]);
}

std::vector<std::uint64_t> quantizer_bits(const Model& m) {
  std::vector<std::uint64_t> out;
  for (const auto& l : m.layers) {
    if (!l.quantized()) continue;
    out.push_back(std::bit_cast<std::uint64_t>(l.weight_quant.alpha));
    out.push_back(std::bit_cast<std::uint64_t>(l.current_weight_sigma()));
    out.push_back(std::bit_cast<std::uint64_t>(l.act_quant.alpha));
    out.push_back(std::bit_cast<std::uint64_t>(l.act_sigma.value()));
  }
  return out;
}

TEST(TwoPhase, QuantizersBitIdenticalToPhaseOneBest) {
  const DataSplits data = toy_data();
  Rng rng(6);
  Model m(toy_spec(), toy_quant(3), rng);
  TrainPlan plan = toy_plan(2);
  plan.two_phase = true;
  plan.phase2_epochs = 2;
  plan.phase2_lr = 0.01;
  const TwoPhaseResult r = two_phase(plan, m, data, Rng(3));
  Model p1 = r.phase1_model;
  p1.freeze_quantizers();  // snapshot the phase-1 weight sigma
  EXPECT_EQ(quantizer_bits(m), quantizer_bits(p1));
  EXPECT_NE(m.layers[1].weight.values(), r.phase1_model.layers[1].weight.values());
  ASSERT_FALSE(r.phase2.history.empty());
  EXPECT_EQ(r.phase2.history.front().epoch, plan.epochs + 1);
}

TEST(TwoPhase, ZeroEpochsReturnsPhaseOneModel) {
  const DataSplits data = toy_data();
  Rng rng(7);
  Model m(toy_spec(), toy_quant(3), rng);
  TrainPlan plan = toy_plan(2);
  plan.two_phase = true;
  const TwoPhaseResult r = two_phase(plan, m, data, Rng(3));
  EXPECT_TRUE(r.phase2.history.empty());
  EXPECT_EQ(encode_checkpoint(as_checkpoint(m)), encode_checkpoint(as_checkpoint(r.phase1_model)));
}

TEST(LayerMetrics, QuantizedLayersOnly) {
  const Model m = fixtures::trained_toy(3, QuantMode::uniform);
  const auto metrics = layer_metrics(m);
  ASSERT_EQ(metrics.size(), 2u);
  EXPECT_EQ(metrics[0].layer, 1u);
  EXPECT_EQ(metrics[1].layer, 2u);
  const auto& l = m.layers[1];
  EXPECT_EQ(metrics[0].threshold, l.weight_quant.alpha * l.current_weight_sigma());
  EXPECT_EQ(metrics[0].prune_ratio, pruning_ratio(l.quantized_weights().levels));
}

TEST(MetricsCsv, HeaderRoundTripAndErrors) {
  std::vector<MetricsRecord> h{{1, "train", 0.5, 0.75, {{1, 0.25, 0.5}, {3, 0.125, 0.0}}},
                               {1, "val", 0.625, 0.5, {{1, 0.25, 0.5}, {3, 0.125, 0.0}}},
                               {1, "test", 0.75, 0.25, {}}};
  std::ostringstream out;
  write_metrics_csv(out, h);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "epoch,split,loss,accuracy,layer_1_threshold,layer_1_prune_ratio,layer_3_threshold,layer_3_prune_ratio");
  std::istringstream in(text);
  const auto back = read_metrics_csv(in);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].layers.size(), 2u);
  EXPECT_EQ(back[0].layers[1].layer, 3u);
  EXPECT_EQ(back[0].layers[1].threshold, 0.125);
  EXPECT_EQ(back[2].layers.size(), 0u);
  std::ostringstream again;
  write_metrics_csv(again, back);
  EXPECT_EQ(again.str(), text);

  std::istringstream bad_header("epoch,split,loss\n1,train,0.5\n");
  EXPECT_THROW(read_metrics_csv(bad_header), Error);
  std::istringstream bad_row("epoch,split,loss,accuracy\n1,train,abc,0.5\n");
  EXPECT_THROW(read_metrics_csv(bad_row), Error);
}

TEST(TranslateImages, ShiftsAndFillsWithMinimum) {
  Tensor x({1, 1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const std::vector<int> dy{1}, dx{-1};
  const Tensor y = translate_images(x, dy, dx);
  EXPECT_EQ(y.values(), (std::vector<double>{1, 1, 1, 2, 3, 1, 5, 6, 1}));
  const std::vector<int> zero{0};
  EXPECT_EQ(translate_images(x, zero, zero).values(), x.values());
}

TEST(TrainPlan, Validation) {
  TrainPlan p = toy_plan();
  p.bits_schedule = {4, 3, 2};
  EXPECT_NO_THROW(p.validate());
  p.bits_schedule = {3, 3};
  EXPECT_THROW(p.validate(), Error);
  p.bits_schedule = {4, 3};
  p.grad_scales = {1.0, 0.1, 0.01};
  EXPECT_THROW(p.validate(), Error);
  p.grad_scales = {1.0, -0.1};
  EXPECT_THROW(p.validate(), Error);
  p.grad_scales = {1.0, 0.0};
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.grad_scale_for_stage(1), 0.0);
  p.batch_size = 0;
  EXPECT_THROW(p.validate(), Error);
}

}  // namespace
}  // namespace sdq
