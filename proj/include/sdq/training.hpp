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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sdq/checkpoint.hpp"
#include "sdq/dataset.hpp"
#include "sdq/ops.hpp"
#include "sdq/qlayer.hpp"

namespace sdq {

// alpha_hi * L(b_lo) / L(b_hi), with L the uniform L_P or the log2 L_p2.
// Keeps alpha * sigma / L unchanged across the bit transfer.
double rescale_alpha(double alpha_hi, int b_lo, int b_hi, bool is_signed, QuantMode mode = QuantMode::uniform);

struct TrainPlan {
  std::size_t epochs = 8;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  // Random translation of training images by up to this many pixels per
  // axis; vacated pixels take the image minimum. Zero disables it.
  std::size_t augment_shift = 0;
  // Progressive stages, strictly decreasing (e.g. 4, 3, 2). Empty: train at
  // the model's configured bits only.
  std::vector<int> bits_schedule;
  // Gradient scale per stage; a single value applies to every stage.
  // Zero freezes alpha for that stage.
  std::vector<double> grad_scales;
  bool rescale = true;
  bool two_phase = false;
  // Phase-2 length; zero skips phase 2 and keeps the phase-1 model.
  std::size_t phase2_epochs = 0;
  // Phase-2 initial rate; zero reuses the phase-1 rate.
  double phase2_lr = 0.0;

  void validate() const;
  double grad_scale_for_stage(std::size_t stage) const;
};

struct LayerMetric {
  std::size_t layer = 0;
  double threshold = 0.0;    // weight alpha * sigma
  double prune_ratio = 0.0;  // fraction of weights at level zero
};

struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;  // train | val | test
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<LayerMetric> layers;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size = 500);

// Weight threshold and pruning ratio of every quantized layer.
std::vector<LayerMetric> layer_metrics(const Model& model);

// Shifts sample i of x[n, c, h, w] by (dy[i], dx[i]) pixels.
Tensor translate_images(const Tensor& x, std::span<const int> dy, std::span<const int> dx);

struct TrainResult {
  std::vector<MetricsRecord> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::uint64_t steps = 0;
  std::vector<std::vector<double>> velocity;  // optimizer state at best_epoch
};

struct TrainHooks {
  // Called after every epoch with the epoch's train and val records.
  std::function<void(const MetricsRecord& train, const MetricsRecord& val)> on_epoch;
};

// Runs plan.epochs epochs of shuffled mini-batch SGD with a cosine schedule,
// evaluating on data.val after each. On return `model` holds the epoch with
// the best validation accuracy (ties go to the later epoch) and the history
// ends with one test record for it. Epoch numbers start at epoch_offset + 1.
// When the model is frozen, every step checks that no alpha or sigma moved.
TrainResult train(const TrainPlan& plan, Model& model, const DataSplits& data, const Rng& rng,
                  std::size_t epoch_offset = 0, const TrainHooks& hooks = {});

struct TwoPhaseResult {
  TrainResult phase1;
  TrainResult phase2;  // empty history when phase 2 has no epochs
  Model phase1_model;  // best phase-1 model, before freezing
};

// Phase 1 trains jointly; phase 2 restarts from the phase-1 best with every
// alpha, running sigma and weight-sigma snapshot frozen and retrains the
// weights with a fresh optimizer and cosine schedule.
TwoPhaseResult two_phase(const TrainPlan& plan, Model& model, const DataSplits& data, const Rng& rng,
                         std::size_t epoch_offset = 0, const TrainHooks& hooks = {});

struct ProgressiveOptions {
  bool rescale = true;
  double weight_grad_scale = 1.0;
  double act_grad_scale = 1.0;
};

// Lower-bit model from a higher-bit checkpoint: weights, sigma and alpha are
// loaded, alpha is re-scaled when requested and the stage gradient scales are
// applied. Throws when the checkpoint has no quantized layer or its bits are
// below target_bits; equal bits are a plain load.
Model progressive_init(const Checkpoint& ckpt_hi, int target_bits, const ProgressiveOptions& options);

// Header: epoch,split,loss,accuracy then layer_<i>_threshold,layer_<i>_prune_ratio
// for each quantized layer index i seen in the history.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& history);
std::vector<MetricsRecord> read_metrics_csv(std::istream& in);

}  // namespace sdq
