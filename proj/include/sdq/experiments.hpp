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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdq/checkpoint.hpp"
#include "sdq/config.hpp"
#include "sdq/dataset.hpp"
#include "sdq/training.hpp"

namespace sdq {

struct NamedCheckpoint {
  std::string name;  // file stem, e.g. "final" or "phase1"
  Checkpoint checkpoint;
};

struct RunSummary {
  std::vector<MetricsRecord> history;
  std::vector<NamedCheckpoint> checkpoints;  // last entry is the final model
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  // Phase-1 numbers when two-phase training ran.
  std::optional<double> phase1_val_accuracy;
  std::optional<double> phase1_test_accuracy;

  const Model& model() const { return checkpoints.back().checkpoint.model; }
  // Mean weight pruning ratio over quantized layers of the final model.
  double mean_prune_ratio() const;
};

// Runs cfg.train against `data`: the bits schedule stage by stage (each later
// stage via progressive_init from the previous stage's best model), then the
// optional two-phase retraining of the last stage. All randomness derives
// from cfg.run.seed.
RunSummary run_training(const Config& cfg, const DataSplits& data, const TrainHooks& hooks = {});

// Trains a model initialized from `source` at `bits` with cfg.train's epochs
// and optimizer.
RunSummary run_progressive(const Config& cfg, const DataSplits& data, const Checkpoint& source, int bits,
                           bool rescale, double grad_scale, const TrainHooks& hooks = {});

struct AblationRow {
  bool rescale = true;
  double grad_scale = 1.0;
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double mean_prune_ratio = 0.0;
};

// Threshold initialization (re-scaled or copied) x gradient scale.
std::vector<AblationRow> run_ablation_grid(const Config& cfg, const DataSplits& data, const Checkpoint& source,
                                           int bits, const std::vector<double>& grad_scales);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

// Writes metrics.csv, config.ini and <name>.ckpt for every checkpoint into `dir`.
void write_run(const std::string& dir, const Config& cfg, const RunSummary& run);

struct ReportInput {
  std::string name;  // run label (directory name)
  std::vector<MetricsRecord> history;
};

// Collects every metrics.csv under `path` (or the file itself), sorted by path.
std::vector<ReportInput> collect_metrics(const std::string& path);
// Long-format per-layer table: run,epoch,split,layer,threshold,prune_ratio
void write_layer_report(std::ostream& out, const std::vector<ReportInput>& runs);
// One row per run: best val/test accuracy and final per-layer threshold and pruning.
void write_summary_table(std::ostream& out, const std::vector<ReportInput>& runs);

}  // namespace sdq
