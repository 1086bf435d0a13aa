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

// sdq: train, progressively lower, export and verify quantized networks.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error, 3 verification failed.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include "sdq/checkpoint.hpp"
#include "sdq/config.hpp"
#include "sdq/experiments.hpp"
#include "sdq/infer.hpp"
#include "sdq/kernels.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kVerifyFailed = 3;
// Acceptance bounds for `verify`.
constexpr double kMinArgmaxAgreement = 0.995;
constexpr double kMaxNormalizedDeviation = 1e-3;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> bits;
  std::optional<std::string> mode;
  std::optional<double> grad_scale;
  std::optional<bool> rescale;
  bool two_phase = false;
  std::string out;
  std::optional<int> threads;
};

// Bad configs and out-of-range overrides; reported with the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

sdq::Config resolve(const Overrides& o) {
  sdq::Config cfg;
  try {
    cfg = o.config.empty() ? sdq::default_config() : sdq::load_config(o.config);
  } catch (const sdq::Error& e) {
    throw UsageError(e.what());
  }
  if (o.seed) cfg.run.seed = *o.seed;
  if (o.bits) {
    cfg.quant.weight_bits = cfg.quant.act_bits = *o.bits;
    cfg.progressive.bits = *o.bits;
  }
  if (o.mode) cfg.quant.weight_mode = sdq::parse_quant_mode(*o.mode);
  if (o.grad_scale) {
    cfg.quant.weight_grad_scale = cfg.quant.act_grad_scale = *o.grad_scale;
    cfg.train.grad_scales.clear();
  }
  if (o.rescale) cfg.train.rescale = cfg.progressive.rescale = *o.rescale;
  if (o.two_phase) cfg.train.two_phase = true;
  if (!o.out.empty()) cfg.run.output_dir = o.out;
  if (o.threads) cfg.run.threads = *o.threads;
  try {
    cfg.validate();
  } catch (const sdq::Error& e) {
    throw UsageError(e.what());
  }
  sdq::kernels::set_num_threads(cfg.run.threads);
  return cfg;
}

sdq::TrainHooks progress_hooks() {
  sdq::TrainHooks h;
  h.on_epoch = [](const sdq::MetricsRecord& tr, const sdq::MetricsRecord& val) {
    std::fprintf(stderr, "epoch %3zu  train loss %.4f acc %.4f  val loss %.4f acc %.4f\n", tr.epoch, tr.loss,
                 tr.accuracy, val.loss, val.accuracy);
  };
  return h;
}

void print_run(const std::string& dir, const sdq::RunSummary& run) {
  std::printf("best_val_accuracy %.4f\ntest_accuracy %.4f\n", run.best_val_accuracy, run.test_accuracy);
  if (run.phase1_test_accuracy) {
    std::printf("phase1_test_accuracy %.4f\ntwo_phase_delta %+.4f\n", *run.phase1_test_accuracy,
                run.test_accuracy - *run.phase1_test_accuracy);
  }
  std::printf("mean_prune_ratio %.4f\noutput %s\n", run.mean_prune_ratio(), dir.c_str());
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override [run] seed");
  cmd->add_option("--threads", o.threads, "Override [run] threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "Override [run] output_dir");
}

int cmd_train(const Overrides& o) {
  const sdq::Config cfg = resolve(o);
  const sdq::DataSplits data = sdq::load_dataset(cfg.data, cfg.run.seed);
  const sdq::RunSummary run = sdq::run_training(cfg, data, progress_hooks());
  sdq::write_run(cfg.run.output_dir, cfg, run);
  print_run(cfg.run.output_dir, run);
  return 0;
}

int cmd_progressive(const Overrides& o, const std::string& from, bool grid) {
  const sdq::Config cfg = resolve(o);
  const std::string src_path = from.empty() ? cfg.progressive.checkpoint : from;
  if (src_path.empty()) throw sdq::Error("progressive: no source checkpoint (--from or [progressive] checkpoint)");
  const sdq::Checkpoint src = sdq::load_checkpoint(src_path);
  const sdq::DataSplits data = sdq::load_dataset(cfg.data, cfg.run.seed);
  if (grid) {
    const auto rows = sdq::run_ablation_grid(cfg, data, src, cfg.progressive.bits, cfg.progressive.grid_scales);
    fs::create_directories(cfg.run.output_dir);
    const fs::path path = fs::path(cfg.run.output_dir) / "ablation.csv";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw sdq::Error("cannot write " + path.string());
    sdq::write_ablation_csv(out, rows);
    sdq::write_ablation_csv(std::cout, rows);
    return 0;
  }
  const double s = o.grad_scale.value_or(cfg.quant.weight_grad_scale);
  const sdq::RunSummary run =
      sdq::run_progressive(cfg, data, src, cfg.progressive.bits, cfg.progressive.rescale, s, progress_hooks());
  sdq::write_run(cfg.run.output_dir, cfg, run);
  print_run(cfg.run.output_dir, run);
  return 0;
}

int cmd_export(const std::string& ckpt_path, const std::string& out) {
  const sdq::Checkpoint ckpt = sdq::load_checkpoint(ckpt_path);
  const sdq::IntegerModel im = sdq::export_integer_model(ckpt.model);
  sdq::save_integer_model(im, out);
  std::printf("integer layers %zu (float prefix %zu, suffix %zu)\n", im.layers.size(), im.prefix.size(),
              im.suffix.size());
  for (std::size_t i = 0; i < im.layers.size(); ++i) {
    const auto& l = im.layers[i];
    std::printf("  layer %zu  %s  fan_in %zu  accumulator %d-bit  bound %llu\n", i,
                l.weight_mode == sdq::QuantMode::log2 ? "shift-add" : "multiply", l.fan_in(), l.acc_bits,
                static_cast<unsigned long long>(l.accumulator_bound()));
  }
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_verify(const Overrides& o, const std::string& ckpt_path, const std::string& int_path, std::size_t samples) {
  const sdq::Config cfg = resolve(o);
  sdq::Checkpoint ckpt = sdq::load_checkpoint(ckpt_path);
  const sdq::IntegerModel im =
      int_path.empty() ? sdq::export_integer_model(ckpt.model) : sdq::load_integer_model(int_path);
  const sdq::DataSplits data = sdq::load_dataset(cfg.data, cfg.run.seed);
  const std::size_t n = samples == 0 ? data.test.size() : std::min(samples, data.test.size());
  const sdq::Tensor x = data.test.slice(0, n).images;
  ckpt.model.set_eval(true);
  const sdq::EquivalenceReport r = sdq::verify_equivalence(ckpt.model, im, x);
  std::printf("samples %zu\nmax_abs_deviation %.6g\nlogit_scale %.6g\nnormalized_deviation %.6g\n"
              "argmax_agreement %.6f\n",
              r.samples, r.max_abs_deviation, r.logit_scale, r.normalized_deviation, r.argmax_agreement);
  const bool ok = r.argmax_agreement >= kMinArgmaxAgreement && r.normalized_deviation < kMaxNormalizedDeviation;
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : kVerifyFailed;
}

int cmd_report(const std::string& path, const std::string& out_dir) {
  const auto runs = sdq::collect_metrics(path);
  const fs::path dir = out_dir.empty() ? (fs::is_directory(path) ? fs::path(path) : fs::path(path).parent_path())
                                       : fs::path(out_dir);
  if (!dir.empty()) fs::create_directories(dir);
  {
    std::ofstream layers(dir / "layers.csv", std::ios::trunc);
    if (!layers) throw sdq::Error("cannot write " + (dir / "layers.csv").string());
    sdq::write_layer_report(layers, runs);
  }
  {
    std::ofstream summary(dir / "summary.csv", std::ios::trunc);
    if (!summary) throw sdq::Error("cannot write " + (dir / "summary.csv").string());
    sdq::write_summary_table(summary, runs);
  }
  sdq::write_summary_table(std::cout, runs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-bit quantization-aware training with integer shift-add inference"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sdq 0.1.0");

  Overrides o;
  std::string mode;
  auto add_quant = [&](CLI::App* cmd) {
    cmd->add_option("--bits", o.bits, "Weight and activation bits")->check(CLI::Range(2, 16));
    cmd->add_option("--mode", o.mode, "Weight quantizer")->check(CLI::IsMember({"uniform", "log2"}));
    cmd->add_option("--gradient-scale", o.grad_scale, "Threshold gradient scale s (0 freezes alpha)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_flag("--rescale,!--no-rescale", o.rescale, "Re-scale thresholds when lowering bits");
  };

  auto* train = app.add_subcommand("train", "Train a network from a configuration");
  add_common(train, o);
  add_quant(train);
  train->add_flag("--two-phase", o.two_phase, "Freeze quantizers and retrain weights after phase 1");

  std::string from;
  bool grid = false;
  auto* prog = app.add_subcommand("progressive", "Lower a trained checkpoint to fewer bits and retrain");
  add_common(prog, o);
  add_quant(prog);
  prog->add_option("--from", from, "Higher-bit source checkpoint")->check(CLI::ExistingFile);
  prog->add_flag("--grid", grid, "Sweep rescale x [progressive] grid_scales; writes ablation.csv");

  std::string ckpt_path, export_out;
  auto* exp = app.add_subcommand("export", "Convert a checkpoint to an integer model");
  exp->add_option("--checkpoint", ckpt_path, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", export_out, "Integer model file")->required();

  std::string report_path, report_out;
  auto* rep = app.add_subcommand("report", "Per-layer thresholds and pruning ratios from metrics.csv files");
  rep->add_option("path", report_path, "Run directory or metrics.csv")->required()->check(CLI::ExistingPath);
  rep->add_option("--out", report_out, "Directory for layers.csv and summary.csv");

  std::string verify_ckpt, verify_int;
  std::size_t samples = 1000;
  auto* ver = app.add_subcommand("verify", "Compare integer and floating-point inference on test data");
  add_common(ver, o);
  ver->add_option("--checkpoint", verify_ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  ver->add_option("--integer", verify_int, "Exported integer model (default: export in memory)")
      ->check(CLI::ExistingFile);
  ver->add_option("--samples", samples, "Test samples to compare (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(o);
    if (*prog) return cmd_progressive(o, from, grid);
    if (*exp) return cmd_export(ckpt_path, export_out);
    if (*rep) return cmd_report(report_path, report_out);
    if (*ver) return cmd_verify(o, verify_ckpt, verify_int, samples);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "sdq: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sdq: %s\n", e.what());
    return 1;
  }
  return 2;
}
