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

#include "sdq/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>

#include "sdq/kernels.hpp"

namespace sdq {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Checkpoint make_checkpoint(const Model& model, const TrainPlan& plan, const TrainResult& r, const Rng& rng,
                           const std::string& phase) {
  Checkpoint c;
  c.model = model;
  c.optimizer = plan.optimizer;
  c.velocity = r.velocity;
  c.epoch = r.best_epoch;
  c.step = r.steps;
  c.rng = rng;
  c.metadata = {{"phase", phase},
                {"weight_bits", std::to_string(model.quant_config().weight_bits)},
                {"act_bits", std::to_string(model.quant_config().act_bits)},
                {"mode", std::string(to_string(model.quant_config().weight_mode))},
                {"best_epoch", std::to_string(r.best_epoch)},
                {"best_val_accuracy", num(r.best_val_accuracy)},
                {"test_accuracy", num(r.test_accuracy)}};
  return c;
}

void append(std::vector<MetricsRecord>& dst, const std::vector<MetricsRecord>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

double RunSummary::mean_prune_ratio() const {
  const auto m = layer_metrics(model());
  if (m.empty()) return 0.0;
  double s = 0.0;
  for (const auto& l : m) s += l.prune_ratio;
  return s / static_cast<double>(m.size());
}

RunSummary run_training(const Config& cfg, const DataSplits& data, const TrainHooks& hooks) {
  cfg.validate();
  kernels::set_num_threads(cfg.run.threads);
  const TrainPlan& plan = cfg.train;
  const Rng root(cfg.run.seed);
  Rng model_rng = root.fork(1);
  const Rng train_rng = root.fork(2);
  const std::vector<int> schedule =
      plan.bits_schedule.empty() ? std::vector<int>{cfg.quant.weight_bits} : plan.bits_schedule;

  RunSummary out;
  Model model;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const bool scaled = !plan.grad_scales.empty();
    const double s = scaled ? plan.grad_scale_for_stage(k) : 0.0;
    if (k == 0) {
      QuantConfig qc = cfg.quant;
      if (!plan.bits_schedule.empty()) qc.weight_bits = qc.act_bits = schedule[0];
      if (scaled) qc.weight_grad_scale = qc.act_grad_scale = s;
      model = Model(cfg.model, qc, model_rng);
    } else {
      Checkpoint src;
      src.model = model;
      ProgressiveOptions o;
      o.rescale = plan.rescale;
      o.weight_grad_scale = scaled ? s : cfg.quant.weight_grad_scale;
      o.act_grad_scale = scaled ? s : cfg.quant.act_grad_scale;
      model = progressive_init(src, schedule[k], o);
    }
    const Rng stage_rng = train_rng.fork(100 + k);
    const bool last = k + 1 == schedule.size();
    const std::string stage = "stage" + std::to_string(k) + "_" + std::to_string(schedule[k]) + "b";
    if (last && plan.two_phase) {
      TwoPhaseResult tp = two_phase(plan, model, data, stage_rng, offset, hooks);
      append(out.history, tp.phase1.history);
      out.phase1_val_accuracy = tp.phase1.best_val_accuracy;
      out.phase1_test_accuracy = tp.phase1.test_accuracy;
      out.checkpoints.push_back({"phase1", make_checkpoint(tp.phase1_model, plan, tp.phase1, stage_rng, "phase1")});
      const TrainResult& fin = plan.phase2_epochs > 0 ? tp.phase2 : tp.phase1;
      append(out.history, tp.phase2.history);
      out.best_val_accuracy = fin.best_val_accuracy;
      out.test_accuracy = fin.test_accuracy;
      out.checkpoints.push_back({"final", make_checkpoint(model, plan, fin, stage_rng, "phase2")});
    } else {
      const TrainResult r = train(plan, model, data, stage_rng, offset, hooks);
      append(out.history, r.history);
      out.best_val_accuracy = r.best_val_accuracy;
      out.test_accuracy = r.test_accuracy;
      out.checkpoints.push_back({last ? "final" : stage, make_checkpoint(model, plan, r, stage_rng, stage)});
    }
    offset += plan.epochs + (last && plan.two_phase ? plan.phase2_epochs : 0);
  }
  return out;
}

RunSummary run_progressive(const Config& cfg, const DataSplits& data, const Checkpoint& source, int bits,
                           bool rescale, double grad_scale, const TrainHooks& hooks) {
  cfg.validate();
  kernels::set_num_threads(cfg.run.threads);
  const Rng train_rng = Rng(cfg.run.seed).fork(3);
  ProgressiveOptions o;
  o.rescale = rescale;
  o.weight_grad_scale = grad_scale;
  o.act_grad_scale = grad_scale;
  Model model = progressive_init(source, bits, o);
  const TrainResult r = train(cfg.train, model, data, train_rng, 0, hooks);
  RunSummary out;
  out.history = r.history;
  out.best_val_accuracy = r.best_val_accuracy;
  out.test_accuracy = r.test_accuracy;
  Checkpoint ckpt = make_checkpoint(model, cfg.train, r, train_rng, "progressive");
  ckpt.metadata.emplace_back("rescale", rescale ? "true" : "false");
  ckpt.metadata.emplace_back("grad_scale", num(grad_scale));
  out.checkpoints.push_back({"final", std::move(ckpt)});
  return out;
}

std::vector<AblationRow> run_ablation_grid(const Config& cfg, const DataSplits& data, const Checkpoint& source,
                                           int bits, const std::vector<double>& grad_scales) {
  std::vector<AblationRow> rows;
  for (bool rescale : {true, false}) {
    for (double s : grad_scales) {
      const RunSummary r = run_progressive(cfg, data, source, bits, rescale, s);
      rows.push_back({rescale, s, r.best_val_accuracy, r.test_accuracy, r.mean_prune_ratio()});
    }
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "rescale,grad_scale,best_val_accuracy,test_accuracy,mean_prune_ratio\n";
  for (const auto& r : rows) {
    out << (r.rescale ? "true" : "false") << ',' << num(r.grad_scale) << ',' << num(r.best_val_accuracy) << ','
        << num(r.test_accuracy) << ',' << num(r.mean_prune_ratio) << '\n';
  }
}

void write_run(const std::string& dir, const Config& cfg, const RunSummary& run) {
  fs::create_directories(dir);
  {
    std::ofstream m(fs::path(dir) / "metrics.csv", std::ios::trunc);
    if (!m) throw Error("cannot write metrics to " + dir);
    write_metrics_csv(m, run.history);
  }
  {
    std::ofstream c(fs::path(dir) / "config.ini", std::ios::trunc);
    if (!c) throw Error("cannot write config to " + dir);
    c << format_config(cfg);
  }
  for (const auto& [name, ckpt] : run.checkpoints) save_checkpoint(ckpt, (fs::path(dir) / (name + ".ckpt")).string());
}

std::vector<ReportInput> collect_metrics(const std::string& path) {
  std::vector<fs::path> files;
  if (fs::is_regular_file(path)) {
    files.emplace_back(path);
  } else if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file() && e.path().filename() == "metrics.csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    throw Error("no metrics found at " + path);
  }
  if (files.empty()) throw Error("no metrics.csv under " + path);
  std::vector<ReportInput> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw Error("cannot read " + f.string());
    ReportInput r;
    const fs::path parent = f.parent_path();
    r.name = parent.empty() ? "." : parent.filename().string();
    try {
      r.history = read_metrics_csv(in);
    } catch (const Error& e) {
      throw Error(f.string() + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_layer_report(std::ostream& out, const std::vector<ReportInput>& runs) {
  out << "run,epoch,split,layer,threshold,prune_ratio\n";
  for (const auto& run : runs) {
    for (const auto& rec : run.history) {
      for (const auto& l : rec.layers) {
        out << run.name << ',' << rec.epoch << ',' << rec.split << ',' << l.layer << ',' << num(l.threshold) << ','
            << num(l.prune_ratio) << '\n';
      }
    }
  }
}

void write_summary_table(std::ostream& out, const std::vector<ReportInput>& runs) {
  std::set<std::size_t> ids;
  for (const auto& run : runs)
    for (const auto& rec : run.history)
      for (const auto& l : rec.layers) ids.insert(l.layer);
  out << "run,best_epoch,val_accuracy,test_accuracy,mean_prune_ratio";
  for (auto i : ids) out << ",layer_" << i << "_threshold,layer_" << i << "_prune_ratio";
  out << '\n';
  for (const auto& run : runs) {
    const MetricsRecord* fin = nullptr;
    for (const auto& rec : run.history)
      if (rec.split == "test") fin = &rec;
    if (!fin) {
      for (const auto& rec : run.history)
        if (rec.split == "val") fin = &rec;
    }
    if (!fin) continue;
    double val = fin->split == "val" ? fin->accuracy : 0.0;
    for (const auto& rec : run.history)
      if (rec.split == "val" && rec.epoch == fin->epoch) val = rec.accuracy;
    double prune = 0.0;
    for (const auto& l : fin->layers) prune += l.prune_ratio;
    if (!fin->layers.empty()) prune /= static_cast<double>(fin->layers.size());
    out << run.name << ',' << fin->epoch << ',' << num(val) << ','
        << (fin->split == "test" ? num(fin->accuracy) : std::string()) << ',' << num(prune);
    for (auto i : ids) {
      auto it = std::find_if(fin->layers.begin(), fin->layers.end(), [i](const LayerMetric& m) { return m.layer == i; });
      if (it == fin->layers.end()) {
        out << ",,";
      } else {
        out << ',' << num(it->threshold) << ',' << num(it->prune_ratio);
      }
    }
    out << '\n';
  }
}

}  // namespace sdq
