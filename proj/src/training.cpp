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

#include "sdq/training.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace sdq {

double rescale_alpha(double alpha_hi, int b_lo, int b_hi, bool is_signed, QuantMode mode) {
  if (b_lo > b_hi) {
    throw Error("rescale_alpha: target bits " + std::to_string(b_lo) + " exceed source bits " + std::to_string(b_hi));
  }
  QuantizerState lo, hi;
  lo.bits = b_lo;
  hi.bits = b_hi;
  lo.is_signed = hi.is_signed = is_signed;
  lo.mode = hi.mode = mode;
  lo.validate();
  hi.validate();
  if (b_lo == b_hi) return alpha_hi;
  return alpha_hi * static_cast<double>(lo.max_level()) / static_cast<double>(hi.max_level());
}

void TrainPlan::validate() const {
  if (batch_size == 0) throw Error("batch size must be positive");
  if (!(optimizer.lr > 0.0)) throw Error("learning rate must be positive");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) throw Error("momentum must be in [0, 1)");
  if (optimizer.weight_decay < 0.0) throw Error("weight decay must be non-negative");
  if (phase2_lr < 0.0) throw Error("phase-2 learning rate must be non-negative");
  for (std::size_t i = 1; i < bits_schedule.size(); ++i) {
    if (bits_schedule[i] >= bits_schedule[i - 1]) throw Error("bits schedule must be strictly decreasing");
  }
  for (double s : grad_scales)
    if (!(s >= 0.0)) throw Error("gradient scale must be non-negative");
  if (grad_scales.size() > 1 && grad_scales.size() != std::max<std::size_t>(bits_schedule.size(), 1)) {
    throw Error("need one gradient scale per bits-schedule stage");
  }
}

double TrainPlan::grad_scale_for_stage(std::size_t stage) const {
  if (grad_scales.empty()) return 1.0;
  if (grad_scales.size() == 1) return grad_scales.front();
  return grad_scales.at(stage);
}

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return {};
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> rows;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - begin);
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), begin);
    const Tensor logits = model.forward(data.gather(rows), false);
    const LossResult lr = softmax_cross_entropy(logits, data.gather_labels(rows));
    loss_sum += lr.loss * static_cast<double>(n);
    correct += lr.correct;
  }
  const double total = static_cast<double>(data.size());
  return {loss_sum / total, static_cast<double>(correct) / total};
}

std::vector<LayerMetric> layer_metrics(const Model& model) {
  std::vector<LayerMetric> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (!l.quantized()) continue;
    QuantizerState st = l.weight_quant;
    st.sigma = l.current_weight_sigma();
    out.push_back({i, st.threshold(), pruning_ratio(l.quantized_weights().levels)});
  }
  return out;
}

Tensor translate_images(const Tensor& x, std::span<const int> dy, std::span<const int> dx) {
  if (x.rank() != 4 || dy.size() != x.dim(0) || dx.size() != x.dim(0)) {
    throw ShapeError("translate_images expects [n, c, h, w] and one offset pair per sample");
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const auto h = static_cast<std::ptrdiff_t>(x.dim(2)), w = static_cast<std::ptrdiff_t>(x.dim(3));
  const std::size_t plane = x.dim(2) * x.dim(3);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = x.raw() + i * c * plane;
    double* dst = y.raw() + i * c * plane;
    const double fill = *std::min_element(src, src + c * plane);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t q = 0; q < w; ++q) {
          const std::ptrdiff_t sr = r - dy[i], sq = q - dx[i];
          dst[ch * plane + r * w + q] =
              (sr >= 0 && sr < h && sq >= 0 && sq < w) ? src[ch * plane + sr * w + sq] : fill;
        }
      }
    }
  }
  return y;
}

namespace {

// Bit patterns of every alpha and sigma a frozen model must keep.
std::vector<std::uint64_t> frozen_state(const Model& model) {
  std::vector<std::uint64_t> s;
  for (const auto& l : model.layers) {
    if (!l.frozen()) continue;
    for (double v : {l.weight_quant.alpha, l.act_quant.alpha, l.act_sigma.value(), l.frozen_weight_sigma}) {
      s.push_back(std::bit_cast<std::uint64_t>(v));
    }
  }
  return s;
}

}  // namespace

TrainResult train(const TrainPlan& plan, Model& model, const DataSplits& data, const Rng& rng,
                  std::size_t epoch_offset, const TrainHooks& hooks) {
  plan.validate();
  const Dataset& tr = data.train;
  if (tr.size() < 2) throw Error("training set needs at least two samples");
  const std::size_t bs = std::min(plan.batch_size, tr.size());
  // The ragged tail is dropped so every step sees a full batch.
  const std::size_t steps_per_epoch = tr.size() / bs;
  const std::size_t total_steps = steps_per_epoch * plan.epochs;
  const bool check_freeze = std::any_of(model.layers.begin(), model.layers.end(),
                                        [](const QuantizedLayer& l) { return l.frozen(); });

  model.set_eval(false);
  Sgd sgd(plan.optimizer);
  TrainResult result;
  Model best = model;
  bool have_best = false;
  std::vector<std::size_t> perm(tr.size());
  std::vector<std::size_t> rows(bs);
  std::vector<int> dy(bs), dx(bs);
  std::uint64_t step = 0;

  for (std::size_t e = 0; e < plan.epochs; ++e) {
    const std::size_t epoch = epoch_offset + e + 1;
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng shuffle = rng.fork(epoch);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::copy_n(perm.begin() + static_cast<std::ptrdiff_t>(b * bs), bs, rows.begin());
      Tensor x = tr.gather(rows);
      if (plan.augment_shift > 0 && x.rank() == 4) {
        const auto span = static_cast<std::uint64_t>(2 * plan.augment_shift + 1);
        const int shift = static_cast<int>(plan.augment_shift);
        for (std::size_t i = 0; i < bs; ++i) {
          dy[i] = static_cast<int>(shuffle.below(span)) - shift;
          dx[i] = static_cast<int>(shuffle.below(span)) - shift;
        }
        x = translate_images(x, dy, dx);
      }
      const auto labels = tr.gather_labels(rows);
      const std::vector<std::uint64_t> before = check_freeze ? frozen_state(model) : std::vector<std::uint64_t>{};

      model.zero_grads();
      const Tensor logits = model.forward(x, true);
      const LossResult loss = softmax_cross_entropy(logits, labels);
      model.backward(loss.grad);
      const auto params = model.params();
      sgd.step(params, cosine_lr(step, total_steps, plan.optimizer.lr));
      model.project();
      ++step;

      if (check_freeze && frozen_state(model) != before) {
        throw Error("frozen quantizer state changed at step " + std::to_string(step));
      }
      loss_sum += loss.loss * static_cast<double>(bs);
      correct += loss.correct;
    }

    const double seen = static_cast<double>(steps_per_epoch * bs);
    const auto metrics = layer_metrics(model);
    MetricsRecord train_rec{epoch, "train", loss_sum / seen, static_cast<double>(correct) / seen, metrics};
    const EvalResult val = evaluate(model, data.val);
    MetricsRecord val_rec{epoch, "val", val.loss, val.accuracy, metrics};
    result.history.push_back(train_rec);
    result.history.push_back(val_rec);
    if (hooks.on_epoch) hooks.on_epoch(train_rec, val_rec);

    const double score = data.val.size() ? val.accuracy : train_rec.accuracy;
    if (!have_best || score >= result.best_val_accuracy) {
      have_best = true;
      best = model;
      result.best_epoch = epoch;
      result.best_val_accuracy = score;
      result.velocity = sgd.velocity();
    }
  }
  result.steps = step;
  if (have_best) model = std::move(best);
  model.set_eval(true);

  const EvalResult test = evaluate(model, data.test);
  result.test_accuracy = test.accuracy;
  if (data.test.size()) {
    result.history.push_back({result.best_epoch, "test", test.loss, test.accuracy, layer_metrics(model)});
  }
  return result;
}

TwoPhaseResult two_phase(const TrainPlan& plan, Model& model, const DataSplits& data, const Rng& rng,
                         std::size_t epoch_offset, const TrainHooks& hooks) {
  TwoPhaseResult r;
  r.phase1 = train(plan, model, data, rng.fork(1), epoch_offset, hooks);
  r.phase1_model = model;
  TrainPlan p2 = plan;
  p2.epochs = plan.phase2_epochs;
  if (plan.phase2_lr > 0.0) p2.optimizer.lr = plan.phase2_lr;
  if (p2.epochs == 0) return r;
  model.freeze_quantizers();
  r.phase2 = train(p2, model, data, rng.fork(2), epoch_offset + plan.epochs, hooks);
  return r;
}

Model progressive_init(const Checkpoint& ckpt_hi, int target_bits, const ProgressiveOptions& options) {
  Model model = ckpt_hi.model;
  QuantConfig qc = model.quant_config();
  const bool any = std::any_of(model.layers.begin(), model.layers.end(),
                               [](const QuantizedLayer& l) { return l.quantized(); });
  if (!qc.enabled || !any) throw Error("checkpoint has no quantizer state to transfer from");
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& l = model.layers[i];
    if (!l.quantized()) continue;
    if (l.weight_quant.bits < target_bits || (l.has_act_quant() && l.act_quant.bits < target_bits)) {
      throw Error("checkpoint layer " + std::to_string(i) + " has " + std::to_string(l.weight_quant.bits) +
                  "-bit quantizers, below the " + std::to_string(target_bits) + "-bit target");
    }
  }
  if (options.weight_grad_scale < 0.0 || options.act_grad_scale < 0.0) {
    throw Error("gradient scale must be non-negative");
  }

  struct Alphas {
    double weight, act;
  };
  std::vector<Alphas> alphas;
  for (const auto& l : model.layers) {
    Alphas a{l.weight_quant.alpha, l.act_quant.alpha};
    if (l.quantized() && options.rescale) {
      a.weight = rescale_alpha(a.weight, target_bits, l.weight_quant.bits, true, l.weight_quant.mode);
      if (l.has_act_quant()) a.act = rescale_alpha(a.act, target_bits, l.act_quant.bits, false, QuantMode::uniform);
    }
    alphas.push_back(a);
  }

  model.unfreeze_quantizers();
  qc.weight_bits = target_bits;
  qc.act_bits = target_bits;
  qc.weight_grad_scale = options.weight_grad_scale;
  qc.act_grad_scale = options.act_grad_scale;
  model.configure(qc);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& l = model.layers[i];
    if (!l.quantized()) continue;
    l.weight_quant.alpha = alphas[i].weight;
    if (l.has_act_quant()) l.act_quant.alpha = alphas[i].act;
    l.weight_quant.sigma = l.current_weight_sigma();
    l.act_quant.sigma = l.act_sigma.value();
  }
  return model;
}

namespace {

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& history) {
  std::set<std::size_t> layer_ids;
  for (const auto& r : history)
    for (const auto& m : r.layers) layer_ids.insert(m.layer);
  out << "epoch,split,loss,accuracy";
  for (auto i : layer_ids) out << ",layer_" << i << "_threshold,layer_" << i << "_prune_ratio";
  out << '\n';
  for (const auto& r : history) {
    out << r.epoch << ',' << r.split << ',' << fmt_num(r.loss) << ',' << fmt_num(r.accuracy);
    for (auto i : layer_ids) {
      auto it = std::find_if(r.layers.begin(), r.layers.end(), [i](const LayerMetric& m) { return m.layer == i; });
      if (it == r.layers.end()) {
        out << ",,";
      } else {
        out << ',' << fmt_num(it->threshold) << ',' << fmt_num(it->prune_ratio);
      }
    }
    out << '\n';
  }
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error("metrics CSV is empty");
  const auto header = split_line(line);
  if (header.size() < 4 || header[0] != "epoch" || header[1] != "split" || header[2] != "loss" ||
      header[3] != "accuracy" || (header.size() - 4) % 2 != 0) {
    throw Error("metrics CSV has an unexpected header: " + line);
  }
  std::vector<std::size_t> ids;
  for (std::size_t c = 4; c < header.size(); c += 2) {
    std::size_t id = 0;
    char tail[32] = {};
    if (std::sscanf(header[c].c_str(), "layer_%zu_%31s", &id, tail) != 2 || std::string(tail) != "threshold" ||
        header[c + 1] != "layer_" + std::to_string(id) + "_prune_ratio") {
      throw Error("metrics CSV has an unexpected column: " + header[c]);
    }
    ids.push_back(id);
  }
  std::vector<MetricsRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) throw Error("metrics CSV line " + std::to_string(lineno) + ": wrong cell count");
    try {
      MetricsRecord r;
      r.epoch = std::stoul(cells[0]);
      r.split = cells[1];
      r.loss = std::stod(cells[2]);
      r.accuracy = std::stod(cells[3]);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto& t = cells[4 + 2 * k];
        const auto& p = cells[5 + 2 * k];
        if (t.empty() && p.empty()) continue;
        r.layers.push_back({ids[k], std::stod(t), std::stod(p)});
      }
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error("metrics CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

}  // namespace sdq
