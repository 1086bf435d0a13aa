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

#include "sdq/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sdq {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"run", {"seed", "output_dir", "threads"}},
      {"data",
       {"source", "dir", "train_count", "val_count", "test_count", "synthetic_classes", "synthetic_height",
        "synthetic_width", "synthetic_noise"}},
      {"model", {"input", "layers"}},
      {"quant",
       {"enabled", "weight_bits", "act_bits", "mode", "alpha_init", "weight_grad_scale", "act_grad_scale",
        "alpha_weight_decay", "sigma_momentum", "outside_grad", "quantize_first", "quantize_last"}},
      {"train",
       {"epochs", "batch_size", "lr", "momentum", "weight_decay", "augment_shift", "bits_schedule", "grad_scales",
        "rescale", "two_phase", "phase2_epochs", "phase2_lr"}},
      {"progressive", {"checkpoint", "bits", "rescale", "grid_scales"}},
  };
  return s;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <typename T>
  void get(const char* key, T& out) const {
    const std::string* raw = find(key);
    if (!raw) return;
    out = convert<T>(key, *raw);
  }

  void get(const char* key, std::string& out) const {
    if (const std::string* raw = find(key)) out = *raw;
  }

  void get(const char* key, bool& out) const {
    const std::string* raw = find(key);
    if (!raw) return;
    if (*raw == "true") {
      out = true;
    } else if (*raw == "false") {
      out = false;
    } else {
      fail(key, *raw, "true or false");
    }
  }

  template <typename T>
  void get_list(const char* key, std::vector<T>& out) const {
    const std::string* raw = find(key);
    if (!raw) return;
    out.clear();
    if (raw->empty()) return;
    std::vector<std::string> parts;
    boost::split(parts, *raw, boost::is_any_of(","));
    for (auto& p : parts) out.push_back(convert<T>(key, boost::trim_copy(p)));
  }

  [[noreturn]] void fail(const char* key, const std::string& raw, const char* expected) const {
    throw Error("config: [" + name_ + "] " + key + ": expected " + expected + ", got '" + raw + "'");
  }

 private:
  const std::string* find(const char* key) const {
    if (!tree_) return nullptr;
    const auto it = tree_->find(key);
    if (it == tree_->not_found()) return nullptr;
    return &it->second.data();
  }

  template <typename T>
  T convert(const char* key, const std::string& raw) const {
    if constexpr (std::is_unsigned_v<T>) {
      if (!raw.empty() && raw.front() == '-') fail(key, raw, "a non-negative integer");
    }
    try {
      return boost::lexical_cast<T>(raw);
    } catch (const boost::bad_lexical_cast&) {
      fail(key, raw, std::is_integral_v<T> ? "an integer" : "a number");
    }
  }

  const pt::ptree* tree_;
  std::string name_;
};

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream o;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) o << ", ";
    if constexpr (std::is_floating_point_v<T>) {
      o << fmt_double(v[i]);
    } else {
      o << v[i];
    }
  }
  return o.str();
}

// Rejects repeated [section] headers, which the ini reader would merge.
void check_duplicate_sections(const std::string& text) {
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    boost::trim(line);
    if (line.size() >= 2 && line.front() == '[' && line.back() == ']') {
      const std::string name = boost::trim_copy(line.substr(1, line.size() - 2));
      if (!seen.insert(name).second) {
        throw Error("config line " + std::to_string(lineno) + ": duplicate section [" + name + "]");
      }
    }
  }
}

}  // namespace

ModelSpec default_model_spec() {
  ModelSpec m;
  m.input = {1, 28, 28};
  m.layers = {{LayerKind::conv2d, 16, 3, 2, 1, true},
              {LayerKind::conv2d, 32, 3, 2, 1, true},
              {LayerKind::linear, 10, 1, 1, 0, false}};
  return m;
}

Config default_config() {
  Config c;
  c.model = default_model_spec();
  c.train.epochs = 15;
  c.train.optimizer.weight_decay = 5e-3;
  c.train.augment_shift = 2;
  return c;
}

std::vector<LayerSpec> parse_layers(const std::string& text) {
  std::vector<LayerSpec> out;
  std::vector<std::string> items;
  boost::split(items, text, boost::is_any_of(";"));
  for (auto item : items) {
    boost::trim(item);
    if (item.empty()) continue;
    std::vector<std::string> tok;
    boost::split(tok, item, boost::is_space(), boost::token_compress_on);
    auto bad = [&](const std::string& why) { throw Error("config: [model] layers: '" + item + "': " + why); };
    if (tok.size() < 2) bad("expected '<conv|linear> <out> [options]'");
    LayerSpec l;
    if (tok[0] == "conv") {
      l.kind = LayerKind::conv2d;
      l.batchnorm = true;
    } else if (tok[0] == "linear") {
      l.kind = LayerKind::linear;
      l.kernel = 1;
      l.batchnorm = false;
    } else {
      bad("unknown layer kind '" + tok[0] + "'");
    }
    auto number = [&](const std::string& s) -> std::size_t {
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) bad("expected a number in '" + s + "'");
      return std::stoul(s);
    };
    l.out = number(tok[1]);
    if (l.out == 0) bad("output size must be positive");
    for (std::size_t i = 2; i < tok.size(); ++i) {
      const std::string& t = tok[i];
      if (t == "bn") {
        l.batchnorm = true;
      } else if (t == "nobn") {
        l.batchnorm = false;
      } else if (l.kind == LayerKind::conv2d && t.size() > 1 && t[0] == 'k') {
        l.kernel = number(t.substr(1));
      } else if (l.kind == LayerKind::conv2d && t.size() > 1 && t[0] == 's') {
        l.stride = number(t.substr(1));
      } else if (l.kind == LayerKind::conv2d && t.size() > 1 && t[0] == 'p') {
        l.padding = number(t.substr(1));
      } else {
        bad("unknown option '" + t + "'");
      }
    }
    out.push_back(l);
  }
  if (out.empty()) throw Error("config: [model] layers: no layers given");
  return out;
}

std::string format_layers(const std::vector<LayerSpec>& layers) {
  std::ostringstream o;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (i) o << "; ";
    if (l.kind == LayerKind::conv2d) {
      o << "conv " << l.out << " k" << l.kernel << " s" << l.stride << " p" << l.padding;
    } else {
      o << "linear " << l.out;
    }
    o << (l.batchnorm ? " bn" : " nobn");
  }
  return o.str();
}

void Config::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error("config: " + what);
  };
  need(run.threads >= 1, "[run] threads must be at least 1");
  need(!run.output_dir.empty(), "[run] output_dir must not be empty");
  need(data.source == "mnist" || data.source == "synthetic", "[data] source must be mnist or synthetic");
  need(data.train_count >= 2, "[data] train_count must be at least 2");
  if (data.source == "synthetic") {
    need(data.synthetic.classes >= 2 && data.synthetic.classes <= 255, "[data] synthetic_classes must be in [2, 255]");
    need(data.synthetic.height >= 1 && data.synthetic.width >= 1, "[data] synthetic image size must be positive");
    need(data.synthetic.noise >= 0.0, "[data] synthetic_noise must be non-negative");
  }
  need(model.input.size() == 3, "[model] input must be channels, height, width");
  for (auto d : model.input) need(d > 0, "[model] input dimensions must be positive");
  need(!model.layers.empty(), "[model] layers must not be empty");
  try {
    Rng scratch(0);
    (void)Model(model, quant, scratch);
    train.validate();
    if (quant.enabled) {
      QuantizerState w;
      w.bits = quant.weight_bits;
      w.mode = quant.weight_mode;
      w.validate();
      QuantizerState a;
      a.bits = quant.act_bits;
      a.is_signed = false;
      a.validate();
    }
    for (int b : train.bits_schedule) {
      QuantizerState st;
      st.bits = b;
      st.mode = quant.weight_mode;
      st.validate();
    }
  } catch (const Error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  need(progressive.bits >= 2, "[progressive] bits must be at least 2");
  for (double s : progressive.grid_scales) need(s >= 0.0, "[progressive] grid_scales must be non-negative");
}

Config parse_config(const std::string& text) {
  check_duplicate_sections(text);
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  const auto& sch = schema();
  for (const auto& [name, section] : tree) {
    if (!section.data().empty()) throw Error("config: key '" + name + "' appears outside any section");
    const auto it = sch.find(name);
    if (it == sch.end()) throw Error("config: unknown section [" + name + "]");
    for (const auto& [key, value] : section) {
      if (!it->second.count(key)) throw Error("config: unknown key '" + key + "' in [" + name + "]");
    }
  }
  auto section = [&](const char* name) {
    const auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };

  Config c = default_config();
  const Section run = section("run");
  run.get("seed", c.run.seed);
  run.get("output_dir", c.run.output_dir);
  run.get("threads", c.run.threads);

  const Section data = section("data");
  data.get("source", c.data.source);
  data.get("dir", c.data.dir);
  data.get("train_count", c.data.train_count);
  data.get("val_count", c.data.val_count);
  data.get("test_count", c.data.test_count);
  data.get("synthetic_classes", c.data.synthetic.classes);
  data.get("synthetic_height", c.data.synthetic.height);
  data.get("synthetic_width", c.data.synthetic.width);
  data.get("synthetic_noise", c.data.synthetic.noise);

  const Section model = section("model");
  std::vector<std::size_t> input;
  model.get_list("input", input);
  if (!input.empty()) c.model.input = input;
  std::string layers;
  model.get("layers", layers);
  if (!layers.empty()) c.model.layers = parse_layers(layers);

  const Section quant = section("quant");
  quant.get("enabled", c.quant.enabled);
  quant.get("weight_bits", c.quant.weight_bits);
  quant.get("act_bits", c.quant.act_bits);
  std::string mode;
  quant.get("mode", mode);
  if (!mode.empty()) {
    try {
      c.quant.weight_mode = parse_quant_mode(mode);
    } catch (const Error&) {
      quant.fail("mode", mode, "uniform or log2");
    }
  }
  quant.get("alpha_init", c.quant.alpha_init);
  quant.get("weight_grad_scale", c.quant.weight_grad_scale);
  quant.get("act_grad_scale", c.quant.act_grad_scale);
  quant.get("alpha_weight_decay", c.quant.alpha_weight_decay);
  quant.get("sigma_momentum", c.quant.sigma_momentum);
  std::string outside;
  quant.get("outside_grad", outside);
  if (outside == "zero") {
    c.quant.weight_outside_grad = OutsideGrad::zero;
  } else if (outside == "pass") {
    c.quant.weight_outside_grad = OutsideGrad::pass_through;
  } else if (!outside.empty()) {
    quant.fail("outside_grad", outside, "zero or pass");
  }
  quant.get("quantize_first", c.quant.quantize_first);
  quant.get("quantize_last", c.quant.quantize_last);

  const Section train = section("train");
  train.get("epochs", c.train.epochs);
  train.get("batch_size", c.train.batch_size);
  train.get("lr", c.train.optimizer.lr);
  train.get("momentum", c.train.optimizer.momentum);
  train.get("weight_decay", c.train.optimizer.weight_decay);
  train.get("augment_shift", c.train.augment_shift);
  train.get_list("bits_schedule", c.train.bits_schedule);
  train.get_list("grad_scales", c.train.grad_scales);
  train.get("rescale", c.train.rescale);
  train.get("two_phase", c.train.two_phase);
  train.get("phase2_epochs", c.train.phase2_epochs);
  train.get("phase2_lr", c.train.phase2_lr);

  const Section prog = section("progressive");
  prog.get("checkpoint", c.progressive.checkpoint);
  prog.get("bits", c.progressive.bits);
  prog.get("rescale", c.progressive.rescale);
  prog.get_list("grid_scales", c.progressive.grid_scales);

  c.validate();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string format_config(const Config& c) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::ostringstream o;
  o << "[run]\n"
    << "seed = " << c.run.seed << '\n'
    << "output_dir = " << c.run.output_dir << '\n'
    << "threads = " << c.run.threads << "\n\n";
  o << "[data]\n"
    << "source = " << c.data.source << '\n';
  if (!c.data.dir.empty()) o << "dir = " << c.data.dir << '\n';
  o << "train_count = " << c.data.train_count << '\n'
    << "val_count = " << c.data.val_count << '\n'
    << "test_count = " << c.data.test_count << '\n'
    << "synthetic_classes = " << c.data.synthetic.classes << '\n'
    << "synthetic_height = " << c.data.synthetic.height << '\n'
    << "synthetic_width = " << c.data.synthetic.width << '\n'
    << "synthetic_noise = " << fmt_double(c.data.synthetic.noise) << "\n\n";
  o << "[model]\n"
    << "input = " << join(c.model.input) << '\n'
    << "layers = " << format_layers(c.model.layers) << "\n\n";
  o << "[quant]\n"
    << "enabled = " << b(c.quant.enabled) << '\n'
    << "weight_bits = " << c.quant.weight_bits << '\n'
    << "act_bits = " << c.quant.act_bits << '\n'
    << "mode = " << to_string(c.quant.weight_mode) << '\n'
    << "alpha_init = " << fmt_double(c.quant.alpha_init) << '\n'
    << "weight_grad_scale = " << fmt_double(c.quant.weight_grad_scale) << '\n'
    << "act_grad_scale = " << fmt_double(c.quant.act_grad_scale) << '\n'
    << "alpha_weight_decay = " << fmt_double(c.quant.alpha_weight_decay) << '\n'
    << "sigma_momentum = " << fmt_double(c.quant.sigma_momentum) << '\n'
    << "outside_grad = " << (c.quant.weight_outside_grad == OutsideGrad::zero ? "zero" : "pass") << '\n'
    << "quantize_first = " << b(c.quant.quantize_first) << '\n'
    << "quantize_last = " << b(c.quant.quantize_last) << "\n\n";
  o << "[train]\n"
    << "epochs = " << c.train.epochs << '\n'
    << "batch_size = " << c.train.batch_size << '\n'
    << "lr = " << fmt_double(c.train.optimizer.lr) << '\n'
    << "momentum = " << fmt_double(c.train.optimizer.momentum) << '\n'
    << "weight_decay = " << fmt_double(c.train.optimizer.weight_decay) << '\n'
    << "augment_shift = " << c.train.augment_shift << '\n'
    << "bits_schedule = " << join(c.train.bits_schedule) << '\n'
    << "grad_scales = " << join(c.train.grad_scales) << '\n'
    << "rescale = " << b(c.train.rescale) << '\n'
    << "two_phase = " << b(c.train.two_phase) << '\n'
    << "phase2_epochs = " << c.train.phase2_epochs << '\n'
    << "phase2_lr = " << fmt_double(c.train.phase2_lr) << "\n\n";
  o << "[progressive]\n";
  if (!c.progressive.checkpoint.empty()) o << "checkpoint = " << c.progressive.checkpoint << '\n';
  o << "bits = " << c.progressive.bits << '\n'
    << "rescale = " << b(c.progressive.rescale) << '\n'
    << "grid_scales = " << join(c.progressive.grid_scales) << '\n';
  return o.str();
}

}  // namespace sdq
