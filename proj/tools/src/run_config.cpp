// Copyright 2026 The maskrec Authors.
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

#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "maskrec/errors.hpp"

namespace maskrec::cli {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>> kSchema = {
    {"model",
     {"n_sparse", "table_sizes", "embed_dim", "n_dense", "bot_widths", "top_widths", "interaction", "n_layers",
      "n_heads", "mask", "dropout_p", "activation", "ffn_mult", "positional", "layer_norm", "seq_widths"}},
    {"train", {"optimizer", "lr", "batch_size", "max_iters", "target_auc", "eval_every", "seed", "out_dir"}},
    {"data", {"format", "path", "eval_path", "eval_fraction", "n_train", "n_eval", "seed", "eval_seed", "seq_len"}},
};

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (tree_ == nullptr) return std::nullopt;
    auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  std::optional<std::uint64_t> uint(const std::string& key) const {
    auto s = raw(key);
    if (!s) return std::nullopt;
    return parse_uint(key, *s);
  }

  std::optional<double> real(const std::string& key) const {
    auto s = raw(key);
    if (!s) return std::nullopt;
    return parse_real(key, *s);
  }

  std::optional<bool> flag(const std::string& key) const {
    auto s = raw(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "1" || *s == "yes" || *s == "on") return true;
    if (*s == "false" || *s == "0" || *s == "no" || *s == "off") return false;
    throw ConfigError(key, "expected a boolean, got '" + *s + "'");
  }

  template <typename T, typename Parse>
  std::optional<std::vector<T>> list(const std::string& key, Parse parse) const {
    auto s = raw(key);
    if (!s) return std::nullopt;
    std::vector<T> out;
    std::stringstream in(*s);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse(key, trim(item)));
    if (out.empty()) throw ConfigError(key, "list is empty");
    return out;
  }

  std::optional<std::vector<std::size_t>> sizes(const std::string& key) const {
    return list<std::size_t>(key, [](const std::string& k, const std::string& v) { return parse_uint(k, v); });
  }

  static std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError(key, "expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  static double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError(key, "expected a number, got '" + s + "'");
    }
    return v;
  }

 private:
  std::string name_;
  const pt::ptree* tree_;
};

void check_known_keys(const pt::ptree& root) {
  for (const auto& [section, body] : root) {
    auto it = kSchema.find(section);
    if (it == kSchema.end()) {
      if (body.empty()) throw ConfigError(section, "key outside of a [model], [train] or [data] section");
      throw ConfigError(section, "unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) throw ConfigError(key, "unknown key in [" + section + "]");
    }
  }
}

struct FormatDefaults {
  std::size_t n_sparse;
  std::size_t n_dense;
};

FormatDefaults defaults_for(DataFormat f) {
  switch (f) {
    case DataFormat::criteo:
      return {kCriteoSparse, kCriteoDense};
    case DataFormat::avazu:
      return {kAvazuSparse, 1};
    case DataFormat::taobao:
      return {kTaobaoSparse, 1};
    case DataFormat::synthetic:
    case DataFormat::indexed:
      break;
  }
  const SyntheticSpec s;
  return {s.n_sparse, s.n_dense};
}

}  // namespace

RunConfig parse_run_config(const std::string& text, bool check_data) {
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  check_known_keys(root);
  const auto section = [&](const char* name) {
    auto child = root.get_child_optional(name);
    return Section(name, child ? &*child : nullptr);
  };
  const Section model = section("model"), train = section("train"), data = section("data");

  RunConfig cfg;

  // [train]
  if (auto v = train.raw("optimizer")) cfg.train.optimizer = parse_optimizer(*v);
  if (auto v = train.real("lr")) cfg.train.lr = *v;
  if (auto v = train.uint("batch_size")) cfg.train.batch_size = *v;
  if (auto v = train.uint("max_iters")) cfg.train.max_iters = *v;
  if (auto v = train.real("target_auc")) cfg.train.target_auc = *v;
  if (auto v = train.uint("eval_every")) cfg.train.eval_every = *v;
  if (auto v = train.uint("seed")) cfg.train.seed = *v;
  if (auto v = train.raw("out_dir")) cfg.out_dir = *v;

  // [data]
  DataConfig& d = cfg.data;
  if (auto v = data.raw("format")) d.spec.format = parse_data_format(*v);
  if (d.spec.format == DataFormat::indexed) throw ConfigError("format", "indexed input is only accepted by dump-attention");
  if (auto v = data.raw("path")) d.spec.path = *v;
  if (auto v = data.raw("eval_path")) d.eval_path = std::filesystem::path(*v);
  if (auto v = data.real("eval_fraction")) d.eval_fraction = *v;
  if (auto v = data.uint("n_train")) d.n_train = *v;
  if (auto v = data.uint("n_eval")) d.n_eval = *v;
  d.seed = data.uint("seed").value_or(cfg.train.seed);
  d.eval_seed = data.uint("eval_seed").value_or(d.seed + 1);
  if (auto v = data.uint("seq_len")) d.spec.seq_len = *v;
  d.spec.seed = d.seed;
  d.spec.n = d.n_train;

  // [model]
  ModelConfig& m = cfg.model;
  const FormatDefaults fd = defaults_for(d.spec.format);
  m.n_sparse = model.uint("n_sparse").value_or(fd.n_sparse);
  m.n_dense = model.uint("n_dense").value_or(fd.n_dense);
  if (auto v = model.uint("embed_dim")) m.embed_dim = *v;
  if (auto v = model.sizes("table_sizes")) {
    m.table_sizes = *v;
    // A single entry applies to every sparse feature.
    if (m.table_sizes.size() == 1 && m.n_sparse > 1) m.table_sizes.assign(m.n_sparse, m.table_sizes.front());
  } else if (m.n_sparse > 0) {
    throw ConfigError("table_sizes", "required when n_sparse > 0");
  }
  m.bot_widths = model.sizes("bot_widths").value_or(std::vector<std::size_t>{m.embed_dim});
  m.top_widths = model.sizes("top_widths").value_or(std::vector<std::size_t>{m.embed_dim, 1});
  if (auto v = model.raw("interaction")) m.interaction = parse_interaction(*v);
  if (auto v = model.uint("n_layers")) m.n_layers = *v;
  if (auto v = model.uint("n_heads")) m.n_heads = *v;
  if (auto v = model.list<double>("mask", Section::parse_real)) m.mask.thetas = *v;
  if (auto v = model.real("dropout_p")) m.dropout_p = *v;
  if (auto v = model.raw("activation")) m.activation = parse_activation(*v);
  if (auto v = model.uint("ffn_mult")) m.ffn_mult = *v;
  if (auto v = model.flag("positional")) m.positional = *v;
  if (auto v = model.flag("layer_norm")) m.layer_norm = *v;
  if (m.interaction == InteractionKind::trec && m.n_heads > 0 && m.embed_dim % m.n_heads == 0) fill_default_mask(m);
  if (auto v = model.sizes("seq_widths")) cfg.sequence = SequenceConfig{*v};

  d.spec.hash_sizes = m.table_sizes;
  cross_validate(cfg, check_data);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, bool check_data) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), check_data);
}

void cross_validate(const RunConfig& cfg, bool check_data) {
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.sequence) cfg.sequence->validate(cfg.model);
  if (!check_data) return;

  const DataConfig& d = cfg.data;
  const DataFormat f = d.spec.format;
  if (!(d.eval_fraction > 0.0 && d.eval_fraction < 1.0)) throw ConfigError("eval_fraction", "must lie in (0, 1)");
  if (f != DataFormat::synthetic) {
    const FormatDefaults fd = defaults_for(f);
    if (cfg.model.n_sparse != fd.n_sparse) {
      throw ConfigError("n_sparse", std::string(to_string(f)) + " data has " + std::to_string(fd.n_sparse) +
                                        " sparse features");
    }
    if (cfg.model.n_dense != fd.n_dense) {
      throw ConfigError("n_dense", std::string(to_string(f)) + " data has " + std::to_string(fd.n_dense) +
                                       " dense features");
    }
    for (std::size_t size : cfg.model.table_sizes) {
      if (size < 2) throw ConfigError("table_sizes", "hashed tables need at least 2 rows");
    }
    if (d.spec.path.empty()) throw ConfigError("path", "required for " + std::string(to_string(f)) + " data");
  } else {
    const SyntheticSpec s;
    if (d.n_train == 0) throw ConfigError("n_train", "synthetic data needs a positive record count");
    if (d.n_eval == 0) throw ConfigError("n_eval", "synthetic data needs a positive record count");
    if (cfg.model.n_sparse != s.n_sparse || cfg.model.n_dense != s.n_dense) {
      throw ConfigError("n_sparse", "synthetic data has " + std::to_string(s.n_sparse) + " sparse and " +
                                        std::to_string(s.n_dense) + " dense features");
    }
    for (std::size_t size : cfg.model.table_sizes) {
      if (size < s.vocab) {
        throw ConfigError("table_sizes", "synthetic values need tables of at least " + std::to_string(s.vocab) + " rows");
      }
    }
  }
  if ((f == DataFormat::taobao) != cfg.sequence.has_value()) {
    throw ConfigError("seq_widths", "taobao data requires seq_widths and other formats must not set it");
  }
  if (f == DataFormat::taobao && d.spec.seq_len == 0) throw ConfigError("seq_len", "must be positive");
}

}  // namespace maskrec::cli
