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

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "maskrec/errors.hpp"
#include "maskrec/model.hpp"

namespace maskrec {

namespace {

using nlohmann::json;

constexpr const char* kFormatName = "maskrec-model";

json config_to_json(const ModelConfig& cfg) {
  return json{{"n_sparse", cfg.n_sparse},
              {"table_sizes", cfg.table_sizes},
              {"embed_dim", cfg.embed_dim},
              {"n_dense", cfg.n_dense},
              {"bot_widths", cfg.bot_widths},
              {"top_widths", cfg.top_widths},
              {"interaction", std::string(to_string(cfg.interaction))},
              {"n_layers", cfg.n_layers},
              {"n_heads", cfg.n_heads},
              {"mask", cfg.mask.thetas},
              {"dropout_p", cfg.dropout_p},
              {"activation", std::string(to_string(cfg.activation))},
              {"ffn_mult", cfg.ffn_mult},
              {"positional", cfg.positional},
              {"layer_norm", cfg.layer_norm}};
}

template <typename T>
T field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("model file is missing config field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("model file config field '") + key + "' has the wrong type");
  }
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("model file config must be an object");
  ModelConfig cfg;
  cfg.n_sparse = field<std::size_t>(j, "n_sparse");
  cfg.table_sizes = field<std::vector<std::size_t>>(j, "table_sizes");
  cfg.embed_dim = field<std::size_t>(j, "embed_dim");
  cfg.n_dense = field<std::size_t>(j, "n_dense");
  cfg.bot_widths = field<std::vector<std::size_t>>(j, "bot_widths");
  cfg.top_widths = field<std::vector<std::size_t>>(j, "top_widths");
  cfg.n_layers = field<std::size_t>(j, "n_layers");
  cfg.n_heads = field<std::size_t>(j, "n_heads");
  cfg.mask.thetas = field<std::vector<double>>(j, "mask");
  cfg.dropout_p = field<double>(j, "dropout_p");
  cfg.ffn_mult = field<std::size_t>(j, "ffn_mult");
  cfg.positional = field<bool>(j, "positional");
  cfg.layer_norm = field<bool>(j, "layer_norm");
  try {
    cfg.interaction = parse_interaction(field<std::string>(j, "interaction"));
    cfg.activation = parse_activation(field<std::string>(j, "activation"));
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file carries an invalid config: ") + e.what());
  }
  return cfg;
}

json tensors_to_json(const std::vector<NamedTensor>& named) {
  json out = json::object();
  for (const auto& [name, t] : named) {
    auto d = t.data();
    out[name] = json{{"shape", t.shape()}, {"data", std::vector<double>(d.begin(), d.end())}};
  }
  return out;
}

// Copies stored arrays into freshly initialized tensors of the expected
// shapes; every expected tensor must be present exactly once.
void fill_tensors(const json& stored, const std::vector<NamedTensor>& expected) {
  if (!stored.is_object()) throw FormatError("model file 'tensors' must be an object");
  std::set<std::string> wanted;
  for (const auto& [name, t] : expected) wanted.insert(name);
  for (const auto& [name, value] : stored.items()) {
    if (!wanted.contains(name)) throw FormatError("model file has unexpected tensor '" + name + "'");
  }
  for (const auto& [name, t] : expected) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("model file is missing tensor '" + name + "'");
    Shape shape;
    std::vector<double> data;
    try {
      shape = it->at("shape").get<Shape>();
      data = it->at("data").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw FormatError("tensor '" + name + "' is malformed");
    }
    if (shape != t.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + shape_to_string(shape) + " but the config implies " +
                        shape_to_string(t.shape()));
    }
    if (data.size() != t.numel()) {
      throw FormatError("tensor '" + name + "' holds " + std::to_string(data.size()) + " values, expected " +
                        std::to_string(t.numel()));
    }
    auto dst = t.mutable_data();
    std::copy(data.begin(), data.end(), dst.begin());
  }
}

json header(const char* kind) {
  return json{{"format", kFormatName}, {"format_version", kModelFormatVersion}, {"kind", kind}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace

std::string serialize_model(const CtrModel& model) {
  json j = header("ctr");
  j["config"] = config_to_json(model.config);
  j["tensors"] = tensors_to_json(model.parameters());
  return j.dump(1) + "\n";
}

std::string serialize_model(const SequentialModel& model) {
  json j = header("sequential");
  j["config"] = config_to_json(model.base_config);
  j["seq_config"] = json{{"seq_widths", model.seq_config.seq_widths}};
  j["tensors"] = tensors_to_json(model.parameters());
  return j.dump(1) + "\n";
}

LoadedModel deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model file is not well-formed: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFormatName) throw FormatError("not a maskrec model file");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw FormatError("model file has no format_version");
  }
  const int version = j["format_version"].get<int>();
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format_version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  if (!j.contains("config") || !j.contains("tensors")) throw FormatError("model file lacks config or tensors");
  const ModelConfig cfg = config_from_json(j["config"]);
  const std::string kind = j.value("kind", "");
  // Initialization only fixes shapes here; every value is overwritten below.
  Rng rng(0);
  if (kind == "ctr") {
    CtrModel model{cfg, init_params(cfg, rng)};
    fill_tensors(j["tensors"], model.parameters());
    return model;
  }
  if (kind == "sequential") {
    SequenceConfig seq;
    if (!j.contains("seq_config")) throw FormatError("sequential model file lacks seq_config");
    seq.seq_widths = field<std::vector<std::size_t>>(j["seq_config"], "seq_widths");
    try {
      seq.validate(cfg);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("model file carries an invalid sequence config: ") + e.what());
    }
    SequentialModel model{cfg, seq, init_params(cfg, rng), init_sequence_params(cfg, seq, rng)};
    fill_tensors(j["tensors"], model.parameters());
    return model;
  }
  throw FormatError("unknown model kind '" + kind + "'");
}

std::string model_config_json(const ModelConfig& cfg) { return config_to_json(cfg).dump(); }

void save_model(const CtrModel& model, const std::filesystem::path& path) { write_text(path, serialize_model(model)); }

void save_model(const SequentialModel& model, const std::filesystem::path& path) {
  write_text(path, serialize_model(model));
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace maskrec
