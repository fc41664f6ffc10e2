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

#include "maskrec/model.hpp"

#include <cmath>
#include <string>

#include "maskrec/errors.hpp"

namespace maskrec {

InteractionKind parse_interaction(std::string_view name) {
  if (name == "trec") return InteractionKind::trec;
  if (name == "dot") return InteractionKind::dot;
  if (name == "none") return InteractionKind::none;
  throw ConfigError("interaction", "expected trec, dot or none, got '" + std::string(name) + "'");
}

std::string_view to_string(InteractionKind kind) {
  switch (kind) {
    case InteractionKind::trec:
      return "trec";
    case InteractionKind::dot:
      return "dot";
    case InteractionKind::none:
      return "none";
  }
  return "?";
}

std::size_t ModelConfig::top_input_width() const {
  const std::size_t s = sequence_length();
  switch (interaction) {
    case InteractionKind::dot:
      return embed_dim + s * (s - 1) / 2;
    case InteractionKind::trec:
    case InteractionKind::none:
      break;
  }
  return embed_dim + s * embed_dim;
}

EncoderOptions ModelConfig::encoder_options() const {
  EncoderOptions o;
  o.dropout_p = dropout_p;
  o.activation = activation;
  o.layer_norm = layer_norm;
  return o;
}

void ModelConfig::validate() const {
  if (table_sizes.size() != n_sparse) {
    throw ConfigError("table_sizes", "expected " + std::to_string(n_sparse) + " entries (n_sparse), got " +
                                         std::to_string(table_sizes.size()));
  }
  for (std::size_t m : table_sizes) {
    if (m == 0) throw ConfigError("table_sizes", "every table needs at least one row");
  }
  if (embed_dim == 0) throw ConfigError("embed_dim", "must be positive");
  if (n_dense == 0) throw ConfigError("n_dense", "must be positive");
  if (bot_widths.empty() || bot_widths.back() != embed_dim) {
    throw ConfigError("bot_widths", "last width must equal embed_dim (" + std::to_string(embed_dim) + ")");
  }
  if (top_widths.empty() || top_widths.back() != 1) throw ConfigError("top_widths", "last width must be 1");
  for (std::size_t w : bot_widths) {
    if (w == 0) throw ConfigError("bot_widths", "widths must be positive");
  }
  for (std::size_t w : top_widths) {
    if (w == 0) throw ConfigError("top_widths", "widths must be positive");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p", "must lie in [0, 1)");
  if (interaction == InteractionKind::trec) {
    if (n_layers == 0) throw ConfigError("n_layers", "at least one encoder layer is required");
    if (n_heads == 0 || embed_dim % n_heads != 0) {
      throw ConfigError("n_heads", "must divide embed_dim (" + std::to_string(embed_dim) + "), got " +
                                       std::to_string(n_heads));
    }
    if (ffn_mult == 0) throw ConfigError("ffn_mult", "must be positive");
    mask.validate(n_heads);
  }
}

void fill_default_mask(ModelConfig& cfg) {
  if (cfg.mask.thetas.empty() && cfg.n_heads > 0) cfg.mask = default_mask_schedule(cfg.n_heads);
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(data), true);
}

DenseLayer init_dense(std::size_t in, std::size_t out, Rng& rng) {
  return {uniform_tensor({in, out}, std::sqrt(1.0 / static_cast<double>(in)), rng), Tensor::zeros({out}, true)};
}

std::vector<DenseLayer> init_mlp(std::size_t in, const std::vector<std::size_t>& widths, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t w : widths) {
    layers.push_back(init_dense(in, w, rng));
    in = w;
  }
  return layers;
}

std::size_t mlp_count(std::size_t in, const std::vector<std::size_t>& widths) {
  std::size_t n = 0;
  for (std::size_t w : widths) {
    n += in * w + w;
    in = w;
  }
  return n;
}

std::vector<DenseLayer> clone_layers(const std::vector<DenseLayer>& layers) {
  std::vector<DenseLayer> out;
  for (const auto& l : layers) out.push_back({l.w.clone(), l.b.clone()});
  return out;
}

void name_layers(std::vector<NamedTensor>& out, const std::string& prefix, const std::vector<DenseLayer>& layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.push_back({prefix + "." + std::to_string(i) + ".w", layers[i].w});
    out.push_back({prefix + "." + std::to_string(i) + ".b", layers[i].b});
  }
}

// Linear layers with ReLU between them; the last layer stays linear unless
// `activate_last`.
Tensor run_mlp(Tape& tape, Tensor x, const std::vector<DenseLayer>& layers, bool activate_last) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = ops::linear(tape, x, layers[i].w, layers[i].b);
    if (activate_last || i + 1 < layers.size()) x = ops::relu(tape, x);
  }
  return x;
}

Tensor probabilities_from_logits(Tape& tape, const Tensor& logits) {
  return ops::sigmoid(tape, ops::clamp(tape, logits, -kLogitClamp, kLogitClamp));
}

}  // namespace

RecModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  RecModelParams p;
  const double embed_bound = std::sqrt(1.0 / static_cast<double>(d));
  for (std::size_t m : cfg.table_sizes) p.tables.push_back(uniform_tensor({m, d}, embed_bound, rng));
  p.mlp_bot = init_mlp(cfg.n_dense, cfg.bot_widths, rng);

  if (cfg.interaction == InteractionKind::trec) {
    const std::size_t heads = cfg.n_heads, head_width = d / heads, ffn = cfg.ffn_width();
    const double bound = std::sqrt(1.0 / static_cast<double>(d));
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      EncoderLayerParams layer;
      for (std::size_t h = 0; h < heads; ++h) {
        layer.attention.w_q.push_back(uniform_tensor({d, head_width}, bound, rng));
        layer.attention.w_k.push_back(uniform_tensor({d, head_width}, bound, rng));
        layer.attention.w_v.push_back(uniform_tensor({d, head_width}, bound, rng));
      }
      std::vector<double> eye(heads * head_width * d, 0.0);
      for (std::size_t i = 0; i < std::min(heads * head_width, d); ++i) eye[i * d + i] = 1.0;
      layer.attention.u_msa = Tensor::from({heads * head_width, d}, std::move(eye), true);
      layer.ln_attention = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
      layer.ln_ffn = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
      const DenseLayer up = init_dense(d, ffn, rng);
      const DenseLayer down = init_dense(ffn, d, rng);
      layer.ffn = {up.w, up.b, down.w, down.b};
      p.encoder.push_back(std::move(layer));
    }
  }
  if (cfg.positional) {
    p.positional.enabled = true;
    p.positional.e_pos = uniform_tensor({cfg.sequence_length(), d}, embed_bound, rng);
  }
  p.mlp_top = init_mlp(cfg.top_input_width(), cfg.top_widths, rng);
  return p;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  std::size_t n = 0;
  for (std::size_t m : cfg.table_sizes) n += m * d;
  n += mlp_count(cfg.n_dense, cfg.bot_widths);
  if (cfg.interaction == InteractionKind::trec) {
    const std::size_t projected = cfg.n_heads * (d / cfg.n_heads);
    const std::size_t ffn = cfg.ffn_width();
    const std::size_t per_layer = 3 * d * projected + projected * d + 4 * d + (d * ffn + ffn) + (ffn * d + d);
    n += cfg.n_layers * per_layer;
  }
  if (cfg.positional) n += cfg.sequence_length() * d;
  n += mlp_count(cfg.top_input_width(), cfg.top_widths);
  return n;
}

RecModelParams RecModelParams::clone() const {
  RecModelParams p;
  for (const Tensor& t : tables) p.tables.push_back(t.clone());
  p.mlp_bot = clone_layers(mlp_bot);
  p.mlp_top = clone_layers(mlp_top);
  for (const auto& layer : encoder) {
    EncoderLayerParams c;
    for (std::size_t h = 0; h < layer.attention.heads(); ++h) {
      c.attention.w_q.push_back(layer.attention.w_q[h].clone());
      c.attention.w_k.push_back(layer.attention.w_k[h].clone());
      c.attention.w_v.push_back(layer.attention.w_v[h].clone());
    }
    c.attention.u_msa = layer.attention.u_msa.clone();
    c.ln_attention = {layer.ln_attention.gamma.clone(), layer.ln_attention.beta.clone()};
    c.ln_ffn = {layer.ln_ffn.gamma.clone(), layer.ln_ffn.beta.clone()};
    c.ffn = {layer.ffn.w1.clone(), layer.ffn.b1.clone(), layer.ffn.w2.clone(), layer.ffn.b2.clone()};
    p.encoder.push_back(std::move(c));
  }
  p.positional.enabled = positional.enabled;
  p.positional.e_pos = positional.e_pos.clone();
  return p;
}

std::vector<NamedTensor> RecModelParams::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < tables.size(); ++i) out.push_back({"tables." + std::to_string(i), tables[i]});
  name_layers(out, "mlp_bot", mlp_bot);
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string pre = "encoder." + std::to_string(l) + ".";
    const auto& layer = encoder[l];
    for (std::size_t h = 0; h < layer.attention.heads(); ++h) {
      const std::string head = pre + "head." + std::to_string(h) + ".";
      out.push_back({head + "w_q", layer.attention.w_q[h]});
      out.push_back({head + "w_k", layer.attention.w_k[h]});
      out.push_back({head + "w_v", layer.attention.w_v[h]});
    }
    out.push_back({pre + "u_msa", layer.attention.u_msa});
    out.push_back({pre + "ln_attention.gamma", layer.ln_attention.gamma});
    out.push_back({pre + "ln_attention.beta", layer.ln_attention.beta});
    out.push_back({pre + "ln_ffn.gamma", layer.ln_ffn.gamma});
    out.push_back({pre + "ln_ffn.beta", layer.ln_ffn.beta});
    out.push_back({pre + "ffn.w1", layer.ffn.w1});
    out.push_back({pre + "ffn.b1", layer.ffn.b1});
    out.push_back({pre + "ffn.w2", layer.ffn.w2});
    out.push_back({pre + "ffn.b2", layer.ffn.b2});
  }
  if (positional.enabled) out.push_back({"positional.e_pos", positional.e_pos});
  name_layers(out, "mlp_top", mlp_top);
  return out;
}

namespace {

struct FeatureSlots {
  Tensor y_dense;  // [B x D]
  Tensor z0;       // [B x (N+1) x D]
};

FeatureSlots feature_slots(Tape& tape, const RecModelParams& params, const ModelConfig& cfg,
                           const FeatureBatch& batch) {
  const std::size_t rows = batch.rows;
  if (rows == 0) throw DimensionError("empty batch");
  if (batch.n_dense != cfg.n_dense || batch.n_sparse != cfg.n_sparse) {
    throw DimensionError("batch has " + std::to_string(batch.n_dense) + " dense / " + std::to_string(batch.n_sparse) +
                         " sparse features, model expects " + std::to_string(cfg.n_dense) + " / " +
                         std::to_string(cfg.n_sparse));
  }
  const Tensor dense = Tensor::from({rows, cfg.n_dense}, batch.dense);
  FeatureSlots out;
  out.y_dense = run_mlp(tape, dense, params.mlp_bot, true);
  std::vector<Tensor> slots{out.y_dense};
  std::vector<std::int64_t> column(rows);
  for (std::size_t f = 0; f < cfg.n_sparse; ++f) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = batch.sparse[r * cfg.n_sparse + f];
    slots.push_back(ops::embedding_lookup(tape, params.tables[f], column));
  }
  const Tensor joined = slots.size() == 1 ? slots.front() : ops::concat_last_axis(tape, slots);
  out.z0 = ops::reshape(tape, joined, {rows, cfg.sequence_length(), cfg.embed_dim});
  if (params.positional.enabled) out.z0 = add_positional(tape, out.z0, params.positional);
  return out;
}

}  // namespace

Tensor build_feature_sequence(Tape& tape, const RecModelParams& params, const ModelConfig& cfg,
                              const FeatureBatch& batch) {
  return feature_slots(tape, params, cfg, batch).z0;
}

CtrOutputs forward_ctr_outputs(Tape& tape, const RecModelParams& params, const ModelConfig& cfg,
                               const FeatureBatch& batch, Phase phase, Rng& rng, AttentionTrace* trace) {
  const std::size_t rows = batch.rows;
  const std::size_t s = cfg.sequence_length(), d = cfg.embed_dim;
  const auto [y_dense, z0] = feature_slots(tape, params, cfg, batch);

  std::vector<Tensor> top_parts{y_dense};
  switch (cfg.interaction) {
    case InteractionKind::trec: {
      const EncoderOptions options = cfg.encoder_options();
      Tensor z = z0;
      for (std::size_t l = 0; l < params.encoder.size(); ++l) {
        z = encoder_layer(tape, z, params.encoder[l], cfg.mask, options, phase, rng, trace, l);
      }
      top_parts.push_back(ops::reshape(tape, z, {rows, s * d}));
      break;
    }
    case InteractionKind::dot:
      if (s >= 2) top_parts.push_back(dot_product_interaction(tape, z0));
      break;
    case InteractionKind::none:
      top_parts.push_back(ops::reshape(tape, z0, {rows, s * d}));
      break;
  }
  const Tensor top_in = top_parts.size() == 1 ? top_parts.front() : ops::concat_last_axis(tape, top_parts);

  CtrOutputs out;
  Tensor x = top_in;
  for (std::size_t i = 0; i + 1 < params.mlp_top.size(); ++i) {
    x = ops::relu(tape, ops::linear(tape, x, params.mlp_top[i].w, params.mlp_top[i].b));
  }
  if (params.mlp_top.size() >= 2) out.hidden = x;
  const Tensor logit = ops::linear(tape, x, params.mlp_top.back().w, params.mlp_top.back().b);
  out.logits = ops::reshape(tape, logit, {rows});
  out.probabilities = probabilities_from_logits(tape, out.logits);
  return out;
}

Tensor forward_ctr(Tape& tape, const RecModelParams& params, const ModelConfig& cfg, const FeatureBatch& batch,
                   Phase phase, Rng& rng, AttentionTrace* trace) {
  return forward_ctr_outputs(tape, params, cfg, batch, phase, rng, trace).probabilities;
}

// ---- Sequential extension -------------------------------------------------

std::size_t event_embedding_width(const ModelConfig& base) {
  if (base.top_widths.size() < 2) {
    throw ConfigError("top_widths", "sequential models need at least one hidden top layer to export event embeddings");
  }
  return base.top_widths[base.top_widths.size() - 2];
}

void SequenceConfig::validate(const ModelConfig& base) const {
  event_embedding_width(base);
  if (seq_widths.empty() || seq_widths.back() != 1) throw ConfigError("seq_widths", "last width must be 1");
  for (std::size_t w : seq_widths) {
    if (w == 0) throw ConfigError("seq_widths", "widths must be positive");
  }
}

SequenceParams init_sequence_params(const ModelConfig& base, const SequenceConfig& cfg, Rng& rng) {
  cfg.validate(base);
  SequenceParams p;
  p.mlp_seq = init_mlp(2 * event_embedding_width(base), cfg.seq_widths, rng);
  return p;
}

std::size_t parameter_count(const ModelConfig& base, const SequenceConfig& cfg) {
  cfg.validate(base);
  return parameter_count(base) + mlp_count(2 * event_embedding_width(base), cfg.seq_widths);
}

SequenceParams SequenceParams::clone() const {
  SequenceParams p;
  p.mlp_seq = clone_layers(mlp_seq);
  return p;
}

std::vector<NamedTensor> SequenceParams::named_parameters() const {
  std::vector<NamedTensor> out;
  name_layers(out, "mlp_seq", mlp_seq);
  return out;
}

std::vector<NamedTensor> SequentialModel::parameters() const {
  auto out = base.named_parameters();
  for (auto& p : head.named_parameters()) out.push_back(std::move(p));
  return out;
}

Tensor sequential_context(Tape& tape, const Tensor& z_tau, const Tensor& history) {
  if (history.rank() != 3 || z_tau.rank() != 2 || history.dim(0) != z_tau.dim(0) || history.dim(2) != z_tau.dim(1)) {
    throw DimensionError("sequential_context: z_tau " + shape_to_string(z_tau.shape()) + " and history " +
                         shape_to_string(history.shape()) + " are incompatible");
  }
  const std::size_t rows = z_tau.dim(0), width = z_tau.dim(1);
  const Tensor query = ops::reshape(tape, z_tau, {rows, 1, width});
  const Tensor scores = ops::scale(tape, ops::bmm(tape, query, ops::transpose_last2(tape, history)),
                                   1.0 / std::sqrt(static_cast<double>(width)));
  const Tensor weights = ops::softmax_row(tape, scores);
  return ops::reshape(tape, ops::bmm(tape, weights, history), {rows, width});
}

Tensor event_embeddings(Tape& tape, const RecModelParams& base, const ModelConfig& cfg, const FeatureBatch& events,
                        Phase phase, Rng& rng) {
  event_embedding_width(cfg);
  return forward_ctr_outputs(tape, base, cfg, events, phase, rng).hidden;
}

Tensor forward_sequential(Tape& tape, const RecModelParams& base, const ModelConfig& base_cfg,
                          const SequenceParams& head, const SequenceConfig& seq_cfg, const SequenceBatch& batch,
                          Phase phase, Rng& rng) {
  if (batch.history_len == 0) throw ContractError("sequential model needs at least one history event");
  seq_cfg.validate(base_cfg);
  const std::size_t rows = batch.size(), width = event_embedding_width(base_cfg);
  const Tensor history = ops::reshape(tape, event_embeddings(tape, base, base_cfg, batch.history, phase, rng),
                                      {rows, batch.history_len, width});
  const Tensor candidate = event_embeddings(tape, base, base_cfg, batch.candidates, phase, rng);
  const Tensor context = sequential_context(tape, candidate, history);
  const Tensor joined = ops::concat_last_axis(tape, {candidate, context});
  const Tensor logit = run_mlp(tape, joined, head.mlp_seq, false);
  return probabilities_from_logits(tape, ops::reshape(tape, logit, {rows}));
}

}  // namespace maskrec
