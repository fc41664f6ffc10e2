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

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "maskrec/gradcheck.hpp"
#include "maskrec/interaction.hpp"
#include "maskrec/records.hpp"

namespace maskrec {

enum class InteractionKind { trec, dot, none };

InteractionKind parse_interaction(std::string_view name);
std::string_view to_string(InteractionKind kind);

// Logits are clamped to this magnitude before the sigmoid.
inline constexpr double kLogitClamp = 30.0;

struct ModelConfig {
  std::size_t n_sparse = 0;
  std::vector<std::size_t> table_sizes;
  std::size_t embed_dim = 16;
  std::size_t n_dense = 1;
  std::vector<std::size_t> bot_widths;  // last entry == embed_dim
  std::vector<std::size_t> top_widths;  // last entry == 1
  InteractionKind interaction = InteractionKind::trec;
  std::size_t n_layers = 1;
  std::size_t n_heads = 2;
  MaskSchedule mask;
  double dropout_p = 0.03;
  Activation activation = Activation::relu;
  std::size_t ffn_mult = 4;
  bool positional = false;
  bool layer_norm = true;

  std::size_t sequence_length() const noexcept { return n_sparse + 1; }
  std::size_t ffn_width() const noexcept { return ffn_mult * embed_dim; }
  // Width of [y_dense ; interaction features].
  std::size_t top_input_width() const;
  EncoderOptions encoder_options() const;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

// The default geometric schedule when `mask` is empty.
void fill_default_mask(ModelConfig& cfg);

struct DenseLayer {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
};

// All trainable tensors of the CTR model. Tensors are handles, so copying is
// disabled to keep two models from silently sharing storage; use clone().
struct RecModelParams {
  std::vector<Tensor> tables;
  std::vector<DenseLayer> mlp_bot;
  std::vector<DenseLayer> mlp_top;
  std::vector<EncoderLayerParams> encoder;
  PositionalTable positional;

  RecModelParams() = default;
  RecModelParams(const RecModelParams&) = delete;
  RecModelParams& operator=(const RecModelParams&) = delete;
  RecModelParams(RecModelParams&&) = default;
  RecModelParams& operator=(RecModelParams&&) = default;

  RecModelParams clone() const;
  // Stable dotted names, e.g. "encoder.0.head.1.w_q".
  std::vector<NamedTensor> named_parameters() const;
};

// Weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)), biases 0, embedding rows
// ~ U(-sqrt(1/D), sqrt(1/D)), LayerNorm gamma 1 / beta 0, u_msa identity.
RecModelParams init_params(const ModelConfig& cfg, Rng& rng);

std::size_t parameter_count(const ModelConfig& cfg);

// z0 = [MLP_bot(dense) ; E_1[idx_1] ; ... ; E_N[idx_N]] (+ positional table),
// shaped [B x (N+1) x D].
Tensor build_feature_sequence(Tape& tape, const RecModelParams& params, const ModelConfig& cfg,
                              const FeatureBatch& batch);

struct CtrOutputs {
  Tensor hidden;         // MLP_top penultimate activations [B x top_widths[-2]], undefined for 1-layer tops
  Tensor logits;         // [B]
  Tensor probabilities;  // [B], sigmoid of clamped logits
};

CtrOutputs forward_ctr_outputs(Tape& tape, const RecModelParams& params, const ModelConfig& cfg,
                               const FeatureBatch& batch, Phase phase, Rng& rng, AttentionTrace* trace = nullptr);

// Click probabilities [B].
Tensor forward_ctr(Tape& tape, const RecModelParams& params, const ModelConfig& cfg, const FeatureBatch& batch,
                   Phase phase, Rng& rng, AttentionTrace* trace = nullptr);

struct CtrModel {
  ModelConfig config;
  RecModelParams params;

  Tensor forward(Tape& tape, const Batch& batch, Phase phase, Rng& rng) const {
    return forward_ctr(tape, params, config, batch.features, phase, rng);
  }
  std::vector<NamedTensor> parameters() const { return params.named_parameters(); }
};

// ---- Sequential extension -------------------------------------------------

struct SequenceConfig {
  std::vector<std::size_t> seq_widths;  // MLP over [z_tau ; c], last entry == 1

  void validate(const ModelConfig& base) const;
};

struct SequenceParams {
  std::vector<DenseLayer> mlp_seq;

  SequenceParams() = default;
  SequenceParams(const SequenceParams&) = delete;
  SequenceParams& operator=(const SequenceParams&) = delete;
  SequenceParams(SequenceParams&&) = default;
  SequenceParams& operator=(SequenceParams&&) = default;

  SequenceParams clone() const;
  std::vector<NamedTensor> named_parameters() const;
};

// Width of the per-event embedding: the base model's last hidden top width.
std::size_t event_embedding_width(const ModelConfig& base);

SequenceParams init_sequence_params(const ModelConfig& base, const SequenceConfig& cfg, Rng& rng);
std::size_t parameter_count(const ModelConfig& base, const SequenceConfig& cfg);

// c = sum_t softmax_t(<z_tau, z_t> / sqrt(D_s)) z_t for z_tau [B x D_s] and
// history Z [B x T x D_s].
Tensor sequential_context(Tape& tape, const Tensor& z_tau, const Tensor& history);

// Per-event embeddings z_t (MLP_top penultimate activations), [rows x D_s].
Tensor event_embeddings(Tape& tape, const RecModelParams& base, const ModelConfig& cfg, const FeatureBatch& events,
                        Phase phase, Rng& rng);

Tensor forward_sequential(Tape& tape, const RecModelParams& base, const ModelConfig& base_cfg,
                          const SequenceParams& head, const SequenceConfig& seq_cfg, const SequenceBatch& batch,
                          Phase phase, Rng& rng);

struct SequentialModel {
  ModelConfig base_config;
  SequenceConfig seq_config;
  RecModelParams base;
  SequenceParams head;

  Tensor forward(Tape& tape, const SequenceBatch& batch, Phase phase, Rng& rng) const {
    return forward_sequential(tape, base, base_config, head, seq_config, batch, phase, rng);
  }
  std::vector<NamedTensor> parameters() const;
};

// ---- Serialization --------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

using LoadedModel = std::variant<CtrModel, SequentialModel>;

void save_model(const CtrModel& model, const std::filesystem::path& path);
void save_model(const SequentialModel& model, const std::filesystem::path& path);
// Throws FormatError on version mismatch, malformed text, missing tensors or
// shapes that disagree with the stored configuration.
LoadedModel load_model(const std::filesystem::path& path);

std::string serialize_model(const CtrModel& model);
std::string serialize_model(const SequentialModel& model);
LoadedModel deserialize_model(const std::string& text);

// The "config" object of a model file, as JSON text.
std::string model_config_json(const ModelConfig& cfg);

}  // namespace maskrec
