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
#include <vector>

#include "maskrec/interaction.hpp"
#include "maskrec/model.hpp"
#include "maskrec/records.hpp"
#include "maskrec/rng.hpp"
#include "test_support.hpp"

namespace maskrec::testing {

// Small trec model: n_sparse tables of `rows`, D = embed_dim, dropout 0.
inline ModelConfig tiny_config(std::size_t n_sparse = 3, std::size_t rows = 50, std::size_t embed_dim = 8,
                               std::size_t heads = 2, std::size_t layers = 1) {
  ModelConfig cfg;
  cfg.n_sparse = n_sparse;
  cfg.table_sizes.assign(n_sparse, rows);
  cfg.embed_dim = embed_dim;
  cfg.n_dense = 2;
  cfg.bot_widths = {embed_dim};
  cfg.top_widths = {16, 8, 1};
  cfg.interaction = InteractionKind::trec;
  cfg.n_layers = layers;
  cfg.n_heads = heads;
  cfg.dropout_p = 0.0;
  fill_default_mask(cfg);
  return cfg;
}

inline FeatureBatch random_features(const ModelConfig& cfg, std::size_t rows, Rng& rng) {
  FeatureBatch batch;
  batch.n_dense = cfg.n_dense;
  batch.n_sparse = cfg.n_sparse;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> dense(cfg.n_dense);
    for (double& v : dense) v = rng.uniform(0.0, 2.0);
    std::vector<std::int64_t> sparse(cfg.n_sparse);
    for (std::size_t f = 0; f < cfg.n_sparse; ++f) sparse[f] = static_cast<std::int64_t>(rng.uniform_index(cfg.table_sizes[f]));
    batch.append(dense, sparse);
  }
  return batch;
}

inline Batch random_batch(const ModelConfig& cfg, std::size_t rows, Rng& rng) {
  Batch b;
  b.features = random_features(cfg, rows, rng);
  for (std::size_t r = 0; r < rows; ++r) b.labels.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  return b;
}

// Sequence batch where every event carries n_dense dense values and the
// base config's sparse features.
inline SequenceBatch random_sequence_batch(const ModelConfig& cfg, std::size_t rows, std::size_t history_len,
                                           Rng& rng) {
  SequenceBatch b;
  b.history_len = history_len;
  b.history = random_features(cfg, rows * history_len, rng);
  b.candidates = random_features(cfg, rows, rng);
  for (std::size_t r = 0; r < rows; ++r) b.labels.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
  return b;
}

inline HeadParams random_heads(std::size_t d, std::size_t heads, Rng& rng) {
  HeadParams p;
  const std::size_t hw = d / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    p.w_q.push_back(random_tensor({d, hw}, rng));
    p.w_k.push_back(random_tensor({d, hw}, rng));
    p.w_v.push_back(random_tensor({d, hw}, rng));
  }
  p.u_msa = random_tensor({heads * hw, d}, rng);
  return p;
}

inline EncoderLayerParams random_layer(std::size_t d, std::size_t heads, std::size_t ffn, Rng& rng) {
  EncoderLayerParams p;
  p.attention = random_heads(d, heads, rng);
  p.ln_attention = {random_tensor({d}, rng, 0.5, 1.5), random_tensor({d}, rng, -0.2, 0.2)};
  p.ln_ffn = {random_tensor({d}, rng, 0.5, 1.5), random_tensor({d}, rng, -0.2, 0.2)};
  p.ffn = {random_tensor({d, ffn}, rng), random_tensor({ffn}, rng), random_tensor({ffn, d}, rng),
           random_tensor({d}, rng)};
  return p;
}

// Applies a permutation of sequence positions to z [B x S x D].
inline Tensor permute_positions(const Tensor& z, const std::vector<std::size_t>& perm) {
  const std::size_t b = z.dim(0), s = z.dim(1), d = z.dim(2);
  std::vector<double> out(z.numel());
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t c = 0; c < d; ++c) out[(n * s + i) * d + c] = z[(n * s + perm[i]) * d + c];
  return Tensor::from(z.shape(), std::move(out));
}

}  // namespace maskrec::testing
