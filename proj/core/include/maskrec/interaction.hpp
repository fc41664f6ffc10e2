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
#include <span>
#include <utility>
#include <vector>

#include "maskrec/ops.hpp"
#include "maskrec/rng.hpp"
#include "maskrec/tensor.hpp"

namespace maskrec {

// One attention threshold per head. An attention weight survives the mask
// only when it is strictly greater than its head's threshold.
struct MaskSchedule {
  std::vector<double> thetas;

  std::size_t heads() const noexcept { return thetas.size(); }
  // Throws ConfigError unless there are `heads` thresholds, each in [0, 1).
  void validate(std::size_t heads) const;
};

// Geometric schedule 10^-1, 10^-2, ..., 10^-H.
MaskSchedule default_mask_schedule(std::size_t heads);

// Per-head projections D -> D/H and the output projection (H*D/H) -> D.
struct HeadParams {
  std::vector<Tensor> w_q;
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
  Tensor u_msa;

  std::size_t heads() const noexcept { return w_q.size(); }
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

// Position-wise two-layer MLP D -> D_ff -> D.
struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  HeadParams attention;
  LayerNormParams ln_attention;
  LayerNormParams ln_ffn;
  FeedForwardParams ffn;
};

struct EncoderOptions {
  double dropout_p = 0.0;
  Activation activation = Activation::relu;
  // Ablation switch: false replaces both LayerNorms with the identity.
  bool layer_norm = true;
  double layer_norm_eps = 1e-5;
};

struct PositionalTable {
  Tensor e_pos;  // [(N+1) x D]
  bool enabled = false;
};

using IndexPair = std::pair<std::size_t, std::size_t>;

// Attention matrices of one head for one sample of one forward pass.
struct HeadTrace {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t sample = 0;
  double theta = 0.0;
  std::size_t seq_len = 0;
  std::vector<double> alpha_raw;     // seq_len x seq_len, row-major
  std::vector<double> alpha_masked;  // seq_len x seq_len, row-major
  std::vector<IndexPair> masked_pairs;
};

struct AttentionTrace {
  std::vector<HeadTrace> heads;
};

// Row-wise softmax of query-key inner products (no temperature scaling).
// z_q and z_k are [S x d] row-major; the result is [S x S].
std::vector<double> raw_attention(std::span<const double> z_q, std::span<const double> z_k, std::size_t seq_len,
                                  std::size_t width);

struct MaskedSoftmax {
  std::vector<double> alpha_masked;
  std::vector<IndexPair> masked_pairs;
};

// Masks every score whose attention weight alpha is <= theta and re-applies the
// softmax over the survivors. Entries equal to their row's maximum weight
// always survive, so a row never loses every entry. `scores` and `alpha` are
// [rows x cols]; alpha must be the row softmax of scores.
MaskedSoftmax masked_softmax(std::span<const double> scores, std::span<const double> alpha, std::size_t rows,
                             std::size_t cols, double theta);

// Differentiable masked softmax over the last axis of scores [B x S x S].
// The mask is a hard gate: no gradient flows to masked entries.
// When `trace` is set, one HeadTrace per sample is appended with the given
// layer/head labels.
Tensor masked_attention_weights(Tape& tape, const Tensor& scores, double theta, AttentionTrace* trace = nullptr,
                                std::size_t layer = 0, std::size_t head = 0);

// Masked multi-head self-attention over z [B x S x D].
Tensor masked_msa(Tape& tape, const Tensor& z, const HeadParams& params, const MaskSchedule& masks,
                  AttentionTrace* trace = nullptr, std::size_t layer = 0);

// Pre-LN encoder block:
//   z' = dropout(MSA(LN(z))) + z
//   out = dropout(FFN(LN(z'))) + z'
Tensor encoder_layer(Tape& tape, const Tensor& z, const EncoderLayerParams& params, const MaskSchedule& masks,
                     const EncoderOptions& options, Phase phase, Rng& rng, AttentionTrace* trace = nullptr,
                     std::size_t layer = 0);

Tensor feed_forward(Tape& tape, const Tensor& z, const FeedForwardParams& params, Activation activation);

// Strictly lower triangle of z z^T for one [S x D] sequence: S(S-1)/2 inner
// products for pairs (i, j), i > j, row-major. Empty when S == 1.
std::vector<double> lower_triangle_products(std::span<const double> z, std::size_t seq_len, std::size_t width);

// Batched, differentiable form of lower_triangle_products: [B x S x D] -> [B x S(S-1)/2].
// Requires S >= 2 (tensors cannot have zero extent).
Tensor dot_product_interaction(Tape& tape, const Tensor& z);

// z0 [B x S x D] + e_pos [S x D] for every sample.
Tensor add_positional(Tape& tape, const Tensor& z0, const PositionalTable& table);

}  // namespace maskrec
