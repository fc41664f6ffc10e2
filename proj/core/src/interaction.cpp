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

#include "maskrec/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maskrec/errors.hpp"

namespace maskrec {

void MaskSchedule::validate(std::size_t expected_heads) const {
  if (thetas.size() != expected_heads) {
    throw ConfigError("mask", "expected " + std::to_string(expected_heads) + " thresholds (one per head), got " +
                                  std::to_string(thetas.size()));
  }
  for (double t : thetas) {
    if (!(t >= 0.0 && t < 1.0)) throw ConfigError("mask", "threshold " + std::to_string(t) + " outside [0, 1)");
  }
}

MaskSchedule default_mask_schedule(std::size_t heads) {
  if (heads == 0) throw ConfigError("n_heads", "at least one head is required");
  MaskSchedule s;
  s.thetas.reserve(heads);
  // Parsed from decimal text so 10^-h is the correctly rounded double.
  for (std::size_t h = 1; h <= heads; ++h) s.thetas.push_back(std::stod("1e-" + std::to_string(h)));
  return s;
}

std::vector<double> raw_attention(std::span<const double> z_q, std::span<const double> z_k, std::size_t seq_len,
                                  std::size_t width) {
  if (z_q.size() != seq_len * width || z_k.size() != seq_len * width) {
    throw DimensionError("raw_attention: projections must be [" + std::to_string(seq_len) + " x " +
                         std::to_string(width) + "]");
  }
  std::vector<double> alpha(seq_len * seq_len, 0.0);
  for (std::size_t i = 0; i < seq_len; ++i) {
    for (std::size_t j = 0; j < seq_len; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < width; ++t) s += z_q[i * width + t] * z_k[j * width + t];
      if (!std::isfinite(s)) throw NumericError("raw_attention: non-finite score");
      alpha[i * seq_len + j] = s;
    }
    kernels::softmax_inplace(std::span<double>(alpha).subspan(i * seq_len, seq_len));
  }
  return alpha;
}

MaskedSoftmax masked_softmax(std::span<const double> scores, std::span<const double> alpha, std::size_t rows,
                             std::size_t cols, double theta) {
  if (!(theta >= 0.0 && theta < 1.0)) throw ConfigError("mask", "threshold must lie in [0, 1)");
  if (cols == 0) throw DimensionError("masked_softmax over an empty row");
  if (scores.size() != rows * cols || alpha.size() != rows * cols) {
    throw DimensionError("masked_softmax: inputs must be [" + std::to_string(rows) + " x " + std::to_string(cols) + "]");
  }
  MaskedSoftmax out;
  out.alpha_masked.assign(rows * cols, 0.0);
  std::vector<char> keep(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = scores.data() + r * cols;
    const double* a = alpha.data() + r * cols;
    double* m = out.alpha_masked.data() + r * cols;
    const double a_max = *std::max_element(a, a + cols);
    for (std::size_t j = 0; j < cols; ++j) keep[j] = a[j] > theta || a[j] == a_max;

    // Same arithmetic as kernels::softmax_inplace restricted to survivors, so
    // an all-surviving row reproduces the unmasked softmax bit for bit.
    const double s_max = *std::max_element(s, s + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!keep[j]) continue;
      m[j] = std::exp(s[j] - s_max);
      total += m[j];
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (keep[j]) {
        m[j] /= total;
      } else {
        out.masked_pairs.emplace_back(r, j);
      }
    }
  }
  return out;
}

Tensor masked_attention_weights(Tape& tape, const Tensor& scores, double theta, AttentionTrace* trace,
                                std::size_t layer, std::size_t head) {
  if (scores.rank() != 3 || scores.dim(1) != scores.dim(2)) {
    throw DimensionError("masked attention expects scores [B x S x S], got " + shape_to_string(scores.shape()));
  }
  const std::size_t batch = scores.dim(0), seq = scores.dim(1);
  auto sd = scores.data();
  std::vector<double> alpha(sd.begin(), sd.end());
  for (std::size_t r = 0; r < batch * seq; ++r) kernels::softmax_inplace(std::span<double>(alpha).subspan(r * seq, seq));

  MaskedSoftmax masked = masked_softmax(sd, alpha, batch * seq, seq, theta);

  if (trace != nullptr) {
    const std::size_t block = seq * seq;
    for (std::size_t b = 0; b < batch; ++b) {
      HeadTrace ht;
      ht.layer = layer;
      ht.head = head;
      ht.sample = b;
      ht.theta = theta;
      ht.seq_len = seq;
      ht.alpha_raw.assign(alpha.begin() + b * block, alpha.begin() + (b + 1) * block);
      ht.alpha_masked.assign(masked.alpha_masked.begin() + b * block, masked.alpha_masked.begin() + (b + 1) * block);
      for (const auto& [r, c] : masked.masked_pairs) {
        if (r / seq == b) ht.masked_pairs.emplace_back(r % seq, c);
      }
      trace->heads.push_back(std::move(ht));
    }
  }

  return tape.record("masked_softmax", {scores}, scores.shape(), std::move(masked.alpha_masked),
                     [scores, batch, seq](const Tensor& y) {
                       return [scores, y, batch, seq]() mutable {
                         auto gx = scores.mutable_grad();
                         auto gy = y.grad();
                         auto yd = y.data();
                         // Masked entries have y == 0, so their gradient is exactly 0.
                         for (std::size_t r = 0; r < batch * seq; ++r) {
                           const std::size_t o = r * seq;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < seq; ++j) dot += gy[o + j] * yd[o + j];
                           for (std::size_t j = 0; j < seq; ++j) gx[o + j] += yd[o + j] * (gy[o + j] - dot);
                         }
                       };
                     });
}

Tensor masked_msa(Tape& tape, const Tensor& z, const HeadParams& params, const MaskSchedule& masks,
                  AttentionTrace* trace, std::size_t layer) {
  if (z.rank() != 3) throw DimensionError("masked_msa expects z [B x S x D], got " + shape_to_string(z.shape()));
  const std::size_t batch = z.dim(0), seq = z.dim(1), width = z.dim(2);
  const std::size_t heads = params.heads();
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("n_heads", "head count must divide the embedding width " + std::to_string(width));
  }
  masks.validate(heads);
  const std::size_t head_width = width / heads;

  const Tensor flat = ops::reshape(tape, z, {batch * seq, width});
  auto project = [&](const Tensor& w) {
    return ops::reshape(tape, ops::matmul(tape, flat, w), {batch, seq, head_width});
  };

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor q = project(params.w_q[h]);
    const Tensor k = project(params.w_k[h]);
    const Tensor v = project(params.w_v[h]);
    const Tensor scores = ops::bmm(tape, q, ops::transpose_last2(tape, k));
    const Tensor weights = masked_attention_weights(tape, scores, masks.thetas[h], trace, layer, h);
    head_outputs.push_back(ops::bmm(tape, weights, v));
  }
  const Tensor joined = ops::reshape(tape, ops::concat_last_axis(tape, head_outputs), {batch * seq, heads * head_width});
  return ops::reshape(tape, ops::matmul(tape, joined, params.u_msa), {batch, seq, width});
}

Tensor feed_forward(Tape& tape, const Tensor& z, const FeedForwardParams& params, Activation activation) {
  const Shape shape = z.shape();
  const std::size_t width = shape.back();
  const Tensor flat = ops::reshape(tape, z, {z.numel() / width, width});
  const Tensor hidden = ops::activate(tape, ops::linear(tape, flat, params.w1, params.b1), activation);
  return ops::reshape(tape, ops::linear(tape, hidden, params.w2, params.b2), shape);
}

Tensor encoder_layer(Tape& tape, const Tensor& z, const EncoderLayerParams& params, const MaskSchedule& masks,
                     const EncoderOptions& options, Phase phase, Rng& rng, AttentionTrace* trace, std::size_t layer) {
  auto norm = [&](const Tensor& x, const LayerNormParams& ln) {
    return options.layer_norm ? ops::layer_norm(tape, x, ln.gamma, ln.beta, options.layer_norm_eps) : x;
  };
  const Tensor attended = masked_msa(tape, norm(z, params.ln_attention), params.attention, masks, trace, layer);
  const Tensor z_mid = ops::add(tape, ops::dropout(tape, attended, options.dropout_p, phase, rng), z);
  const Tensor transformed = feed_forward(tape, norm(z_mid, params.ln_ffn), params.ffn, options.activation);
  return ops::add(tape, ops::dropout(tape, transformed, options.dropout_p, phase, rng), z_mid);
}

std::vector<double> lower_triangle_products(std::span<const double> z, std::size_t seq_len, std::size_t width) {
  if (z.size() != seq_len * width) throw DimensionError("lower_triangle_products: sequence size mismatch");
  std::vector<double> out;
  out.reserve(seq_len * (seq_len - 1) / 2);
  for (std::size_t i = 1; i < seq_len; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < width; ++t) s += z[i * width + t] * z[j * width + t];
      out.push_back(s);
    }
  }
  return out;
}

Tensor dot_product_interaction(Tape& tape, const Tensor& z) {
  if (z.rank() != 3) {
    throw DimensionError("dot_product_interaction expects z [B x S x D], got " + shape_to_string(z.shape()));
  }
  const std::size_t batch = z.dim(0), seq = z.dim(1), width = z.dim(2);
  const std::size_t pairs = seq * (seq - 1) / 2;
  if (pairs == 0) {
    throw DimensionError("dot_product_interaction needs at least two sequence slots");
  }
  auto zd = z.data();
  std::vector<double> out;
  out.reserve(batch * pairs);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = lower_triangle_products(zd.subspan(b * seq * width, seq * width), seq, width);
    out.insert(out.end(), row.begin(), row.end());
  }
  return tape.record("dot_interaction", {z}, {batch, pairs}, std::move(out), [z, batch, seq, width, pairs](const Tensor& y) {
    return [z, y, batch, seq, width, pairs]() mutable {
      auto gz = z.mutable_grad();
      auto gy = y.grad();
      auto zd = z.data();
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t o = b * seq * width;
        std::size_t p = 0;
        for (std::size_t i = 1; i < seq; ++i) {
          for (std::size_t j = 0; j < i; ++j, ++p) {
            const double g = gy[b * pairs + p];
            for (std::size_t t = 0; t < width; ++t) {
              gz[o + i * width + t] += g * zd[o + j * width + t];
              gz[o + j * width + t] += g * zd[o + i * width + t];
            }
          }
        }
      }
    };
  });
}

Tensor add_positional(Tape& tape, const Tensor& z0, const PositionalTable& table) {
  if (!table.enabled) throw ContractError("add_positional called with a disabled positional table");
  if (z0.rank() != 3 || table.e_pos.rank() != 2 || table.e_pos.dim(0) != z0.dim(1) ||
      table.e_pos.dim(1) != z0.dim(2)) {
    throw DimensionError("add_positional: table " + shape_to_string(table.e_pos.shape()) + " does not match " +
                         shape_to_string(z0.shape()));
  }
  const std::size_t batch = z0.dim(0), slots = z0.dim(1) * z0.dim(2);
  const Tensor flat = ops::reshape(tape, z0, {batch, slots});
  const Tensor pos = ops::reshape(tape, table.e_pos, {slots});
  return ops::reshape(tape, ops::add_bias(tape, flat, pos), z0.shape());
}

}  // namespace maskrec
