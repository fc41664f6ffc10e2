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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "maskrec/errors.hpp"
#include "maskrec/gradcheck.hpp"
#include "maskrec/interaction.hpp"
#include "maskrec/ops.hpp"
#include "fixtures.hpp"
#include "reference_model.hpp"
#include "test_support.hpp"

namespace maskrec {
namespace {

using testing::permute_positions;
using testing::random_heads;
using testing::random_layer;
using testing::random_tensor;
using testing::to_vector;

std::vector<double> softmax(const std::vector<double>& row) {
  std::vector<double> out(row);
  kernels::softmax_inplace(out);
  return out;
}

TEST(MaskSchedule, DefaultIsGeometric) {
  EXPECT_EQ(default_mask_schedule(1).thetas, (std::vector<double>{0.1}));
  EXPECT_EQ(default_mask_schedule(2).thetas, (std::vector<double>{0.1, 0.01}));
  EXPECT_EQ(default_mask_schedule(4).thetas, (std::vector<double>{0.1, 0.01, 0.001, 0.0001}));
  EXPECT_THROW(default_mask_schedule(0), ConfigError);
}

TEST(MaskSchedule, ValidateChecksCountAndRange) {
  MaskSchedule s{{0.1, 0.01}};
  EXPECT_NO_THROW(s.validate(2));
  EXPECT_THROW(s.validate(3), ConfigError);
  EXPECT_THROW((MaskSchedule{{1.0}}.validate(1)), ConfigError);
  EXPECT_THROW((MaskSchedule{{-0.1}}.validate(1)), ConfigError);
}

TEST(RawAttention, IdenticalRowsGiveUniformWeights) {
  const std::vector<double> z = {0.3, -1.2, 0.3, -1.2, 0.3, -1.2};
  for (double a : raw_attention(z, z, 3, 2)) EXPECT_NEAR(a, 1.0 / 3, 1e-15);
}

TEST(RawAttention, SingleFeatureIsOne) {
  EXPECT_EQ(raw_attention(std::vector<double>{2.0, 5.0}, std::vector<double>{-1.0, 0.5}, 1, 2),
            (std::vector<double>{1.0}));
}

TEST(RawAttention, TwoFeatureClosedForm) {
  // q = [1], k rows [ln 2], [ln 1] -> scores [ln 2, 0] in row 0.
  const std::vector<double> q = {1.0, 0.0}, k = {std::log(2.0), 0.0};
  const auto a = raw_attention(q, k, 2, 1);
  EXPECT_NEAR(a[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(a[1], 1.0 / 3, 1e-15);
}

TEST(MaskedSoftmax, ThetaZeroIsIdentity) {
  Rng rng(1);
  std::vector<double> scores(25);
  for (double& v : scores) v = rng.uniform(-3, 3);
  std::vector<double> alpha;
  for (std::size_t r = 0; r < 5; ++r) {
    const auto row = softmax({scores.begin() + r * 5, scores.begin() + r * 5 + 5});
    alpha.insert(alpha.end(), row.begin(), row.end());
  }
  const MaskedSoftmax m = masked_softmax(scores, alpha, 5, 5, 0.0);
  EXPECT_EQ(m.alpha_masked, alpha);
  EXPECT_TRUE(m.masked_pairs.empty());
}

TEST(MaskedSoftmax, RenormalizesSurvivors) {
  const std::vector<double> alpha = {0.5, 0.3, 0.15, 0.05};
  std::vector<double> scores;
  for (double a : alpha) scores.push_back(std::log(a));
  const MaskedSoftmax m = masked_softmax(scores, alpha, 1, 4, 0.1);
  EXPECT_NEAR(m.alpha_masked[0], 0.526316, 1e-6);
  EXPECT_NEAR(m.alpha_masked[1], 0.315789, 1e-6);
  EXPECT_NEAR(m.alpha_masked[2], 0.157895, 1e-6);
  EXPECT_EQ(m.alpha_masked[3], 0.0);
  ASSERT_EQ(m.masked_pairs.size(), 1u);
  EXPECT_EQ(m.masked_pairs[0], (IndexPair{0, 3}));
}

TEST(MaskedSoftmax, AllMaskedRowKeepsTiedMaxima) {
  const std::vector<double> scores(27, 0.25);
  const auto alpha = softmax(scores);
  const MaskedSoftmax m = masked_softmax(scores, alpha, 1, 27, 0.1);
  EXPECT_EQ(m.alpha_masked, alpha);
  EXPECT_TRUE(m.masked_pairs.empty());
}

TEST(MaskedSoftmax, BoundaryTieIsMasked) {
  // alpha exactly equal to theta is masked (strict comparison).
  const std::vector<double> alpha = {0.75, 0.25};
  const std::vector<double> scores = {std::log(3.0), 0.0};
  const MaskedSoftmax m = masked_softmax(scores, alpha, 1, 2, 0.25);
  EXPECT_EQ(m.alpha_masked, (std::vector<double>{1.0, 0.0}));
}

TEST(MaskedSoftmax, RandomRowProperties) {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t cols = 1 + rng.uniform_index(27);
    std::vector<double> scores(cols);
    for (double& v : scores) v = rng.uniform(-4, 4);
    const auto alpha = softmax(scores);
    const double theta = rng.uniform(0.0, 0.5);
    const MaskedSoftmax m = masked_softmax(scores, alpha, 1, cols, theta);
    std::set<std::size_t> masked;
    for (const auto& [r, c] : m.masked_pairs) masked.insert(c);
    double survivors = 0.0, total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!masked.count(j)) survivors += alpha[j];
    }
    ASSERT_LT(masked.size(), cols);
    for (std::size_t j = 0; j < cols; ++j) {
      total += m.alpha_masked[j];
      if (masked.count(j)) {
        EXPECT_EQ(m.alpha_masked[j], 0.0);
        EXPECT_LE(alpha[j], theta);
      } else {
        EXPECT_NEAR(m.alpha_masked[j], alpha[j] / survivors, 1e-12);
      }
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(MaskedSoftmax, RaisingThetaNeverShrinksTheMaskedSet) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t cols = 2 + rng.uniform_index(20);
    std::vector<double> scores(cols);
    for (double& v : scores) v = rng.uniform(-3, 3);
    const auto alpha = softmax(scores);
    double lo = rng.uniform(0, 0.3), hi = rng.uniform(0, 0.3);
    if (lo > hi) std::swap(lo, hi);
    const auto a = masked_softmax(scores, alpha, 1, cols, lo).masked_pairs;
    const auto b = masked_softmax(scores, alpha, 1, cols, hi).masked_pairs;
    const std::set<IndexPair> bs(b.begin(), b.end());
    for (const auto& p : a) EXPECT_TRUE(bs.count(p));
  }
}

TEST(MaskedAttentionWeights, MaskedEntriesReceiveNoGradient) {
  Rng rng(4);
  Tensor scores = random_tensor({2, 5, 5}, rng, -3, 3);
  AttentionTrace trace;
  Tape tape;
  Tensor w = masked_attention_weights(tape, scores, 0.15, &trace);
  const Tensor g = random_tensor(w.shape(), rng, -1, 1, false);
  tape.backward(ops::sum(tape, ops::mul(tape, w, g)));
  ASSERT_EQ(trace.heads.size(), 2u);
  std::size_t checked = 0;
  for (const auto& ht : trace.heads) {
    for (const auto& [r, c] : ht.masked_pairs) {
      EXPECT_EQ(scores.grad()[(ht.sample * 5 + r) * 5 + c], 0.0);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(MaskedAttentionWeights, SurvivorGradientMatchesFiniteDifferences) {
  // Perturbations of 1e-5 do not flip any mask decision for these scores, so
  // the finite difference sees the same survivors.
  Rng rng(5);
  Tensor scores = random_tensor({2, 4, 4}, rng, -2, 2);
  Rng wr(6);
  const Tensor g = random_tensor({2, 4, 4}, wr, -1, 1, false);
  const auto report = check_gradients({{"scores", scores}}, [&](Tape& tape) {
    return ops::sum(tape, ops::mul(tape, masked_attention_weights(tape, scores, 0.1), g));
  });
  EXPECT_LT(report.worst(), 1e-4);
}

TEST(MaskedMsa, ZeroQueryKeyGivesMeanOfRows) {
  Rng rng(7);
  const std::size_t d = 4;
  HeadParams p;
  p.w_q.push_back(Tensor::zeros({d, d}));
  p.w_k.push_back(Tensor::zeros({d, d}));
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  p.w_v.push_back(Tensor::from({d, d}, eye));
  p.u_msa = Tensor::from({d, d}, eye);
  Tensor z = random_tensor({1, 3, d}, rng, -1, 1, false);
  Tape tape(Tape::Mode::inference);
  Tensor out = masked_msa(tape, z, p, MaskSchedule{{0.0}});
  for (std::size_t c = 0; c < d; ++c) {
    const double mean = (z[c] + z[d + c] + z[2 * d + c]) / 3.0;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i * d + c], mean, 1e-15);
  }
}

TEST(MaskedMsa, SingleFeatureIgnoresTheta) {
  Rng rng(8);
  const HeadParams p = random_heads(4, 2, rng);
  Tensor z = random_tensor({2, 1, 4}, rng, -1, 1, false);
  Tape tape(Tape::Mode::inference);
  const Tensor a = masked_msa(tape, z, p, MaskSchedule{{0.9, 0.5}});
  const Tensor b = masked_msa(tape, z, p, MaskSchedule{{0.0, 0.0}});
  EXPECT_EQ(to_vector(a.data()), to_vector(b.data()));
  // Output = z W_V u_msa with the heads' value projections concatenated.
  for (std::size_t n = 0; n < 2; ++n) {
    reference::Mat row(z.data().begin() + n * 4, z.data().begin() + n * 4 + 4);
    const auto expected = reference::msa(row, 1, 4, p, {0.9, 0.5});
    EXPECT_LT(testing::max_abs_diff(a.data().subspan(n * 4, 4), expected), 1e-14);
  }
}

TEST(MaskedMsa, MatchesStepByStepOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const HeadParams p = random_heads(4, 2, rng);
    Tensor z = random_tensor({2, 3, 4}, rng, -1.5, 1.5, false);
    const MaskSchedule masks = default_mask_schedule(2);
    Tape tape(Tape::Mode::inference);
    const Tensor out = masked_msa(tape, z, p, masks);
    for (std::size_t n = 0; n < 2; ++n) {
      reference::Mat sample(z.data().begin() + n * 12, z.data().begin() + n * 12 + 12);
      const auto expected = reference::msa(sample, 3, 4, p, masks.thetas);
      EXPECT_LT(testing::max_abs_diff(out.data().subspan(n * 12, 12), expected), 1e-12);
    }
  }
}

TEST(MaskedMsa, ThetaZeroIsBitIdenticalToUnmaskedAttention) {
  Rng rng(10);
  const HeadParams p = random_heads(6, 3, rng);
  Tensor z = random_tensor({3, 5, 6}, rng, -1, 1, false);
  Tape tape(Tape::Mode::inference);
  const Tensor masked = masked_msa(tape, z, p, MaskSchedule{{0.0, 0.0, 0.0}});
  // Unmasked multi-head attention assembled from primitive ops.
  const Tensor flat = ops::reshape(tape, z, {15, 6});
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < 3; ++h) {
    auto proj = [&](const Tensor& w) { return ops::reshape(tape, ops::matmul(tape, flat, w), {3, 5, 2}); };
    const Tensor scores = ops::bmm(tape, proj(p.w_q[h]), ops::transpose_last2(tape, proj(p.w_k[h])));
    heads.push_back(ops::bmm(tape, ops::softmax_row(tape, scores), proj(p.w_v[h])));
  }
  const Tensor joined = ops::reshape(tape, ops::concat_last_axis(tape, heads), {15, 6});
  const Tensor plain = ops::matmul(tape, joined, p.u_msa);
  EXPECT_EQ(to_vector(masked.data()), to_vector(plain.data()));
}

TEST(MaskedMsa, RejectsIndivisibleHeadCount) {
  Rng rng(11);
  HeadParams p = random_heads(6, 2, rng);
  p.w_q.push_back(p.w_q[0]);
  p.w_k.push_back(p.w_k[0]);
  p.w_v.push_back(p.w_v[0]);
  Tape tape(Tape::Mode::inference);
  EXPECT_THROW(masked_msa(tape, Tensor::zeros({1, 2, 8}), p, MaskSchedule{{0.1, 0.1, 0.1}}), ConfigError);
}

TEST(MaskedMsa, TraceRecordsRawAndMaskedWeights) {
  Rng rng(12);
  const HeadParams p = random_heads(4, 2, rng);
  Tensor z = random_tensor({2, 4, 4}, rng, -2, 2, false);
  AttentionTrace trace;
  Tape tape(Tape::Mode::inference);
  masked_msa(tape, z, p, default_mask_schedule(2), &trace, 3);
  ASSERT_EQ(trace.heads.size(), 4u);
  for (const auto& ht : trace.heads) {
    EXPECT_EQ(ht.layer, 3u);
    EXPECT_EQ(ht.seq_len, 4u);
    EXPECT_EQ(ht.theta, ht.head == 0 ? 0.1 : 0.01);
    ASSERT_EQ(ht.alpha_raw.size(), 16u);
    ASSERT_EQ(ht.alpha_masked.size(), 16u);
    for (std::size_t r = 0; r < 4; ++r) {
      double raw = 0.0, masked = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        raw += ht.alpha_raw[r * 4 + c];
        masked += ht.alpha_masked[r * 4 + c];
      }
      EXPECT_NEAR(raw, 1.0, 1e-12);
      EXPECT_NEAR(masked, 1.0, 1e-12);
    }
    for (const auto& [r, c] : ht.masked_pairs) {
      EXPECT_EQ(ht.alpha_masked[r * 4 + c], 0.0);
      EXPECT_LE(ht.alpha_raw[r * 4 + c], ht.theta);
    }
  }
}

TEST(MaskedMsa, PermutationEquivariance) {
  Rng rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    const HeadParams p = random_heads(8, 2, rng);
    const EncoderLayerParams layer = random_layer(8, 2, 16, rng);
    Tensor z = random_tensor({2, 6, 8}, rng, -1, 1, false);
    std::vector<std::size_t> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 5; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    Tape tape(Tape::Mode::inference);
    Rng drop(0);
    const MaskSchedule masks = default_mask_schedule(2);
    const Tensor a = permute_positions(masked_msa(tape, z, p, masks), perm);
    const Tensor b = masked_msa(tape, permute_positions(z, perm), p, masks);
    EXPECT_LT(testing::max_abs_diff(a.data(), b.data()), 1e-9);
    const Tensor c = permute_positions(encoder_layer(tape, z, layer, masks, {}, Phase::eval, drop), perm);
    const Tensor e = encoder_layer(tape, permute_positions(z, perm), layer, masks, {}, Phase::eval, drop);
    EXPECT_LT(testing::max_abs_diff(c.data(), e.data()), 1e-9);
  }
}

TEST(EncoderLayer, ZeroParametersPassInputThrough) {
  const std::size_t d = 4;
  EncoderLayerParams p;
  for (std::size_t h = 0; h < 2; ++h) {
    p.attention.w_q.push_back(Tensor::zeros({d, 2}));
    p.attention.w_k.push_back(Tensor::zeros({d, 2}));
    p.attention.w_v.push_back(Tensor::zeros({d, 2}));
  }
  p.attention.u_msa = Tensor::zeros({d, d});
  p.ln_attention = {Tensor::full({d}, 1.0), Tensor::zeros({d})};
  p.ln_ffn = {Tensor::full({d}, 1.0), Tensor::zeros({d})};
  p.ffn = {Tensor::zeros({d, 16}), Tensor::zeros({16}), Tensor::zeros({16, d}), Tensor::zeros({d})};
  Rng rng(14);
  Tensor z = random_tensor({2, 3, d}, rng, -1, 1, false);
  Tape tape(Tape::Mode::inference);
  const Tensor out = encoder_layer(tape, z, p, default_mask_schedule(2), {}, Phase::eval, rng);
  EXPECT_EQ(to_vector(out.data()), to_vector(z.data()));
}

TEST(EncoderLayer, MatchesReferenceWithAndWithoutLayerNorm) {
  Rng rng(15);
  for (bool use_ln : {true, false}) {
    const EncoderLayerParams layer = random_layer(8, 2, 32, rng);
    Tensor z = random_tensor({3, 5, 8}, rng, -1, 1, false);
    EncoderOptions options;
    options.layer_norm = use_ln;
    Tape tape(Tape::Mode::inference);
    const auto masks = default_mask_schedule(2);
    const Tensor out = encoder_layer(tape, z, layer, masks, options, Phase::eval, rng);
    for (std::size_t n = 0; n < 3; ++n) {
      reference::Mat sample(z.data().begin() + n * 40, z.data().begin() + n * 40 + 40);
      const auto expected = reference::encoder_layer(sample, 5, 8, layer, masks.thetas, use_ln);
      EXPECT_LT(testing::max_abs_diff(out.data().subspan(n * 40, 40), expected), 1e-12) << "layer_norm=" << use_ln;
    }
  }
}

TEST(EncoderLayer, Gradient) {
  Rng rng(16);
  const EncoderLayerParams layer = random_layer(4, 2, 8, rng);
  Tensor z = random_tensor({2, 3, 4}, rng, -1, 1);
  std::vector<NamedTensor> params = {{"z", z},
                                     {"w_q0", layer.attention.w_q[0]},
                                     {"w_k1", layer.attention.w_k[1]},
                                     {"w_v0", layer.attention.w_v[0]},
                                     {"u_msa", layer.attention.u_msa},
                                     {"ln_attention.gamma", layer.ln_attention.gamma},
                                     {"ln_ffn.beta", layer.ln_ffn.beta},
                                     {"ffn.w1", layer.ffn.w1},
                                     {"ffn.b2", layer.ffn.b2}};
  // Finite differences jump wherever a weight crosses its threshold, so each
  // head's theta sits in the middle of the widest gap between its weights.
  MaskSchedule masks{{0.0, 0.0}};
  {
    Tape tape(Tape::Mode::inference);
    Rng drop(0);
    AttentionTrace trace;
    encoder_layer(tape, z, layer, masks, {}, Phase::eval, drop, &trace);
    for (std::size_t h = 0; h < 2; ++h) {
      std::vector<double> alphas;
      for (const auto& ht : trace.heads) {
        if (ht.head == h) alphas.insert(alphas.end(), ht.alpha_raw.begin(), ht.alpha_raw.end());
      }
      std::sort(alphas.begin(), alphas.end());
      double best_gap = 0.0;
      for (std::size_t i = 1; i < alphas.size(); ++i) {
        if (alphas[i - 1] < 0.02 || alphas[i] > 0.6) continue;
        if (alphas[i] - alphas[i - 1] > best_gap) {
          best_gap = alphas[i] - alphas[i - 1];
          masks.thetas[h] = 0.5 * (alphas[i] + alphas[i - 1]);
        }
      }
      ASSERT_GT(best_gap, 1e-3);
    }
  }
  Rng wr(17);
  const Tensor g = random_tensor(z.shape(), wr, -1, 1, false);
  const auto report = check_gradients(params, [&](Tape& tape) {
    Rng drop(0);
    return ops::sum(tape, ops::mul(tape, encoder_layer(tape, z, layer, masks, {}, Phase::eval, drop), g));
  });
  for (const auto& t : report.tensors) {
    EXPECT_LT(t.worst_relative_error, 1e-4) << t.name << " analytic " << t.analytic << " numeric " << t.numeric;
  }
}

TEST(DotInteraction, LowerTriangleProducts) {
  EXPECT_TRUE(lower_triangle_products(std::vector<double>{1.0, 2.0}, 1, 2).empty());
  const std::vector<double> ortho = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_EQ(lower_triangle_products(ortho, 3, 3), (std::vector<double>{0, 0, 0}));
  const std::vector<double> z = {1, 0, 2, 0, 0, 3};
  EXPECT_EQ(lower_triangle_products(z, 3, 2), (std::vector<double>{2, 0, 0}));
}

TEST(DotInteraction, BatchedMatchesPerSampleAndGradient) {
  Rng rng(18);
  Tensor z = random_tensor({3, 4, 5}, rng);
  Tape tape(Tape::Mode::inference);
  const Tensor out = dot_product_interaction(tape, z);
  ASSERT_EQ(out.shape(), (Shape{3, 6}));
  for (std::size_t n = 0; n < 3; ++n) {
    EXPECT_EQ(to_vector(out.data().subspan(n * 6, 6)), lower_triangle_products(z.data().subspan(n * 20, 20), 4, 5));
  }
  EXPECT_THROW(dot_product_interaction(tape, Tensor::zeros({1, 1, 3})), DimensionError);
  Rng wr(19);
  const Tensor g = random_tensor({3, 6}, wr, -1, 1, false);
  const auto report = check_gradients({{"z", z}}, [&](Tape& t) {
    return ops::sum(t, ops::mul(t, dot_product_interaction(t, z), g));
  });
  EXPECT_LT(report.worst(), 1e-4);
}

TEST(Positional, AddsTablePerSample) {
  Rng rng(20);
  PositionalTable table{Tensor::zeros({3, 2}, true), true};
  Tensor z0 = random_tensor({2, 3, 2}, rng, -1, 1, false);
  Tape tape(Tape::Mode::inference);
  EXPECT_EQ(to_vector(add_positional(tape, z0, table).data()), to_vector(z0.data()));
  PositionalTable filled{random_tensor({3, 2}, rng), true};
  const Tensor out = add_positional(tape, Tensor::zeros({2, 3, 2}), filled);
  for (std::size_t n = 0; n < 2; ++n) EXPECT_EQ(to_vector(out.data().subspan(n * 6, 6)), to_vector(filled.e_pos.data()));
  EXPECT_THROW(add_positional(tape, z0, PositionalTable{filled.e_pos, false}), ContractError);
}

TEST(Positional, GradientOfSumIsBatchCount) {
  Rng rng(21);
  PositionalTable table{random_tensor({3, 2}, rng), true};
  Tensor z0 = random_tensor({4, 3, 2}, rng, -1, 1, false);
  Tape tape;
  tape.backward(ops::sum(tape, add_positional(tape, z0, table)));
  for (double g : table.e_pos.grad()) EXPECT_EQ(g, 4.0);
  const auto fd = finite_diff_grad([&](const Tensor&) {
    Tape t(Tape::Mode::inference);
    return ops::sum(t, add_positional(t, z0, table)).item();
  }, table.e_pos);
  for (double g : fd.data()) EXPECT_NEAR(g, 4.0, 1e-6);
}

}  // namespace
}  // namespace maskrec
