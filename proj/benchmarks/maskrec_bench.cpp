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

#include <benchmark/benchmark.h>

#include <vector>

#include "maskrec/data.hpp"
#include "maskrec/interaction.hpp"
#include "maskrec/model.hpp"
#include "maskrec/ops.hpp"
#include "maskrec/training.hpp"

namespace maskrec {
namespace {

Tensor uniform(Shape shape, Rng& rng, bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(-0.5, 0.5);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

EncoderLayerParams random_layer(std::size_t d, std::size_t heads, Rng& rng) {
  EncoderLayerParams p;
  const std::size_t hw = d / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    p.attention.w_q.push_back(uniform({d, hw}, rng, true));
    p.attention.w_k.push_back(uniform({d, hw}, rng, true));
    p.attention.w_v.push_back(uniform({d, hw}, rng, true));
  }
  p.attention.u_msa = uniform({d, d}, rng, true);
  p.ln_attention = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
  p.ln_ffn = {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
  p.ffn = {uniform({d, 4 * d}, rng, true), Tensor::zeros({4 * d}, true), uniform({4 * d, d}, rng, true),
           Tensor::zeros({d}, true)};
  return p;
}

// Criteo-shaped input: 26 sparse features plus the dense slot.
constexpr std::size_t kSeq = 27;

void BM_MaskedMsaForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const EncoderLayerParams layer = random_layer(16, 2, rng);
  const Tensor z = uniform({batch, kSeq, 16}, rng, false);
  const MaskSchedule masks = default_mask_schedule(2);
  for (auto _ : state) {
    Tape tape(Tape::Mode::inference);
    benchmark::DoNotOptimize(masked_msa(tape, z, layer.attention, masks).data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_MaskedMsaForward)->Arg(32)->Arg(128);

void BM_EncoderLayerForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const EncoderLayerParams layer = random_layer(16, 2, rng);
  const Tensor z = uniform({batch, kSeq, 16}, rng, true);
  const MaskSchedule masks = default_mask_schedule(2);
  for (auto _ : state) {
    Tape tape;
    Rng drop(3);
    const Tensor out = encoder_layer(tape, z, layer, masks, {}, Phase::train, drop);
    tape.backward(ops::sum(tape, out));
    z.zero_grad();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_EncoderLayerForwardBackward)->Arg(32)->Arg(128);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<double> scores(n), labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform01();
    labels[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_Auc)->Arg(10000)->Arg(1000000);

void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.n_sparse = 8;
  cfg.n_dense = 2;
  cfg.table_sizes.assign(8, 100);
  cfg.embed_dim = 16;
  cfg.bot_widths = {32, 16};
  cfg.top_widths = {64, 32, 1};
  cfg.interaction = state.range(0) == 0 ? InteractionKind::trec : InteractionKind::dot;
  fill_default_mask(cfg);
  Rng rng(5);
  CtrModel model{cfg, init_params(cfg, rng)};
  const std::vector<Record> records = synthetic_generate(128, rng);
  const Batch batch = make_batch(records, 0, records.size());
  const auto params = model.parameters();
  OptState opt;
  for (auto _ : state) {
    Tape tape;
    const Tensor loss = bce_loss(tape, model.forward(tape, batch, Phase::train, rng), batch.labels);
    tape.backward(loss);
    adagrad_step(params, opt, 0.05);
  }
  state.SetLabel(std::string(to_string(cfg.interaction)));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1);

}  // namespace
}  // namespace maskrec

BENCHMARK_MAIN();
