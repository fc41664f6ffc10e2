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

#include <string>

#include "maskrec/errors.hpp"
#include "run_config.hpp"
#include "test_support.hpp"

namespace maskrec {
namespace {

using cli::parse_run_config;
using cli::RunConfig;

const char* const kMinimal = R"([model]
table_sizes = 100
embed_dim = 8
bot_widths = 8
top_widths = 16, 1

[data]
format = synthetic
n_train = 100
n_eval = 20
)";

std::string field_of(const std::string& text, bool check_data = true) {
  try {
    parse_run_config(text, check_data);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

TEST(RunConfig, FillsDefaults) {
  const RunConfig cfg = parse_run_config(kMinimal);
  EXPECT_EQ(cfg.model.n_sparse, 8u);
  EXPECT_EQ(cfg.model.n_dense, 2u);
  EXPECT_EQ(cfg.model.table_sizes, std::vector<std::size_t>(8, 100));
  EXPECT_EQ(cfg.model.interaction, InteractionKind::trec);
  EXPECT_EQ(cfg.model.n_layers, 1u);
  EXPECT_EQ(cfg.model.n_heads, 2u);
  EXPECT_DOUBLE_EQ(cfg.model.dropout_p, 0.03);
  EXPECT_EQ(cfg.model.ffn_mult, 4u);
  EXPECT_EQ(cfg.model.activation, Activation::relu);
  EXPECT_TRUE(cfg.model.layer_norm);
  EXPECT_FALSE(cfg.model.positional);
  EXPECT_EQ(cfg.model.mask.thetas, (std::vector<double>{0.1, 0.01}));
  EXPECT_FALSE(cfg.sequence.has_value());
  EXPECT_EQ(cfg.data.seed, cfg.train.seed);
  EXPECT_EQ(cfg.data.eval_seed, cfg.data.seed + 1);
}

TEST(RunConfig, ReadsEverySection) {
  const RunConfig cfg = parse_run_config(std::string(kMinimal) + R"(seed = 9
eval_seed = 40

[train]
optimizer = sgd
lr = 0.2
batch_size = 16
max_iters = 77
target_auc = 0.8
eval_every = 7
seed = 3
out_dir = somewhere
)");
  EXPECT_EQ(cfg.train.optimizer, OptimizerKind::sgd);
  EXPECT_DOUBLE_EQ(cfg.train.lr, 0.2);
  EXPECT_EQ(cfg.train.batch_size, 16u);
  EXPECT_EQ(cfg.train.max_iters, 77u);
  ASSERT_TRUE(cfg.train.target_auc.has_value());
  EXPECT_DOUBLE_EQ(*cfg.train.target_auc, 0.8);
  EXPECT_EQ(cfg.train.eval_every, 7u);
  EXPECT_EQ(cfg.out_dir, "somewhere");
  EXPECT_EQ(cfg.data.seed, 9u);
  EXPECT_EQ(cfg.data.eval_seed, 40u);
}

TEST(RunConfig, ExplicitMaskAndFlags) {
  std::string text = kMinimal;
  text.insert(text.find("table_sizes"), "mask = 0.2, 0\nlayer_norm = off\npositional = yes\nactivation = gelu\n");
  const RunConfig cfg = parse_run_config(text);
  EXPECT_EQ(cfg.model.mask.thetas, (std::vector<double>{0.2, 0.0}));
  EXPECT_FALSE(cfg.model.layer_norm);
  EXPECT_TRUE(cfg.model.positional);
  EXPECT_EQ(cfg.model.activation, Activation::gelu);
}

TEST(RunConfig, DuplicateKeyRejected) {
  std::string text = kMinimal;
  text.insert(text.find("table_sizes"), "embed_dim = 4\n");
  EXPECT_THROW(parse_run_config(text), ConfigError);
}

TEST(RunConfig, UnknownKeyIsNamed) {
  std::string text = kMinimal;
  text.insert(text.find("table_sizes"), "heds = 2\n");
  EXPECT_EQ(field_of(text), "heds");
  EXPECT_EQ(field_of(std::string(kMinimal) + "[trian]\nlr = 1\n"), "trian");
}

TEST(RunConfig, IndivisibleHeadsNamed) {
  std::string text = kMinimal;
  text.insert(text.find("table_sizes"), "n_heads = 3\n");
  EXPECT_EQ(field_of(text), "n_heads");
}

TEST(RunConfig, BadValuesNamed) {
  auto with_model = [](const std::string& line) {
    std::string text = kMinimal;
    text.insert(text.find("table_sizes"), line + "\n");
    return text;
  };
  EXPECT_EQ(field_of(with_model("ffn_mult = eight")), "ffn_mult");
  EXPECT_EQ(field_of(with_model("dropout_p = nan")), "dropout_p");
  EXPECT_EQ(field_of(with_model("layer_norm = maybe")), "layer_norm");
  EXPECT_EQ(field_of(with_model("n_sparse = 4")), "n_sparse");
  EXPECT_EQ(field_of(with_model("mask = 0.1")), "mask");
}

TEST(RunConfig, DataChecks) {
  std::string no_eval = kMinimal;
  no_eval.erase(no_eval.find("n_eval"));
  EXPECT_EQ(field_of(no_eval), "n_eval");
  EXPECT_NO_THROW(parse_run_config(no_eval, false));

  const std::string small_tables = R"([model]
table_sizes = 50
embed_dim = 8
bot_widths = 8
top_widths = 1
[data]
format = synthetic
n_train = 10
n_eval = 10
)";
  EXPECT_EQ(field_of(small_tables), "table_sizes");

  const std::string criteo = R"([model]
n_sparse = 8
table_sizes = 1000
embed_dim = 8
bot_widths = 8
top_widths = 1
[data]
format = criteo
path = day_0.tsv
)";
  EXPECT_EQ(field_of(criteo), "n_sparse");
  EXPECT_EQ(field_of("[model]\nn_sparse = 26\nn_dense = 13\ntable_sizes = 1000\nembed_dim = 8\nbot_widths = 8\n"
                     "top_widths = 1\n[data]\nformat = criteo\n"),
            "path");
}

TEST(RunConfig, SequenceNeedsTaobao) {
  const std::string seq = R"([model]
n_sparse = 3
n_dense = 1
table_sizes = 50
embed_dim = 8
bot_widths = 8
top_widths = 16, 1
seq_widths = 8, 1
[data]
format = taobao
path = events.csv
seq_len = 4
)";
  const RunConfig cfg = parse_run_config(seq);
  ASSERT_TRUE(cfg.sequence.has_value());
  EXPECT_EQ(cfg.sequence->seq_widths, (std::vector<std::size_t>{8, 1}));
  EXPECT_EQ(cfg.data.spec.seq_len, 4u);

  std::string without = seq;
  without.erase(without.find("seq_widths"), std::string("seq_widths = 8, 1\n").size());
  EXPECT_EQ(field_of(without), "seq_widths");
}

TEST(RunConfig, MalformedIni) {
  EXPECT_THROW(parse_run_config("[model\nx = 1\n"), ConfigError);
  EXPECT_EQ(field_of("stray = 1\n"), "stray");
}

TEST(RunConfig, ShippedConfigsParse) {
  const std::filesystem::path dir = MASKREC_CONFIG_DIR;
  EXPECT_NO_THROW(cli::load_run_config(dir / "synthetic_smoke.ini"));
  EXPECT_NO_THROW(cli::load_run_config(dir / "synthetic_parity.ini"));
  EXPECT_NO_THROW(cli::load_run_config(dir / "gradcheck_tiny.ini", false));
  EXPECT_NO_THROW(cli::load_run_config(dir / "gradcheck_sequential.ini", false));
  EXPECT_THROW(cli::load_run_config(dir / "missing.ini"), ConfigError);
}

}  // namespace
}  // namespace maskrec
