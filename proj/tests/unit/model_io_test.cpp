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

#include <fstream>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "maskrec/errors.hpp"
#include "maskrec/model.hpp"
#include "test_support.hpp"

namespace maskrec {
namespace {

using testing::to_vector;

CtrModel make_model(std::uint64_t seed) {
  ModelConfig cfg = testing::tiny_config(3, 20);
  cfg.positional = true;
  cfg.activation = Activation::gelu;
  cfg.mask.thetas = {0.2, 0.0};
  Rng rng(seed);
  return {cfg, init_params(cfg, rng)};
}

std::vector<double> run(const CtrModel& m, const FeatureBatch& batch) {
  Tape tape(Tape::Mode::inference);
  Rng rng(0);
  return to_vector(forward_ctr(tape, m.params, m.config, batch, Phase::eval, rng).data());
}

std::string expect_format_error(const std::string& text) {
  try {
    deserialize_model(text);
  } catch (const FormatError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected FormatError";
  return {};
}

TEST(ModelIo, CtrRoundTripIsBitExact) {
  const CtrModel model = make_model(1);
  const LoadedModel loaded = deserialize_model(serialize_model(model));
  ASSERT_TRUE(std::holds_alternative<CtrModel>(loaded));
  const CtrModel& back = std::get<CtrModel>(loaded);
  EXPECT_EQ(back.config.mask.thetas, model.config.mask.thetas);
  EXPECT_EQ(back.config.activation, Activation::gelu);
  EXPECT_TRUE(back.config.positional);
  const auto a = model.parameters(), b = back.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(to_vector(a[i].tensor.data()), to_vector(b[i].tensor.data())) << a[i].name;
  }
  Rng rng(2);
  const FeatureBatch batch = testing::random_features(model.config, 7, rng);
  EXPECT_EQ(run(model, batch), run(back, batch));
}

TEST(ModelIo, SequentialRoundTripThroughFile) {
  ModelConfig cfg = testing::tiny_config();
  SequenceConfig seq{{4, 1}};
  Rng rng(3);
  SequentialModel model{cfg, seq, init_params(cfg, rng), init_sequence_params(cfg, seq, rng)};
  testing::TempDir dir("model_io");
  save_model(model, dir / "seq.json");
  const LoadedModel loaded = load_model(dir / "seq.json");
  ASSERT_TRUE(std::holds_alternative<SequentialModel>(loaded));
  const auto& back = std::get<SequentialModel>(loaded);
  EXPECT_EQ(back.seq_config.seq_widths, seq.seq_widths);
  const SequenceBatch batch = testing::random_sequence_batch(cfg, 4, 3, rng);
  Tape tape(Tape::Mode::inference);
  Rng d(0);
  EXPECT_EQ(to_vector(model.forward(tape, batch, Phase::eval, d).data()),
            to_vector(back.forward(tape, batch, Phase::eval, d).data()));
}

TEST(ModelIo, CorruptedHeaderIsRejected) {
  std::string text = serialize_model(make_model(4));
  expect_format_error("{" + text);
  expect_format_error("");
  nlohmann::json j = nlohmann::json::parse(text);
  j["format"] = "something-else";
  expect_format_error(j.dump());
  j = nlohmann::json::parse(text);
  j["format_version"] = kModelFormatVersion + 1;
  EXPECT_NE(expect_format_error(j.dump()).find("format_version"), std::string::npos);
}

TEST(ModelIo, ShapeDisagreementNamesTensor) {
  nlohmann::json j = nlohmann::json::parse(serialize_model(make_model(5)));
  j["config"]["embed_dim"] = 4;
  j["config"]["bot_widths"] = {4};
  const std::string msg = expect_format_error(j.dump());
  EXPECT_NE(msg.find("tables.0"), std::string::npos) << msg;
}

TEST(ModelIo, MissingOrExtraTensorIsNamed) {
  nlohmann::json j = nlohmann::json::parse(serialize_model(make_model(6)));
  j["tensors"].erase("encoder.0.u_msa");
  EXPECT_NE(expect_format_error(j.dump()).find("encoder.0.u_msa"), std::string::npos);
  j = nlohmann::json::parse(serialize_model(make_model(6)));
  j["tensors"]["bogus"] = j["tensors"]["tables.0"];
  EXPECT_NE(expect_format_error(j.dump()).find("bogus"), std::string::npos);
  j = nlohmann::json::parse(serialize_model(make_model(6)));
  j["tensors"]["mlp_top.0.b"]["data"].erase(0);
  EXPECT_NE(expect_format_error(j.dump()).find("mlp_top.0.b"), std::string::npos);
}

TEST(ModelIo, InvalidStoredConfigIsFormatError) {
  nlohmann::json j = nlohmann::json::parse(serialize_model(make_model(7)));
  j["config"]["n_heads"] = 3;
  expect_format_error(j.dump());
  j = nlohmann::json::parse(serialize_model(make_model(7)));
  j["config"].erase("n_layers");
  EXPECT_NE(expect_format_error(j.dump()).find("n_layers"), std::string::npos);
}

TEST(ModelIo, MissingFileIsError) {
  testing::TempDir dir("model_io_missing");
  EXPECT_THROW(load_model(dir / "absent.json"), Error);
}

}  // namespace
}  // namespace maskrec
