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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "maskrec/data.hpp"
#include "maskrec/model.hpp"
#include "maskrec/training.hpp"

namespace maskrec::cli {

struct DataConfig {
  DatasetSpec spec;                          // training source
  std::optional<std::filesystem::path> eval_path;
  double eval_fraction = 0.1;                // tail split when eval_path is absent
  std::size_t n_train = 0;                   // synthetic only
  std::size_t n_eval = 0;                    // synthetic only
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 1;
};

struct RunConfig {
  ModelConfig model;
  std::optional<SequenceConfig> sequence;  // present iff [model] seq_widths is set
  TrainConfig train;
  DataConfig data;
  std::filesystem::path out_dir = "out";
};

// INI document with sections [model], [train], [data]. Unknown sections or
// keys raise ConfigError naming them; defaults are filled and the result is
// cross-validated (model widths, head divisibility, data/table agreement).
// With `check_data` false only the model and training sections are
// validated, which suits commands that never read the data source.
RunConfig load_run_config(const std::filesystem::path& path, bool check_data = true);
RunConfig parse_run_config(const std::string& text, bool check_data = true);

// Throws ConfigError when the data source cannot feed the model.
void cross_validate(const RunConfig& cfg, bool check_data = true);

}  // namespace maskrec::cli
