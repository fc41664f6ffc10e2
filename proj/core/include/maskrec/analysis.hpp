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
#include <string>
#include <vector>

#include "maskrec/interaction.hpp"

namespace maskrec {

struct PcaResult {
  std::vector<double> mean;                     // [D]
  std::vector<std::vector<double>> components;  // k unit vectors of width D
  std::vector<double> explained_variance;       // eigenvalues of the sample covariance
  double total_variance = 0.0;                  // trace of the sample covariance
  std::vector<std::vector<double>> projections; // [n x k]
};

struct PowerIterationOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 10000;
};

// Top-k principal directions of the rows via power iteration with deflation
// on the sample covariance (divisor n - 1). Each component's sign is fixed so
// its largest-magnitude entry is positive. Throws ContractError for fewer
// than 3 rows or ragged input.
PcaResult pca(const std::vector<std::vector<double>>& rows, std::size_t k = 2, const PowerIterationOptions& options = {});

// ["dense", "C1", ..., "CN"].
std::vector<std::string> feature_labels(std::size_t n_sparse);

struct AttentionDump {
  std::vector<std::string> feature_labels;
  std::vector<HeadTrace> heads;  // one entry per (layer, head)
};

// JSON document; masked entries of alpha_masked are written as the integer 0.
std::string serialize_attention_dump(const AttentionDump& dump);
// Throws FormatError on schema violations.
AttentionDump parse_attention_dump(const std::string& text);

}  // namespace maskrec
