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
#include <cstdint>
#include <string>
#include <vector>

namespace maskrec {

// One labeled tabular example.
struct Record {
  int label = 0;
  std::vector<double> dense;
  std::vector<std::int64_t> sparse;
};

// One user event inside a time-ordered sequence.
struct Event {
  std::vector<double> dense;
  std::vector<std::int64_t> sparse;
  std::int64_t timestamp = 0;
};

// History of events (ascending time) plus the candidate next event.
struct SequenceRecord {
  std::string user;
  std::vector<Event> history;
  Event candidate;
  int label = 0;
};

// Row-major feature block: dense [rows x n_dense], sparse [rows x n_sparse].
struct FeatureBatch {
  std::size_t rows = 0;
  std::size_t n_dense = 0;
  std::size_t n_sparse = 0;
  std::vector<double> dense;
  std::vector<std::int64_t> sparse;

  void append(const std::vector<double>& d, const std::vector<std::int64_t>& s);
};

struct Batch {
  FeatureBatch features;
  std::vector<double> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

// history holds size * history_len events, sample-major.
struct SequenceBatch {
  std::size_t history_len = 0;
  FeatureBatch history;
  FeatureBatch candidates;
  std::vector<double> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

Batch make_batch(const std::vector<Record>& records, std::size_t begin, std::size_t end);
Batch make_batch(const std::vector<const Record*>& records);
SequenceBatch make_sequence_batch(const std::vector<const SequenceRecord*>& records);

}  // namespace maskrec
