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

#include "maskrec/records.hpp"

#include "maskrec/errors.hpp"

namespace maskrec {

void FeatureBatch::append(const std::vector<double>& d, const std::vector<std::int64_t>& s) {
  if (rows == 0) {
    n_dense = d.size();
    n_sparse = s.size();
  }
  if (d.size() != n_dense || s.size() != n_sparse) {
    throw DimensionError("batch rows must share feature widths (" + std::to_string(n_dense) + " dense, " +
                         std::to_string(n_sparse) + " sparse)");
  }
  dense.insert(dense.end(), d.begin(), d.end());
  sparse.insert(sparse.end(), s.begin(), s.end());
  ++rows;
}

Batch make_batch(const std::vector<Record>& records, std::size_t begin, std::size_t end) {
  Batch b;
  for (std::size_t i = begin; i < end; ++i) {
    b.features.append(records[i].dense, records[i].sparse);
    b.labels.push_back(records[i].label);
  }
  return b;
}

Batch make_batch(const std::vector<const Record*>& records) {
  Batch b;
  for (const Record* r : records) {
    b.features.append(r->dense, r->sparse);
    b.labels.push_back(r->label);
  }
  return b;
}

SequenceBatch make_sequence_batch(const std::vector<const SequenceRecord*>& records) {
  SequenceBatch b;
  if (records.empty()) return b;
  b.history_len = records.front()->history.size();
  for (const SequenceRecord* r : records) {
    if (r->history.size() != b.history_len) throw DimensionError("sequence batch rows must share history length");
    for (const Event& e : r->history) b.history.append(e.dense, e.sparse);
    b.candidates.append(r->candidate.dense, r->candidate.sparse);
    b.labels.push_back(r->label);
  }
  return b;
}

}  // namespace maskrec
