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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maskrec/records.hpp"
#include "maskrec/rng.hpp"

namespace maskrec {

inline constexpr std::size_t kCriteoDense = 13;
inline constexpr std::size_t kCriteoSparse = 26;
inline constexpr std::size_t kAvazuSparse = 21;
inline constexpr std::size_t kTaobaoSparse = 3;  // user, item, category
inline constexpr std::size_t kTaobaoDefaultSeqLen = 20;

// missing or negative -> 0, otherwise ln(1 + x).
double dense_transform(std::optional<std::int64_t> raw);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// FNV-1a over the 4-byte little-endian feature index followed by the value,
// mapped to [1, modulus). Index 0 stays reserved for missing values.
std::int64_t hash_feature(std::string_view value, std::size_t feature_index, std::size_t modulus);

// `hash_sizes` holds one modulus per sparse column. `line_no` only labels
// errors.
Record parse_criteo_line(std::string_view line, const std::vector<std::size_t>& hash_sizes, std::size_t line_no = 0);
std::vector<Record> read_criteo(std::istream& in, const std::vector<std::size_t>& hash_sizes);

// One headerless data row `id,click,hour,<21 categoricals>`.
Record parse_avazu_line(std::string_view line, const std::vector<std::size_t>& hash_sizes, std::size_t line_no = 0);
// Full CSV with header row.
std::vector<Record> read_avazu(std::istream& in, const std::vector<std::size_t>& hash_sizes);

// `label \t dense_1 .. dense_n \t idx_1 .. idx_N` with raw table indices.
Record parse_indexed_line(std::string_view line, std::size_t n_dense, std::size_t n_sparse, std::size_t line_no = 0);

struct TaobaoData {
  std::vector<SequenceRecord> records;
  std::size_t skipped_rows = 0;
};

// Rows `user_id,item_id,category_id,behavior_type,timestamp`. Each user's
// events are sorted by time and a window of seq_len + 1 events slides over
// them: one positive per window plus one negative whose candidate item (and
// category) is replaced by a uniformly drawn other item. Event dense feature:
// ln(1 + hours between the event and the candidate).
TaobaoData read_taobao(std::istream& in, std::size_t seq_len, const std::vector<std::size_t>& hash_sizes, Rng& rng);

struct SyntheticSpec {
  std::size_t n_sparse = 8;
  std::size_t vocab = 100;
  std::size_t n_dense = 2;
  double p_even = 0.9;  // click rate when v1 + v2 + v3 is even
  double p_odd = 0.1;
};

// Sparse values are raw table indices in [0, vocab); dense ~ U[0, 1).
std::vector<Record> synthetic_generate(std::size_t n, Rng& rng, const SyntheticSpec& spec = {});

// Fisher-Yates: for i = n-1 .. 1 swap(i, uniform_index(i + 1)).
std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng);

// Index groups of at most batch_size; the final group may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, Rng& rng, bool shuffle);

std::vector<Batch> make_batches(const std::vector<Record>& records, std::size_t batch_size, Rng& rng, bool shuffle);
std::vector<SequenceBatch> make_sequence_batches(const std::vector<SequenceRecord>& records, std::size_t batch_size,
                                                 Rng& rng, bool shuffle);

enum class DataFormat { criteo, avazu, taobao, synthetic, indexed };

DataFormat parse_data_format(std::string_view name);
std::string_view to_string(DataFormat format);

struct DatasetSpec {
  DataFormat format = DataFormat::synthetic;
  std::filesystem::path path;
  std::size_t n = 0;                          // synthetic record count
  std::uint64_t seed = 0;                     // synthetic stream / taobao negatives
  std::size_t seq_len = kTaobaoDefaultSeqLen;
  std::vector<std::size_t> hash_sizes;        // one modulus per sparse column
};

// "synthetic:n=1000,seed=7", "criteo:PATH", "avazu:PATH",
// "taobao:PATH[,seq_len=K][,seed=S]".
DatasetSpec parse_dataset_spec(std::string_view text);

std::vector<Record> load_records(const DatasetSpec& spec);
TaobaoData load_sequences(const DatasetSpec& spec);

}  // namespace maskrec
