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

#include "maskrec/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "maskrec/errors.hpp"

namespace maskrec {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

int parse_label(std::string_view s, std::size_t line_no) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw ParseError(line_no, "label must be 0 or 1, got '" + std::string(s) + "'");
}

void check_hash_sizes(const std::vector<std::size_t>& hash_sizes, std::size_t expected, const char* format) {
  if (hash_sizes.size() != expected) {
    throw ConfigError("table_sizes", std::string(format) + " data needs " + std::to_string(expected) +
                                         " tables, got " + std::to_string(hash_sizes.size()));
  }
  for (std::size_t m : hash_sizes) {
    if (m < 2) throw ConfigError("table_sizes", "hashed tables need at least 2 rows");
  }
}

std::int64_t hash_or_missing(std::string_view value, std::size_t feature, std::size_t modulus) {
  return value.empty() ? 0 : hash_feature(value, feature, modulus);
}

template <typename ParseLine>
std::vector<Record> read_lines(std::istream& in, std::size_t first_line_no, ParseLine parse) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = first_line_no;
  while (std::getline(in, line)) {
    if (!strip_cr(line).empty()) out.push_back(parse(line, line_no));
    ++line_no;
  }
  return out;
}

}  // namespace

double dense_transform(std::optional<std::int64_t> raw) {
  if (!raw || *raw < 0) return 0.0;
  return std::log1p(static_cast<double>(*raw));
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::int64_t hash_feature(std::string_view value, std::size_t feature_index, std::size_t modulus) {
  if (modulus < 2) throw ContractError("hash_feature needs a modulus of at least 2");
  const auto idx = static_cast<std::uint32_t>(feature_index);
  const char prefix[4] = {static_cast<char>(idx & 0xff), static_cast<char>((idx >> 8) & 0xff),
                          static_cast<char>((idx >> 16) & 0xff), static_cast<char>((idx >> 24) & 0xff)};
  const std::uint64_t h = fnv1a64(value, fnv1a64(std::string_view(prefix, 4)));
  return static_cast<std::int64_t>(1 + h % (modulus - 1));
}

Record parse_criteo_line(std::string_view line, const std::vector<std::size_t>& hash_sizes, std::size_t line_no) {
  check_hash_sizes(hash_sizes, kCriteoSparse, "criteo");
  const auto cols = split(strip_cr(line), '\t');
  if (cols.size() != 1 + kCriteoDense + kCriteoSparse) {
    throw ParseError(line_no, "expected " + std::to_string(1 + kCriteoDense + kCriteoSparse) + " tab-separated columns, got " +
                                  std::to_string(cols.size()));
  }
  Record r;
  r.label = parse_label(cols[0], line_no);
  r.dense.reserve(kCriteoDense);
  for (std::size_t i = 0; i < kCriteoDense; ++i) {
    const std::string_view f = cols[1 + i];
    std::optional<std::int64_t> raw;
    if (!f.empty()) {
      raw = parse_int(f);
      if (!raw) throw ParseError(line_no, "dense field I" + std::to_string(i + 1) + " is not an integer");
    }
    r.dense.push_back(dense_transform(raw));
  }
  r.sparse.reserve(kCriteoSparse);
  for (std::size_t i = 0; i < kCriteoSparse; ++i) {
    r.sparse.push_back(hash_or_missing(cols[1 + kCriteoDense + i], i, hash_sizes[i]));
  }
  return r;
}

std::vector<Record> read_criteo(std::istream& in, const std::vector<std::size_t>& hash_sizes) {
  return read_lines(in, 1, [&](std::string_view l, std::size_t n) { return parse_criteo_line(l, hash_sizes, n); });
}

Record parse_avazu_line(std::string_view line, const std::vector<std::size_t>& hash_sizes, std::size_t line_no) {
  check_hash_sizes(hash_sizes, kAvazuSparse, "avazu");
  const auto cols = split(strip_cr(line), ',');
  if (cols.size() != 3 + kAvazuSparse) {
    throw ParseError(line_no, "expected " + std::to_string(3 + kAvazuSparse) + " comma-separated columns, got " +
                                  std::to_string(cols.size()));
  }
  Record r;
  r.label = parse_label(cols[1], line_no);
  const std::string_view hour = cols[2];
  const auto hh = hour.size() == 8 ? parse_int(hour.substr(6)) : std::nullopt;
  if (!hh || !parse_int(hour) || *hh < 0 || *hh > 23) {
    throw ParseError(line_no, "hour must be YYMMDDHH, got '" + std::string(hour) + "'");
  }
  r.dense.push_back(static_cast<double>(*hh) / 23.0);
  for (std::size_t i = 0; i < kAvazuSparse; ++i) r.sparse.push_back(hash_or_missing(cols[3 + i], i, hash_sizes[i]));
  return r;
}

std::vector<Record> read_avazu(std::istream& in, const std::vector<std::size_t>& hash_sizes) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError(1, "avazu file is empty (header row expected)");
  const auto names = split(strip_cr(header), ',');
  const char* required[] = {"id", "click", "hour"};
  for (std::size_t i = 0; i < 3; ++i) {
    if (names.size() <= i || names[i] != required[i]) {
      throw ParseError(1, std::string("header column ") + std::to_string(i + 1) + " must be '" + required[i] + "'");
    }
  }
  if (names.size() > 3 + kAvazuSparse) {
    throw ParseError(1, "unexpected extra column '" + std::string(names[3 + kAvazuSparse]) + "'");
  }
  if (names.size() < 3 + kAvazuSparse) {
    throw ParseError(1, "header has " + std::to_string(names.size() - 3) + " categorical columns, expected " +
                            std::to_string(kAvazuSparse));
  }
  return read_lines(in, 2, [&](std::string_view l, std::size_t n) { return parse_avazu_line(l, hash_sizes, n); });
}

Record parse_indexed_line(std::string_view line, std::size_t n_dense, std::size_t n_sparse, std::size_t line_no) {
  const auto cols = split(strip_cr(line), '\t');
  if (cols.size() != 1 + n_dense + n_sparse) {
    throw ParseError(line_no, "expected " + std::to_string(1 + n_dense + n_sparse) + " tab-separated columns, got " +
                                  std::to_string(cols.size()));
  }
  Record r;
  r.label = parse_label(cols[0], line_no);
  for (std::size_t i = 0; i < n_dense; ++i) {
    const auto v = parse_double(cols[1 + i]);
    if (!v) throw ParseError(line_no, "dense column " + std::to_string(i + 1) + " is not a finite number");
    r.dense.push_back(*v);
  }
  for (std::size_t i = 0; i < n_sparse; ++i) {
    const auto v = parse_int(cols[1 + n_dense + i]);
    if (!v || *v < 0) throw ParseError(line_no, "sparse column " + std::to_string(i + 1) + " is not an index");
    r.sparse.push_back(*v);
  }
  return r;
}

TaobaoData read_taobao(std::istream& in, std::size_t seq_len, const std::vector<std::size_t>& hash_sizes, Rng& rng) {
  check_hash_sizes(hash_sizes, kTaobaoSparse, "taobao");
  if (seq_len == 0) throw ConfigError("seq_len", "history length must be positive");

  struct RawEvent {
    std::string item;
    std::string category;
    std::int64_t timestamp;
  };
  TaobaoData out;
  // std::map keeps users in a stable, seed-independent order.
  std::map<std::string, std::vector<RawEvent>> users;
  std::vector<std::string> items;
  std::unordered_map<std::string, std::string> item_category;

  std::string line;
  while (std::getline(in, line)) {
    const std::string_view row = strip_cr(line);
    if (row.empty()) continue;
    const auto cols = split(row, ',');
    const auto ts = cols.size() == 5 ? parse_int(cols[4]) : std::nullopt;
    if (!ts || cols[0].empty() || cols[1].empty() || cols[2].empty() || cols[3].empty()) {
      ++out.skipped_rows;
      continue;
    }
    std::string item(cols[1]);
    if (item_category.emplace(item, std::string(cols[2])).second) items.push_back(item);
    users[std::string(cols[0])].push_back({std::move(item), std::string(cols[2]), *ts});
  }

  auto make_event = [&](const std::string& user, const std::string& item, const std::string& category,
                        std::int64_t t_event, std::int64_t t_candidate) {
    Event e;
    const double hours = static_cast<double>(std::max<std::int64_t>(t_candidate - t_event, 0)) / 3600.0;
    e.dense.push_back(std::log1p(hours));
    e.sparse = {hash_feature(user, 0, hash_sizes[0]), hash_feature(item, 1, hash_sizes[1]),
                hash_feature(category, 2, hash_sizes[2])};
    e.timestamp = t_event;
    return e;
  };

  for (auto& [user, events] : users) {
    std::stable_sort(events.begin(), events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });
    for (std::size_t k = seq_len; k < events.size(); ++k) {
      const RawEvent& next = events[k];
      SequenceRecord pos;
      pos.user = user;
      pos.label = 1;
      for (std::size_t t = k - seq_len; t < k; ++t) {
        pos.history.push_back(make_event(user, events[t].item, events[t].category, events[t].timestamp, next.timestamp));
      }
      pos.candidate = make_event(user, next.item, next.category, next.timestamp, next.timestamp);

      SequenceRecord neg = pos;
      neg.label = 0;
      std::string replacement = items[rng.uniform_index(items.size())];
      if (items.size() > 1) {
        while (replacement == next.item) replacement = items[rng.uniform_index(items.size())];
      }
      neg.candidate = make_event(user, replacement, item_category.at(replacement), next.timestamp, next.timestamp);

      out.records.push_back(std::move(pos));
      out.records.push_back(std::move(neg));
    }
  }
  return out;
}

std::vector<Record> synthetic_generate(std::size_t n, Rng& rng, const SyntheticSpec& spec) {
  if (spec.n_sparse < 3) throw ConfigError("n_sparse", "the parity rule needs at least 3 sparse features");
  if (spec.vocab == 0) throw ConfigError("vocab", "must be positive");
  std::vector<Record> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Record r;
    r.sparse.reserve(spec.n_sparse);
    for (std::size_t f = 0; f < spec.n_sparse; ++f) r.sparse.push_back(static_cast<std::int64_t>(rng.uniform_index(spec.vocab)));
    r.dense.reserve(spec.n_dense);
    for (std::size_t f = 0; f < spec.n_dense; ++f) r.dense.push_back(rng.uniform01());
    const bool even = (r.sparse[0] + r.sparse[1] + r.sparse[2]) % 2 == 0;
    r.label = rng.bernoulli(even ? spec.p_even : spec.p_odd) ? 1 : 0;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.uniform_index(i + 1)]);
  return order;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, Rng& rng, bool shuffle) {
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  std::vector<std::size_t> order;
  if (shuffle) {
    order = shuffled_order(n, rng);
  } else {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<Record>& records, std::size_t batch_size, Rng& rng, bool shuffle) {
  std::vector<Batch> out;
  for (const auto& group : batch_indices(records.size(), batch_size, rng, shuffle)) {
    std::vector<const Record*> rows;
    for (std::size_t i : group) rows.push_back(&records[i]);
    out.push_back(make_batch(rows));
  }
  return out;
}

std::vector<SequenceBatch> make_sequence_batches(const std::vector<SequenceRecord>& records, std::size_t batch_size,
                                                 Rng& rng, bool shuffle) {
  std::vector<SequenceBatch> out;
  for (const auto& group : batch_indices(records.size(), batch_size, rng, shuffle)) {
    std::vector<const SequenceRecord*> rows;
    for (std::size_t i : group) rows.push_back(&records[i]);
    out.push_back(make_sequence_batch(rows));
  }
  return out;
}

DataFormat parse_data_format(std::string_view name) {
  if (name == "criteo") return DataFormat::criteo;
  if (name == "avazu") return DataFormat::avazu;
  if (name == "taobao") return DataFormat::taobao;
  if (name == "synthetic") return DataFormat::synthetic;
  if (name == "indexed") return DataFormat::indexed;
  throw ConfigError("format", "unknown data format '" + std::string(name) + "'");
}

std::string_view to_string(DataFormat format) {
  switch (format) {
    case DataFormat::criteo:
      return "criteo";
    case DataFormat::avazu:
      return "avazu";
    case DataFormat::taobao:
      return "taobao";
    case DataFormat::synthetic:
      return "synthetic";
    case DataFormat::indexed:
      return "indexed";
  }
  return "?";
}

DatasetSpec parse_dataset_spec(std::string_view text) {
  const std::size_t colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("data", "expected <format>:<arguments>, got '" + std::string(text) + "'");
  DatasetSpec spec;
  spec.format = parse_data_format(text.substr(0, colon));
  if (spec.format == DataFormat::indexed) throw ConfigError("data", "indexed input is only accepted for single lines");
  auto parts = split(text.substr(colon + 1), ',');
  std::size_t first_option = 0;
  if (spec.format != DataFormat::synthetic) {
    if (parts.empty() || parts[0].empty()) throw ConfigError("data", "missing path in '" + std::string(text) + "'");
    spec.path = std::string(parts[0]);
    first_option = 1;
  }
  for (std::size_t i = first_option; i < parts.size(); ++i) {
    const std::size_t eq = parts[i].find('=');
    const std::string key(parts[i].substr(0, eq));
    const auto value = eq == std::string_view::npos ? std::nullopt : parse_int(parts[i].substr(eq + 1));
    if (!value || *value < 0) throw ConfigError("data", "bad option '" + std::string(parts[i]) + "'");
    if (key == "n" && spec.format == DataFormat::synthetic) {
      spec.n = static_cast<std::size_t>(*value);
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(*value);
    } else if (key == "seq_len" && spec.format == DataFormat::taobao) {
      spec.seq_len = static_cast<std::size_t>(*value);
    } else {
      throw ConfigError("data", "unknown option '" + key + "' for " + std::string(to_string(spec.format)));
    }
  }
  return spec;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open data file '" + path.string() + "'");
  return in;
}

}  // namespace

std::vector<Record> load_records(const DatasetSpec& spec) {
  switch (spec.format) {
    case DataFormat::synthetic: {
      Rng rng(spec.seed);
      return synthetic_generate(spec.n, rng);
    }
    case DataFormat::criteo: {
      auto in = open_input(spec.path);
      return read_criteo(in, spec.hash_sizes);
    }
    case DataFormat::avazu: {
      auto in = open_input(spec.path);
      return read_avazu(in, spec.hash_sizes);
    }
    case DataFormat::taobao:
    case DataFormat::indexed:
      break;
  }
  throw ConfigError("data", std::string(to_string(spec.format)) + " data does not yield tabular records");
}

TaobaoData load_sequences(const DatasetSpec& spec) {
  if (spec.format != DataFormat::taobao) throw ConfigError("data", "sequential models need taobao data");
  auto in = open_input(spec.path);
  Rng rng(spec.seed);
  return read_taobao(in, spec.seq_len, spec.hash_sizes, rng);
}

}  // namespace maskrec
