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

#include "maskrec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "maskrec/errors.hpp"
#include "maskrec/rng.hpp"

namespace maskrec {

namespace {

using Matrix = std::vector<std::vector<double>>;

std::vector<double> mat_vec(const Matrix& a, const std::vector<double>& v) {
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += a[i][j] * v[j];
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
  return n;
}

void fix_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) {
    for (double& x : v) x = -x;
  }
}

}  // namespace

PcaResult pca(const std::vector<std::vector<double>>& rows, std::size_t k, const PowerIterationOptions& options) {
  if (rows.size() < 3) throw ContractError("PCA needs at least 3 vectors, got " + std::to_string(rows.size()));
  const std::size_t n = rows.size(), d = rows.front().size();
  if (d == 0) throw ContractError("PCA over zero-width vectors");
  for (const auto& r : rows) {
    if (r.size() != d) throw ContractError("PCA input rows differ in width");
  }
  if (k == 0 || k > d) throw ContractError("PCA component count must lie in [1, " + std::to_string(d) + "]");

  PcaResult out;
  out.mean.assign(d, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += r[j];
  }
  for (double& m : out.mean) m /= static_cast<double>(n);
  Matrix centered(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[i][j] = rows[i][j] - out.mean[j];
  }
  Matrix cov(d, std::vector<double>(d, 0.0));
  for (const auto& r : centered) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov[a][b] += r[a] * r[b];
    }
  }
  for (auto& row : cov) {
    for (double& x : row) x /= static_cast<double>(n - 1);
  }
  for (std::size_t a = 0; a < d; ++a) out.total_variance += cov[a][a];

  // Fixed-seed start vectors keep the export reproducible.
  Rng rng(0x9ca);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    normalize(v);
    double lambda = 0.0;
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
      std::vector<double> next = mat_vec(cov, v);
      lambda = normalize(next);
      if (lambda == 0.0) break;  // remaining spectrum is zero; any unit vector works
      double delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) delta = std::max(delta, std::abs(next[j] - v[j]));
      v = std::move(next);
      if (delta < options.tolerance) break;
    }
    lambda = dot(v, mat_vec(cov, v));
    fix_sign(v);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov[a][b] -= lambda * v[a] * v[b];
    }
    out.components.push_back(std::move(v));
    out.explained_variance.push_back(lambda);
  }

  out.projections.assign(n, std::vector<double>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) out.projections[i][c] = dot(centered[i], out.components[c]);
  }
  return out;
}

std::vector<std::string> feature_labels(std::size_t n_sparse) {
  std::vector<std::string> out{"dense"};
  for (std::size_t i = 1; i <= n_sparse; ++i) out.push_back("C" + std::to_string(i));
  return out;
}

namespace {

using nlohmann::json;

json matrix_json(const std::vector<double>& m, std::size_t n, const std::set<IndexPair>* zeros) {
  json rows = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < n; ++j) {
      if (zeros != nullptr && zeros->contains({i, j})) {
        row.push_back(0);
      } else {
        row.push_back(m[i * n + j]);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<double> matrix_from_json(const json& j, std::size_t n, const char* key) {
  if (!j.is_array() || j.size() != n) throw FormatError(std::string(key) + " must have " + std::to_string(n) + " rows");
  std::vector<double> out;
  out.reserve(n * n);
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != n) {
      throw FormatError(std::string(key) + " rows must have " + std::to_string(n) + " entries");
    }
    for (const auto& v : row) {
      if (!v.is_number()) throw FormatError(std::string(key) + " entries must be numbers");
      out.push_back(v.get<double>());
    }
  }
  return out;
}

}  // namespace

std::string serialize_attention_dump(const AttentionDump& dump) {
  json heads = json::array();
  for (const HeadTrace& h : dump.heads) {
    const std::set<IndexPair> masked(h.masked_pairs.begin(), h.masked_pairs.end());
    json pairs = json::array();
    for (const auto& [r, c] : h.masked_pairs) pairs.push_back({r, c});
    heads.push_back(json{{"layer", h.layer},
                         {"head", h.head},
                         {"theta", h.theta},
                         {"alpha_raw", matrix_json(h.alpha_raw, h.seq_len, nullptr)},
                         {"alpha_masked", matrix_json(h.alpha_masked, h.seq_len, &masked)},
                         {"masked_pairs", std::move(pairs)}});
  }
  return json{{"feature_labels", dump.feature_labels}, {"heads", std::move(heads)}}.dump(1) + "\n";
}

AttentionDump parse_attention_dump(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("attention dump is not well-formed: ") + e.what());
  }
  AttentionDump out;
  try {
    out.feature_labels = j.at("feature_labels").get<std::vector<std::string>>();
    const std::size_t n = out.feature_labels.size();
    for (const auto& h : j.at("heads")) {
      HeadTrace t;
      t.layer = h.at("layer").get<std::size_t>();
      t.head = h.at("head").get<std::size_t>();
      t.theta = h.at("theta").get<double>();
      t.seq_len = n;
      t.alpha_raw = matrix_from_json(h.at("alpha_raw"), n, "alpha_raw");
      t.alpha_masked = matrix_from_json(h.at("alpha_masked"), n, "alpha_masked");
      for (const auto& p : h.at("masked_pairs")) {
        const auto pair = p.get<std::vector<std::size_t>>();
        if (pair.size() != 2 || pair[0] >= n || pair[1] >= n) throw FormatError("masked_pairs entries must be [row, col]");
        t.masked_pairs.emplace_back(pair[0], pair[1]);
      }
      out.heads.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("attention dump violates its schema: ") + e.what());
  }
  return out;
}

}  // namespace maskrec
