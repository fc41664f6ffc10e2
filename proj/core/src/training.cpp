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

#include "maskrec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "maskrec/errors.hpp"

namespace maskrec {

namespace {

void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " predictions vs " + std::to_string(b) +
                         " labels");
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

bool is_positive(double y) {
  if (y == 1.0) return true;
  if (y == 0.0) return false;
  throw ContractError("labels must be 0 or 1");
}

}  // namespace

double bce_value(std::span<const double> p, std::span<const double> y) {
  check_same_length(p.size(), y.size(), "bce");
  if (p.empty()) throw DimensionError("bce over an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_prob(p[i]);
    total += is_positive(y[i]) ? std::log(q) : std::log(1.0 - q);
  }
  return -total / static_cast<double>(p.size());
}

Tensor bce_loss(Tape& tape, const Tensor& p, std::span<const double> y) {
  if (p.rank() != 1) throw DimensionError("bce_loss expects probabilities [B], got " + shape_to_string(p.shape()));
  check_same_length(p.numel(), y.size(), "bce_loss");
  std::vector<double> labels(y.begin(), y.end());
  const double value = bce_value(p.data(), labels);
  return tape.record("bce", {p}, {1}, {value}, [p, labels](const Tensor& out) {
    return [p, labels, out]() mutable {
      auto gp = p.mutable_grad();
      auto pd = p.data();
      const double g = out.grad()[0] / static_cast<double>(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        // The clamp is flat outside its range, so clamped entries get no gradient.
        if (pd[i] < kProbEps || pd[i] > 1.0 - kProbEps) continue;
        gp[i] += -g * (labels[i] / pd[i] - (1.0 - labels[i]) / (1.0 - pd[i]));
      }
    };
  });
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adagrad") return OptimizerKind::adagrad;
  throw ConfigError("optimizer", "expected sgd or adagrad, got '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adagrad"; }

void sgd_step(std::span<const NamedTensor> params, double lr) {
  for (const auto& [name, t] : params) {
    auto theta = t.mutable_data();
    auto g = t.mutable_grad();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
    t.zero_grad();
  }
}

void adagrad_step(std::span<const NamedTensor> params, OptState& state, double lr) {
  if (state.accumulators.empty()) {
    for (const auto& [name, t] : params) state.accumulators.emplace_back(t.numel(), 0.0);
  }
  if (state.accumulators.size() != params.size()) throw ContractError("optimizer state does not match parameters");
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& t = params[p].tensor;
    auto& acc = state.accumulators[p];
    if (acc.size() != t.numel()) throw ContractError("optimizer state for '" + params[p].name + "' has the wrong size");
    auto theta = t.mutable_data();
    auto g = t.mutable_grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (g[i] == 0.0) continue;
      acc[i] += g[i] * g[i];
      theta[i] -= lr * g[i] / (std::sqrt(acc[i]) + kAdagradEps);
    }
    t.zero_grad();
  }
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  check_same_length(scores.size(), labels.size(), "auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups in ascending score order. A positive beats every negative
  // below its group and shares half credit with negatives inside it, which
  // is the midrank form of the Mann-Whitney U statistic.
  double wins = 0.0, ties = 0.0;
  std::size_t neg_below = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, pos = 0, neg = 0;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) {
      if (is_positive(labels[order[j]])) {
        ++pos;
      } else {
        ++neg;
      }
    }
    wins += static_cast<double>(pos) * static_cast<double>(neg_below);
    ties += static_cast<double>(pos) * static_cast<double>(neg);
    neg_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw MetricUndefinedError("AUC needs both positive and negative labels");
  return (wins + 0.5 * ties) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double accuracy(std::span<const double> p, std::span<const double> y, double threshold) {
  check_same_length(p.size(), y.size(), "accuracy");
  if (p.empty()) throw DimensionError("accuracy over an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hits += (p[i] >= threshold) == is_positive(y[i]);
  return static_cast<double>(hits) / static_cast<double>(p.size());
}

namespace {

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.8f", v);
  return buf;
}

std::string fmt_auc(const std::optional<double>& v) { return v ? fmt_real(*v) : "nan"; }

}  // namespace

std::string format_metrics_line(const MetricsReport& r) {
  return "iter=" + std::to_string(r.iteration) + " bce=" + fmt_real(r.bce) + " acc=" + fmt_real(r.accuracy) +
         " auc=" + fmt_auc(r.auc) + " wall_ms=" + std::to_string(r.wall_ms);
}

std::string format_metrics_csv_row(const MetricsReport& r) {
  return std::to_string(r.iteration) + "," + fmt_real(r.bce) + "," + fmt_real(r.accuracy) + "," + fmt_auc(r.auc) +
         "," + std::to_string(r.wall_ms);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive");
  if (batch_size == 0) throw ConfigError("batch_size", "must be positive");
  if (target_auc && !(*target_auc >= 0.0 && *target_auc <= 1.0)) {
    throw ConfigError("target_auc", "must lie in [0, 1]");
  }
}

namespace {

Batch to_batch(const std::vector<Record>& records, const std::vector<std::size_t>& rows) {
  std::vector<const Record*> ptrs;
  for (std::size_t i : rows) ptrs.push_back(&records[i]);
  return make_batch(ptrs);
}

SequenceBatch to_batch(const std::vector<SequenceRecord>& records, const std::vector<std::size_t>& rows) {
  std::vector<const SequenceRecord*> ptrs;
  for (std::size_t i : rows) ptrs.push_back(&records[i]);
  return make_sequence_batch(ptrs);
}

template <typename Model, typename RecordT>
MetricsReport evaluate_impl(const Model& model, const std::vector<RecordT>& records, std::size_t batch_size) {
  if (records.empty()) throw ContractError("evaluate needs at least one record");
  Rng unused(0);
  std::vector<double> probs, labels;
  probs.reserve(records.size());
  labels.reserve(records.size());
  for (const auto& rows : batch_indices(records.size(), batch_size, unused, false)) {
    const auto batch = to_batch(records, rows);
    Tape tape(Tape::Mode::inference);
    const Tensor p = model.forward(tape, batch, Phase::eval, unused);
    auto pd = p.data();
    probs.insert(probs.end(), pd.begin(), pd.end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
  }
  MetricsReport r;
  r.bce = bce_value(probs, labels);
  r.accuracy = accuracy(probs, labels);
  try {
    r.auc = auc(probs, labels);
  } catch (const MetricUndefinedError&) {
    r.auc.reset();
  }
  return r;
}

bool all_finite(const std::vector<NamedTensor>& params) {
  for (const auto& [name, t] : params) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

template <typename Model, typename RecordT>
TrainResult train_impl(Model& model, const std::vector<RecordT>& train_set, const std::vector<RecordT>& eval_set,
                       const TrainConfig& cfg, const EvalCallback& on_eval) {
  cfg.validate();
  TrainResult result;
  if (cfg.max_iters == 0) return result;
  if (train_set.empty()) throw ContractError("training set is empty");
  if (eval_set.empty()) throw ContractError("evaluation set is empty");

  const auto start = std::chrono::steady_clock::now();
  Rng root(cfg.seed);
  Rng data_rng = root.split();
  Rng dropout_rng = root.split();
  const auto params = model.parameters();
  OptState state;

  std::vector<std::vector<std::size_t>> epoch;
  std::size_t cursor = 0;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    if (cursor == epoch.size()) {
      epoch = batch_indices(train_set.size(), cfg.batch_size, data_rng, true);
      cursor = 0;
    }
    const auto batch = to_batch(train_set, epoch[cursor++]);
    try {
      Tape tape;
      const Tensor p = model.forward(tape, batch, Phase::train, dropout_rng);
      const Tensor loss = bce_loss(tape, p, batch.labels);
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw TrainingAborted(it - 1, std::string("iteration ") + std::to_string(it) + ": " + e.what());
    }
    if (cfg.optimizer == OptimizerKind::sgd) {
      sgd_step(params, cfg.lr);
    } else {
      adagrad_step(params, state, cfg.lr);
    }
    if (!all_finite(params)) {
      throw TrainingAborted(it - 1, "iteration " + std::to_string(it) + ": parameter update produced non-finite values");
    }
    result.iterations = it;

    const bool due = (cfg.eval_every > 0 && it % cfg.eval_every == 0) || it == cfg.max_iters;
    if (!due) continue;
    MetricsReport report = evaluate_impl(model, eval_set, std::max<std::size_t>(cfg.batch_size, 1024));
    report.iteration = it;
    report.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(report);
    if (on_eval) on_eval(report);
    if (cfg.target_auc && report.auc && *report.auc >= *cfg.target_auc) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

}  // namespace

TrainResult train(CtrModel& model, const std::vector<Record>& train_set, const std::vector<Record>& eval_set,
                  const TrainConfig& cfg, const EvalCallback& on_eval) {
  return train_impl(model, train_set, eval_set, cfg, on_eval);
}

TrainResult train(SequentialModel& model, const std::vector<SequenceRecord>& train_set,
                  const std::vector<SequenceRecord>& eval_set, const TrainConfig& cfg, const EvalCallback& on_eval) {
  return train_impl(model, train_set, eval_set, cfg, on_eval);
}

MetricsReport evaluate(const CtrModel& model, const std::vector<Record>& records, std::size_t batch_size) {
  return evaluate_impl(model, records, batch_size);
}

MetricsReport evaluate(const SequentialModel& model, const std::vector<SequenceRecord>& records,
                       std::size_t batch_size) {
  return evaluate_impl(model, records, batch_size);
}

}  // namespace maskrec
