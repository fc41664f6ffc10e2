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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskrec/data.hpp"
#include "maskrec/errors.hpp"
#include "maskrec/model.hpp"

namespace maskrec {

// Probabilities are clamped to [kProbEps, 1 - kProbEps] inside the loss.
inline constexpr double kProbEps = 1e-7;
inline constexpr double kAdagradEps = 1e-10;

// -(1/B) sum_i [y ln p + (1 - y) ln(1 - p)], shape {1}.
Tensor bce_loss(Tape& tape, const Tensor& p, std::span<const double> y);
// Same value without a tape.
double bce_value(std::span<const double> p, std::span<const double> y);

enum class OptimizerKind { sgd, adagrad };

OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);

// theta -= lr * g, then g = 0.
void sgd_step(std::span<const NamedTensor> params, double lr);

// Squared-gradient accumulators, one per parameter tensor in order.
struct OptState {
  std::vector<std::vector<double>> accumulators;
};

// a += g^2; theta -= lr * g / (sqrt(a) + 1e-10); then g = 0. Accumulators are
// created on first use.
void adagrad_step(std::span<const NamedTensor> params, OptState& state, double lr);

// Mann-Whitney statistic with midrank ties. Throws MetricUndefinedError
// unless both classes are present.
double auc(std::span<const double> scores, std::span<const double> labels);

// Fraction of rows where (p >= threshold) equals the label.
double accuracy(std::span<const double> p, std::span<const double> y, double threshold = 0.5);

struct MetricsReport {
  std::size_t iteration = 0;
  double bce = 0.0;
  double accuracy = 0.0;
  std::optional<double> auc;  // empty when the evaluated labels hold one class
  std::int64_t wall_ms = 0;
};

// `iter=<n> bce=<x> acc=<x> auc=<x> wall_ms=<n>`; undefined AUC prints "nan".
std::string format_metrics_line(const MetricsReport& report);
inline constexpr std::string_view kMetricsCsvHeader = "iter,bce,acc,auc,wall_ms";
std::string format_metrics_csv_row(const MetricsReport& report);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adagrad;
  double lr = 0.05;
  std::size_t batch_size = 128;
  std::size_t max_iters = 1000;
  std::optional<double> target_auc;
  std::size_t eval_every = 100;  // 0: evaluate only after the last iteration
  std::uint64_t seed = 0;

  void validate() const;
};

// Raised when a loss or parameter becomes non-finite.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(std::size_t last_good_iteration, const std::string& message)
      : NumericError(message + " (last good iteration " + std::to_string(last_good_iteration) + ")"),
        last_good_iteration_(last_good_iteration) {}

  std::size_t last_good_iteration() const noexcept { return last_good_iteration_; }

 private:
  std::size_t last_good_iteration_;
};

struct TrainResult {
  std::vector<MetricsReport> history;
  std::size_t iterations = 0;
  bool reached_target = false;
};

using EvalCallback = std::function<void(const MetricsReport&)>;

// Minibatch loop: forward, BCE, backward, optimizer step. Evaluates on
// `eval_set` every eval_every iterations and after the last one, stopping
// early once eval AUC >= target_auc. Parameters are updated in place.
TrainResult train(CtrModel& model, const std::vector<Record>& train_set, const std::vector<Record>& eval_set,
                  const TrainConfig& cfg, const EvalCallback& on_eval = {});
TrainResult train(SequentialModel& model, const std::vector<SequenceRecord>& train_set,
                  const std::vector<SequenceRecord>& eval_set, const TrainConfig& cfg,
                  const EvalCallback& on_eval = {});

// Eval-mode pass; metrics pooled over every record. wall_ms is 0.
MetricsReport evaluate(const CtrModel& model, const std::vector<Record>& records, std::size_t batch_size = 1024);
MetricsReport evaluate(const SequentialModel& model, const std::vector<SequenceRecord>& records,
                       std::size_t batch_size = 1024);

}  // namespace maskrec
