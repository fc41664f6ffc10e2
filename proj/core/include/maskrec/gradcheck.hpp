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

#include <functional>
#include <string>
#include <vector>

#include "maskrec/tensor.hpp"

namespace maskrec {

// Central-difference gradient of a scalar function at x:
// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate i.
// x is perturbed in place and restored; f must be deterministic.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, Tensor x, double h = 1e-5);

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

struct TensorGradCheck {
  std::string name;
  std::size_t size = 0;
  double worst_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<TensorGradCheck> tensors;

  double worst() const;
  // True when every tensor's worst relative error is strictly below tol.
  bool passed(double tol) const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Compares analytic gradients against finite differences for every named
// parameter. `loss` builds the scalar loss on the supplied tape; it is called
// once with a recording tape for the analytic pass and then repeatedly with
// inference tapes for the perturbed evaluations.
GradCheckReport check_gradients(const std::vector<NamedTensor>& params,
                                const std::function<Tensor(Tape&)>& loss, double h = 1e-5);

}  // namespace maskrec
