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

#include "maskrec/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "maskrec/errors.hpp"

namespace maskrec {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, Tensor x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  std::vector<double> out(x.numel());
  auto xd = x.mutable_data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double orig = xd[i];
    xd[i] = orig + h;
    const double up = f(x);
    xd[i] = orig - h;
    const double down = f(x);
    xd[i] = orig;
    out[i] = (up - down) / (2.0 * h);
  }
  return Tensor::from(x.shape(), std::move(out));
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& t : tensors) w = std::max(w, t.worst_relative_error);
  return w;
}

bool GradCheckReport::passed(double tol) const {
  return std::all_of(tensors.begin(), tensors.end(),
                     [tol](const TensorGradCheck& t) { return t.worst_relative_error < tol; });
}

GradCheckReport check_gradients(const std::vector<NamedTensor>& params, const std::function<Tensor(Tape&)>& loss,
                                double h) {
  for (auto p : params) p.tensor.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }

  auto evaluate = [&loss](const Tensor&) {
    Tape tape(Tape::Mode::inference);
    return loss(tape).item();
  };

  GradCheckReport report;
  for (const auto& p : params) {
    Tensor numeric = finite_diff_grad(evaluate, p.tensor, h);
    auto analytic = p.tensor.grad();
    TensorGradCheck entry{p.name, analytic.size()};
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double err = relative_error(analytic[i], numeric[i]);
      if (err > entry.worst_relative_error || i == 0) {
        entry.worst_relative_error = err;
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric[i];
      }
    }
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

}  // namespace maskrec
