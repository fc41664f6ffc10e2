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

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "maskrec/rng.hpp"
#include "maskrec/tensor.hpp"

namespace maskrec {

// Train enables dropout; eval is deterministic.
enum class Phase { train, eval };

enum class Activation { relu, gelu };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

namespace kernels {

// Numerically stable softmax of one row, in place (max subtraction).
void softmax_inplace(std::span<double> row);

// Tanh-approximated GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

}  // namespace kernels

// Differentiable primitives. All shapes are exact: there is no broadcasting.
// Every op records onto `tape` when an input requires gradients.
namespace ops {

// [m x k] * [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// Batched: [b x m x k] * [b x k x n] -> [b x m x n]
Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b);
// Swaps the two trailing axes of a rank-2 or rank-3 tensor.
Tensor transpose_last2(Tape& tape, const Tensor& x);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
// x[... x n] + bias[n], bias repeated over every leading index.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
// x[m x k] * w[k x n] + bias[n]
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor relu(Tape& tape, const Tensor& x);
Tensor gelu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor activate(Tape& tape, const Tensor& x, Activation a);
// Gradient passes only where lo < x < hi.
Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi);

// Concatenates along the last axis; leading extents must agree.
Tensor concat_last_axis(Tape& tape, const std::vector<Tensor>& parts);

// Softmax over the last axis.
Tensor softmax_row(Tape& tape, const Tensor& x);

// Normalizes each last-axis slice to zero mean / unit population variance,
// then applies gamma and beta.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Rows idx[b] of table [M x D] -> [B x D]. Backward scatter-adds.
Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::int64_t> idx);

// Inverted dropout; identity in eval phase or when p == 0.
Tensor dropout(Tape& tape, const Tensor& x, double p, Phase phase, Rng& rng);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

}  // namespace ops
}  // namespace maskrec
