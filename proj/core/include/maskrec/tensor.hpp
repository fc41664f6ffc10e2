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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maskrec {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tape;

// Dense row-major array of doubles. A Tensor is a handle: copies share
// storage, matching the way parameters are referenced from the gradient tape.
// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  // Scalar tensors have shape {1}.
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Handle semantics: mutation goes through shared storage, so these are const.
  std::span<double> mutable_data() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double item() const;

  bool requires_grad() const;
  // Empty span when the tensor does not track gradients.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  // Set only for tensors produced by a recorded tape operation.
  std::optional<std::size_t> node_id() const;

  Tensor clone() const;
  // Same storage identity (not value equality).
  bool same_as(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  friend class Tape;

  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::optional<std::size_t> node_id;
    const Tape* tape = nullptr;
  };

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<Impl> impl_;
};

// Append-only record of differentiable operations for one forward pass.
// Operations whose inputs do not require gradients are not recorded, and an
// inference tape records nothing at all.
class Tape {
 public:
  using BackwardFn = std::function<void()>;
  enum class Mode { record, inference };

  explicit Tape(Mode mode = Mode::record) : recording_(mode == Mode::record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Creates the output tensor of operation `op` over `inputs`. Non-finite
  // output data raises NumericError naming `op`. When any input requires
  // gradients (and the tape records), the output gets a grad buffer and
  // `make_backward(output)` is stored; otherwise the factory is never called.
  // The backward closure reads output.grad() and accumulates into input grads.
  Tensor record(std::string_view op, const std::vector<Tensor>& inputs, Shape shape,
                std::vector<double> data,
                const std::function<BackwardFn(const Tensor& output)>& make_backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded node up to the loss
  // once, in reverse insertion order. Leaf gradients accumulate across calls;
  // intermediate gradients are reset first.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool recording_;
};

}  // namespace maskrec
