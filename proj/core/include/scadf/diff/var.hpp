// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "scadf/diff/parameters.hpp"
#include "scadf/diff/tensor.hpp"

namespace scadf::diff {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  Parameter* param = nullptr;

  Tensor& grad_buffer();
  /// Gradient slot of parent `i`, or nullptr when that parent needs no gradient.
  Tensor* parent_grad(std::size_t i);
  const Tensor& parent_value(std::size_t i) const { return parents[i]->value; }
};

}  // namespace detail

/// Handle to a value in a dynamically recorded computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(int axis) const { return node_->value.dim(axis); }
  double item() const { return node_->value.item(); }
  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient after backward(); zero-filled when the node was not reached.
  Tensor grad() const;
  bool valid() const noexcept { return static_cast<bool>(node_); }

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

Var constant(Tensor value);
/// Free leaf that records a gradient but is not tied to a parameter.
Var variable(Tensor value);
/// Leaf reading `p.value`; backward accumulates into `p.grad`.
Var parameter(Parameter& p);

/// Reverse sweep from a scalar loss. Parameter gradients are accumulated (+=).
void backward(const Var& loss);

namespace detail {
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);
}

}  // namespace scadf::diff
