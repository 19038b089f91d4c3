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


#include "scadf/diff/var.hpp"

#include <unordered_set>

#include "scadf/errors.hpp"

namespace scadf::diff {

namespace detail {

Tensor& Node::grad_buffer() {
  if (!has_grad) {
    grad = Tensor(value.shape(), 0.0);
    has_grad = true;
  }
  return grad;
}

Tensor* Node::parent_grad(std::size_t i) {
  Node& p = *parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.grad_buffer();
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

}  // namespace detail

Tensor Var::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

Var constant(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var variable(Tensor value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var parameter(Parameter& p) {
  auto node = std::make_shared<detail::Node>();
  node->value = p.value;
  node->requires_grad = true;
  node->param = &p;
  return Var(std::move(node));
}

void backward(const Var& loss) {
  if (!loss.valid() || loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.valid() ? shape_str(loss.shape()) : std::string("<null>")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* child = node->parents[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    n->has_grad = false;
  }
  loss.node()->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->has_grad) continue;
    if (n->backward_fn) n->backward_fn(*n);
    if (n->param != nullptr) {
      if (n->param->grad.shape() != n->param->value.shape()) n->param->grad = Tensor(n->param->value.shape(), 0.0);
      auto dst = n->param->grad.data();
      auto src = n->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

}  // namespace scadf::diff
