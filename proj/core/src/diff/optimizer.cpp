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


#include "scadf/diff/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "scadf/errors.hpp"

namespace scadf::diff {

double cosine_lr(double base_lr, std::size_t step, std::size_t horizon) {
  if (horizon == 0) return base_lr;
  if (step >= horizon) return 0.0;
  const double progress = static_cast<double>(step) / static_cast<double>(horizon);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const ParameterStore& store, AdamWConfig config) : config_(config) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    first_moment_.emplace_back(store[i].value.shape(), 0.0);
    second_moment_.emplace_back(store[i].value.shape(), 0.0);
  }
}

void AdamW::step(ParameterStore& store) {
  if (store.size() != first_moment_.size()) {
    throw ContractError("optimizer state was built for a different parameter store");
  }
  const double lr = current_lr();
  ++step_;
  const double t = static_cast<double>(step_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    if (p.grad.shape() != p.value.shape()) throw ContractError("missing gradient for " + p.name);
    if (p.frozen) continue;
    auto value = p.value.data();
    const auto grad = p.grad.data();
    auto m = first_moment_[i].data();
    auto v = second_moment_[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * grad[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      value[j] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * value[j]);
    }
  }
}

}  // namespace scadf::diff
