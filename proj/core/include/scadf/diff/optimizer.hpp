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

#include <cstddef>
#include <vector>

#include "scadf/diff/parameters.hpp"

namespace scadf::diff {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;
  /// Cosine decay horizon in steps; 0 disables decay.
  std::size_t horizon = 0;
};

/// lr * (1 + cos(pi * t / T)) / 2, clamped to 0 past the horizon.
double cosine_lr(double base_lr, std::size_t step, std::size_t horizon);

/// Adam with decoupled weight decay and cosine learning-rate decay.
class AdamW {
 public:
  AdamW(const ParameterStore& store, AdamWConfig config);

  /// Applies one update from the gradients currently held by `store`.
  void step(ParameterStore& store);

  std::size_t step_count() const noexcept { return step_; }
  double current_lr() const { return cosine_lr(config_.lr, step_, config_.horizon); }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  AdamWConfig config_;
  std::size_t step_ = 0;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
};

}  // namespace scadf::diff
