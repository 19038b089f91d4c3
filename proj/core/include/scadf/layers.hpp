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

#include <string>

#include "scadf/diff/ops.hpp"
#include "scadf/diff/parameters.hpp"

namespace scadf {

using diff::Parameter;
using diff::ParameterStore;
using diff::Rng;
using diff::Shape;
using diff::Tensor;
using diff::Var;

/// Initialization shared by every layer: weights ~ N(0, 1/sqrt(fan_in)),
/// biases, routers and embeddings ~ N(0, 0.02).
inline constexpr double kSmallInitStd = 0.02;

Parameter& add_weight(ParameterStore& store, const std::string& name, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng);
Parameter& add_small(ParameterStore& store, const std::string& name, Shape shape, Rng& rng);

/// y = x W + b over the last axis.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool bias = true);
  Var operator()(const Var& x) const;

  Parameter& weight() const { return *weight_; }
  Parameter* bias() const { return bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

/// Layer normalization over the last axis with learned gain (init 1) and shift (init 0).
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width, double eps = 1e-5);
  Var operator()(const Var& x) const;

 private:
  Parameter* gain_ = nullptr;
  Parameter* shift_ = nullptr;
  double eps_ = 1e-5;
};

/// Two-layer GELU MLP: width -> hidden -> width.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, std::size_t width, std::size_t hidden, Rng& rng);
  Var operator()(const Var& x) const;

 private:
  Linear in_;
  Linear out_;
};

}  // namespace scadf
