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


#include "scadf/layers.hpp"

#include <cmath>

namespace scadf {

Parameter& add_weight(ParameterStore& store, const std::string& name, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
  return store.add(name, diff::normal_tensor({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
}

Parameter& add_small(ParameterStore& store, const std::string& name, Shape shape, Rng& rng) {
  return store.add(name, diff::normal_tensor(std::move(shape), kSmallInitStd, rng));
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
               bool bias)
    : weight_(&add_weight(store, name + ".weight", in, out, rng)),
      bias_(bias ? &add_small(store, name + ".bias", {out}, rng) : nullptr) {}

Var Linear::operator()(const Var& x) const {
  Var y = diff::matmul(x, diff::parameter(*weight_));
  if (bias_) y = diff::add(y, diff::parameter(*bias_));
  return y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width, double eps)
    : gain_(&store.add(name + ".gain", Tensor({width}, 1.0))),
      shift_(&store.add(name + ".shift", Tensor({width}, 0.0))),
      eps_(eps) {}

Var LayerNorm::operator()(const Var& x) const {
  Var y = diff::layer_normalize(x, -1, eps_);
  return diff::add(diff::mul(y, diff::parameter(*gain_)), diff::parameter(*shift_));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, std::size_t width, std::size_t hidden, Rng& rng)
    : in_(store, name + ".in", width, hidden, rng), out_(store, name + ".out", hidden, width, rng) {}

Var Mlp::operator()(const Var& x) const { return out_(diff::gelu(in_(x))); }

}  // namespace scadf
