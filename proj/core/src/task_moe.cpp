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


#include "scadf/task_moe.hpp"

#include "scadf/errors.hpp"

namespace scadf {

Var pool_tokens(const Var& tokens, const LayerNorm& norm) { return diff::mean(norm(tokens), -2); }

TaskMoe::TaskMoe(ParameterStore& store, const std::string& name, const TaskMoeConfig& config, Rng& rng)
    : config_(config) {
  config_.block.validate();
  if (config_.tasks < 1) throw ConfigError("task MoE needs at least one task");
  const std::size_t d = config_.block.width;
  const std::size_t n = config_.block.experts;
  if (config_.block.pre_norm) norm_ = LayerNorm(store, name + ".norm", d);
  attention_ = MultiHeadAttention(store, name + ".attention", d, config_.block.heads, rng);
  routers_ = &add_small(store, name + ".phi_task", {d, n, config_.tasks}, rng);
  for (std::size_t j = 0; j < n; ++j) {
    experts_.emplace_back(store, name + ".expert" + std::to_string(j), d, config_.block.hidden_mult * d, rng);
  }
  for (std::size_t k = 0; k < config_.tasks; ++k) {
    embeddings_.push_back(&add_small(store, name + ".task_embedding" + std::to_string(k), {d}, rng));
  }
  output_norm_ = LayerNorm(store, name + ".output_norm", d);
  for (std::size_t k = 0; k < config_.tasks; ++k) {
    heads_.emplace_back(store, name + ".head" + std::to_string(k), d, 2, rng);
  }
}

TaskOutputs TaskMoe::operator()(const Var& z) const {
  if (z.shape().size() != 3 || z.dim(-1) != config_.block.width) {
    throw DimensionError("task MoE expects [B, M, " + std::to_string(config_.block.width) + "], got " +
                         diff::shape_str(z.shape()));
  }
  const std::size_t d = config_.block.width;
  const std::size_t n = config_.block.experts;
  const std::size_t batch = z.dim(0);
  TaskOutputs out;
  out.attended = attend(z, attention_, config_.block.pre_norm ? &norm_ : nullptr);
  const Var routers = diff::parameter(*routers_);
  std::vector<Var> predictions;
  for (std::size_t k = 0; k < config_.tasks; ++k) {
    Var router = diff::reshape(diff::slice(routers, 2, k, k + 1), {d, n});
    RoutingState routing = route(out.attended, router);
    const Var embedding = diff::parameter(*embeddings_[k]);
    Var combined = mix_experts(out.attended, routing, experts_, &embedding);
    Var residual = diff::add(out.attended, combined);
    Var pooled = pool_tokens(residual, output_norm_);
    predictions.push_back(diff::reshape(heads_[k](pooled), {batch, 1, 2}));
    out.combined.push_back(std::move(combined));
    out.residual.push_back(std::move(residual));
    out.pooled.push_back(std::move(pooled));
    out.routing.push_back(std::move(routing));
  }
  out.predictions = predictions.size() == 1 ? predictions.front() : diff::concat(predictions, 1);
  return out;
}

Var coord_loss(const Var& predictions, const Tensor& targets) {
  if (predictions.shape() != targets.shape() || predictions.shape().size() != 3 || predictions.dim(-1) != 2) {
    throw DimensionError("coordinate loss: predictions " + diff::shape_str(predictions.shape()) + " vs targets " +
                         diff::shape_str(targets.shape()));
  }
  Var residual = diff::sub(predictions, diff::constant(targets));
  Var squared = diff::sum(diff::mul(residual, residual), -1);  // [B, K]
  return diff::mean_all(squared);
}

}  // namespace scadf
