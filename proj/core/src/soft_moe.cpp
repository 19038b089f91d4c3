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


#include "scadf/soft_moe.hpp"

#include <cmath>

#include "scadf/errors.hpp"

namespace scadf {

void SoftMoeConfig::validate() const {
  if (experts < 1) throw ConfigError("soft MoE needs at least one expert");
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("attention heads (" + std::to_string(heads) + ") must divide the width (" +
                      std::to_string(width) + ")");
  }
  if (hidden_mult < 1) throw ConfigError("expert hidden multiplier must be positive");
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width,
                                       std::size_t heads, Rng& rng)
    : query_(store, name + ".query", width, width, rng),
      key_(store, name + ".key", width, width, rng),
      value_(store, name + ".value", width, width, rng),
      output_(store, name + ".output", width, width, rng),
      heads_(heads),
      scale_(1.0 / std::sqrt(static_cast<double>(width / heads))) {}

Var MultiHeadAttention::operator()(const Var& x) const {
  // Head h owns columns [h * d_h, (h + 1) * d_h) of each projection.
  const Var q = query_(x);
  const Var k = key_(x);
  const Var v = value_(x);
  const std::size_t head_width = x.dim(-1) / heads_;
  std::vector<Var> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t lo = h * head_width;
    const std::size_t hi = lo + head_width;
    Var scores = diff::matmul(diff::slice(q, -1, lo, hi), diff::transpose(diff::slice(k, -1, lo, hi)));
    heads.push_back(diff::matmul(diff::softmax(diff::scale(scores, scale_), -1), diff::slice(v, -1, lo, hi)));
  }
  Var merged = heads.size() == 1 ? heads.front() : diff::concat(heads, -1);
  return output_(merged);
}

RoutingState route(const Var& tokens, const Var& router) {
  RoutingState state;
  state.logits = diff::matmul(tokens, router);
  state.dispatch = diff::softmax(state.logits, -2);
  state.combine = diff::softmax(state.logits, -1);
  return state;
}

Var mix_experts(const Var& tokens, const RoutingState& routing, std::span<const Expert> experts,
                const Var* task_embedding) {
  const std::size_t n = experts.size();
  if (routing.dispatch.dim(-1) != n) {
    throw DimensionError("router has " + std::to_string(routing.dispatch.dim(-1)) + " columns for " +
                         std::to_string(n) + " experts");
  }
  Var slots = diff::matmul(diff::transpose(routing.dispatch), tokens);  // [..., n, d]
  if (task_embedding) slots = diff::add(slots, *task_embedding);
  std::vector<Var> outputs;
  outputs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) outputs.push_back(experts[k](diff::slice(slots, -2, k, k + 1)));
  Var expert_out = n == 1 ? outputs.front() : diff::concat(outputs, -2);
  return diff::matmul(routing.combine, expert_out);
}

Var expert_layer(const Var& tokens, const RoutingState& routing, std::span<const Expert> experts) {
  return diff::add(tokens, mix_experts(tokens, routing, experts));
}

Var attend(const Var& x, const MultiHeadAttention& attention, const LayerNorm* norm) {
  return diff::add(x, attention(norm ? (*norm)(x) : x));
}

SoftMoeBlock::SoftMoeBlock(ParameterStore& store, const std::string& name, const SoftMoeConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  if (config_.pre_norm) norm_ = LayerNorm(store, name + ".norm", config_.width);
  attention_ = MultiHeadAttention(store, name + ".attention", config_.width, config_.heads, rng);
  router_ = &add_small(store, name + ".phi", {config_.width, config_.experts}, rng);
  for (std::size_t k = 0; k < config_.experts; ++k) {
    experts_.emplace_back(store, name + ".expert" + std::to_string(k), config_.width,
                          config_.hidden_mult * config_.width, rng);
  }
}

SoftMoeBlockOutput SoftMoeBlock::operator()(const Var& x) const {
  SoftMoeBlockOutput out;
  out.attended = attend(x, attention_, config_.pre_norm ? &norm_ : nullptr);
  out.routing = route(out.attended, diff::parameter(*router_));
  out.output = expert_layer(out.attended, out.routing, experts_);
  return out;
}

SoftMoeStack::SoftMoeStack(ParameterStore& store, const std::string& name, const SoftMoeConfig& config,
                           std::size_t depth, Rng& rng) {
  if (depth < 1) throw ConfigError("soft MoE stack needs at least one block");
  for (std::size_t i = 0; i < depth; ++i) blocks_.emplace_back(store, name + ".block" + std::to_string(i), config, rng);
}

SoftMoeStackOutput SoftMoeStack::operator()(const Var& x) const {
  SoftMoeStackOutput out;
  out.output = x;
  for (const auto& block : blocks_) {
    auto r = block(out.output);
    out.output = r.output;
    out.routing.push_back(std::move(r.routing));
  }
  return out;
}

}  // namespace scadf
