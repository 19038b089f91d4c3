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

#include <span>
#include <vector>

#include "scadf/layers.hpp"

namespace scadf {

struct SoftMoeConfig {
  std::size_t width = 32;
  std::size_t experts = 4;
  std::size_t heads = 4;
  std::size_t hidden_mult = 4;
  /// Layer-normalize the block input before attention.
  bool pre_norm = true;

  void validate() const;
};

/// Multi-head scaled dot-product self-attention without masking. Each of the
/// query/key/value projections is d -> d, split column-wise into h heads.
/// Returns MSA(x) only; callers add the residual.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads, Rng& rng);
  /// x: [..., M, d]
  Var operator()(const Var& x) const;

 private:
  Linear query_;
  Linear key_;
  Linear value_;
  Linear output_;
  std::size_t heads_ = 1;
  double scale_ = 1.0;
};

/// Token/expert routing for one router. Logits are U Phi; dispatch is the
/// softmax over tokens (each column sums to 1), combine the softmax over
/// experts (each row sums to 1).
struct RoutingState {
  Var logits;    ///< [..., M, n]
  Var dispatch;  ///< [..., M, n]
  Var combine;   ///< [..., M, n]
};

RoutingState route(const Var& tokens, const Var& router);

/// Expert MLP d -> hidden_mult * d -> d with GELU.
using Expert = Mlp;

/// Y = C [f_k((D^T U)_k + te)]_k. `task_embedding` may be null.
Var mix_experts(const Var& tokens, const RoutingState& routing, std::span<const Expert> experts,
                const Var* task_embedding = nullptr);

/// Z = U + Y.
Var expert_layer(const Var& tokens, const RoutingState& routing, std::span<const Expert> experts);

struct SoftMoeBlockOutput {
  Var attended;  ///< U = X + MSA(X)
  Var output;    ///< Z = U + Y
  RoutingState routing;
};

class SoftMoeBlock {
 public:
  SoftMoeBlock(ParameterStore& store, const std::string& name, const SoftMoeConfig& config, Rng& rng);
  /// x: [B, M, d]
  SoftMoeBlockOutput operator()(const Var& x) const;

  const SoftMoeConfig& config() const { return config_; }
  Parameter& router() const { return *router_; }

 private:
  SoftMoeConfig config_;
  LayerNorm norm_;
  MultiHeadAttention attention_;
  Parameter* router_;
  std::vector<Expert> experts_;
};

/// U = X + MSA(LN(X)) when pre-norm is on, X + MSA(X) otherwise.
Var attend(const Var& x, const MultiHeadAttention& attention, const LayerNorm* norm);

struct SoftMoeStackOutput {
  Var output;
  std::vector<RoutingState> routing;
};

class SoftMoeStack {
 public:
  SoftMoeStack(ParameterStore& store, const std::string& name, const SoftMoeConfig& config, std::size_t depth,
               Rng& rng);
  SoftMoeStackOutput operator()(const Var& x) const;
  std::size_t depth() const { return blocks_.size(); }
  const SoftMoeBlock& block(std::size_t i) const { return blocks_[i]; }

 private:
  std::vector<SoftMoeBlock> blocks_;
};

}  // namespace scadf
