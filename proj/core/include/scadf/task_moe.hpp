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

#include <vector>

#include "scadf/soft_moe.hpp"

namespace scadf {

struct TaskMoeConfig {
  SoftMoeConfig block;
  /// K = s + 1: one task per vertex plus the centroid.
  std::size_t tasks = 6;
};

struct TaskOutputs {
  Var attended;                     ///< U = Z + MSA(Z), shared by every task
  std::vector<Var> combined;        ///< Y^k [B, M, d]
  std::vector<Var> residual;        ///< H^k = U + Y^k
  std::vector<Var> pooled;          ///< token mean of LN(H^k), [B, d]
  std::vector<RoutingState> routing;
  Var predictions;                  ///< [B, K, 2]; head k = K - 1 is the centroid
};

/// Layer norm over features followed by the token mean: [B, M, d] -> [B, d].
Var pool_tokens(const Var& tokens, const LayerNorm& norm);

/// Modality-task MoE: one attention pass, then per task k a router slice
/// Phi_task[:, :, k], a task embedding added to the dispatched expert inputs,
/// the n shared experts, the task's combine weights, residual, normalization,
/// pooling and a linear 2-D head.
class TaskMoe {
 public:
  TaskMoe(ParameterStore& store, const std::string& name, const TaskMoeConfig& config, Rng& rng);

  /// z: [B, M, d]. Heads emit raw (unscaled) coordinates.
  TaskOutputs operator()(const Var& z) const;

  std::size_t tasks() const { return config_.tasks; }
  const TaskMoeConfig& config() const { return config_; }

  Parameter& router_family() const { return *routers_; }
  Parameter& task_embedding(std::size_t k) const { return *embeddings_[k]; }
  const Linear& head(std::size_t k) const { return heads_[k]; }

 private:
  TaskMoeConfig config_;
  LayerNorm norm_;
  MultiHeadAttention attention_;
  Parameter* routers_;  ///< [d, n, K]
  std::vector<Expert> experts_;
  std::vector<Parameter*> embeddings_;
  LayerNorm output_norm_;
  std::vector<Linear> heads_;
};

/// (1/(s+1)) * sum over the K rows of |p_hat - p|^2, averaged over the batch.
/// predictions, targets: [B, K, 2].
Var coord_loss(const Var& predictions, const Tensor& targets);

}  // namespace scadf
