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

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scadf/encoders.hpp"
#include "scadf/soft_moe.hpp"
#include "scadf/task_moe.hpp"

namespace scadf {

enum class Architecture { kScadf, kConcat, kFullCon, kSoftMoe };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct ModelConfig {
  Architecture arch = Architecture::kScadf;
  std::size_t s = 5;
  std::size_t subcarriers = 64;
  std::size_t patch = 16;
  std::size_t width = 32;
  std::size_t experts = 4;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t hidden_mult = 4;
  bool pre_norm = true;

  std::size_t tasks() const { return s + 1; }
  EncoderConfig encoder() const;
  SoftMoeConfig block() const;
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ModelOutput {
  Var predictions;                          ///< [B, K, 2] in metres
  std::vector<RoutingState> fusion_routing;  ///< one per fusion block
  std::vector<RoutingState> task_routing;    ///< one per task (SCADF-MoE only)
};

/// Encoders, a fusion stage chosen by `arch`, and coordinate heads. Heads work
/// in standardized target units; the stored target affine maps them to metres.
///   scadf:   soft MoE stack -> modality-task MoE with K task routers
///   softmoe: soft MoE stack -> one more soft MoE block -> pooled joint head
///   fullcon: pooled streams -> one dense fusion layer -> MLP head
///   concat:  pooled streams concatenated -> MLP head
class LocalizationModel {
 public:
  LocalizationModel(const ModelConfig& config, std::uint64_t seed);

  ModelOutput forward(const Tensor& v_cfr, const Tensor& v_num) const;
  ModelOutput forward(const Batch& batch) const { return forward(batch.v_cfr, batch.v_num); }

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const FeatureNormalizer& normalizer() const { return normalizer_; }
  void set_normalizer(const FeatureNormalizer& n) { normalizer_ = n; }

  /// Marks every router matrix (phi, phi_task) frozen.
  void freeze_routers();

  const SoftMoeStack* fusion() const { return fusion_.get(); }
  const TaskMoe* task_moe() const { return task_.get(); }

 private:
  Var heads_to_metres(const Var& raw) const;

  ModelConfig config_;
  ParameterStore store_;
  FeatureNormalizer normalizer_;
  std::unique_ptr<CfrEncoder> cfr_encoder_;
  std::unique_ptr<NumEncoder> num_encoder_;
  std::unique_ptr<SoftMoeStack> fusion_;
  std::unique_ptr<TaskMoe> task_;
  std::unique_ptr<SoftMoeBlock> final_block_;
  LayerNorm final_norm_;
  Linear fuse_;
  Linear head_in_;
  Linear head_out_;
};

}  // namespace scadf
