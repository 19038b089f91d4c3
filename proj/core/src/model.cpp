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


#include "scadf/model.hpp"

#include "scadf/errors.hpp"

namespace scadf {

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kScadf: return "scadf";
    case Architecture::kConcat: return "concat";
    case Architecture::kFullCon: return "fullcon";
    case Architecture::kSoftMoe: return "softmoe";
  }
  return "scadf";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "scadf") return Architecture::kScadf;
  if (name == "concat") return Architecture::kConcat;
  if (name == "fullcon") return Architecture::kFullCon;
  if (name == "softmoe") return Architecture::kSoftMoe;
  throw ConfigError("unknown architecture: " + name + " (expected scadf|concat|fullcon|softmoe)");
}

EncoderConfig ModelConfig::encoder() const {
  EncoderConfig e;
  e.s = s;
  e.subcarriers = subcarriers;
  e.patch = patch;
  e.width = width;
  return e;
}

SoftMoeConfig ModelConfig::block() const {
  SoftMoeConfig b;
  b.width = width;
  b.experts = experts;
  b.heads = heads;
  b.hidden_mult = hidden_mult;
  b.pre_norm = pre_norm;
  return b;
}

void ModelConfig::validate() const {
  encoder().validate();
  block().validate();
  if (depth < 1) throw ConfigError("fusion depth must be at least 1");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)}, {"s", c.s},         {"subcarriers", c.subcarriers},
          {"patch", c.patch},          {"width", c.width}, {"experts", c.experts},
          {"depth", c.depth},          {"heads", c.heads}, {"hidden_mult", c.hidden_mult},
          {"pre_norm", c.pre_norm}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    if (j.contains("arch")) c.arch = parse_architecture(j.at("arch").get<std::string>());
    c.s = j.value("s", c.s);
    c.subcarriers = j.value("subcarriers", c.subcarriers);
    c.patch = j.value("patch", c.patch);
    c.width = j.value("width", c.width);
    c.experts = j.value("experts", c.experts);
    c.depth = j.value("depth", c.depth);
    c.heads = j.value("heads", c.heads);
    c.hidden_mult = j.value("hidden_mult", c.hidden_mult);
    c.pre_norm = j.value("pre_norm", c.pre_norm);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

LocalizationModel::LocalizationModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.width;
  const std::size_t k = config_.tasks();
  cfr_encoder_ = std::make_unique<CfrEncoder>(store_, "cfr_encoder", config_.encoder(), rng);
  num_encoder_ = std::make_unique<NumEncoder>(store_, "num_encoder", config_.encoder(), rng);
  switch (config_.arch) {
    case Architecture::kScadf: {
      fusion_ = std::make_unique<SoftMoeStack>(store_, "fusion", config_.block(), config_.depth, rng);
      TaskMoeConfig tc;
      tc.block = config_.block();
      tc.tasks = k;
      task_ = std::make_unique<TaskMoe>(store_, "task_moe", tc, rng);
      break;
    }
    case Architecture::kSoftMoe:
      fusion_ = std::make_unique<SoftMoeStack>(store_, "fusion", config_.block(), config_.depth, rng);
      final_block_ = std::make_unique<SoftMoeBlock>(store_, "joint_block", config_.block(), rng);
      final_norm_ = LayerNorm(store_, "joint_norm", d);
      head_out_ = Linear(store_, "joint_head", d, 2 * k, rng);
      break;
    case Architecture::kFullCon:
      fuse_ = Linear(store_, "fuse", 2 * d, d, rng);
      head_in_ = Linear(store_, "head.in", d, d, rng);
      head_out_ = Linear(store_, "head.out", d, 2 * k, rng);
      break;
    case Architecture::kConcat:
      head_in_ = Linear(store_, "head.in", 2 * d, d, rng);
      head_out_ = Linear(store_, "head.out", d, 2 * k, rng);
      break;
  }
}

Var LocalizationModel::heads_to_metres(const Var& raw) const {
  Tensor center({2});
  center[0] = normalizer_.target_center[0];
  center[1] = normalizer_.target_center[1];
  return diff::add(diff::scale(raw, normalizer_.target_scale), diff::constant(std::move(center)));
}

ModelOutput LocalizationModel::forward(const Tensor& v_cfr, const Tensor& v_num) const {
  if (v_cfr.rank() < 1 || v_num.rank() < 1 || v_cfr.dim(0) != v_num.dim(0)) {
    throw DimensionError("CFR batch " + diff::shape_str(v_cfr.shape()) + " and numeric batch " +
                         diff::shape_str(v_num.shape()) + " disagree");
  }
  const std::size_t batch = v_cfr.dim(0);
  const std::size_t k = config_.tasks();
  const TokenStream cfr = (*cfr_encoder_)(diff::constant(v_cfr));
  const TokenStream num = (*num_encoder_)(diff::constant(v_num));

  ModelOutput out;
  Var raw;
  if (config_.arch == Architecture::kScadf || config_.arch == Architecture::kSoftMoe) {
    SoftMoeStackOutput fused = (*fusion_)(diff::concat({cfr.tokens, num.tokens}, 1));
    out.fusion_routing = std::move(fused.routing);
    if (task_) {
      TaskOutputs tasks = (*task_)(fused.output);
      raw = tasks.predictions;
      out.task_routing = std::move(tasks.routing);
    } else {
      SoftMoeBlockOutput joint = (*final_block_)(fused.output);
      out.fusion_routing.push_back(joint.routing);
      raw = diff::reshape(head_out_(pool_tokens(joint.output, final_norm_)), {batch, k, 2});
    }
  } else {
    Var pooled = diff::concat({diff::mean(cfr.tokens, -2), diff::mean(num.tokens, -2)}, -1);  // [B, 2d]
    if (config_.arch == Architecture::kFullCon) pooled = diff::gelu(fuse_(pooled));
    raw = diff::reshape(head_out_(diff::gelu(head_in_(pooled))), {batch, k, 2});
  }
  out.predictions = heads_to_metres(raw);
  return out;
}

void LocalizationModel::freeze_routers() {
  if (fusion_) {
    for (std::size_t i = 0; i < fusion_->depth(); ++i) fusion_->block(i).router().frozen = true;
  }
  if (final_block_) final_block_->router().frozen = true;
  if (task_) task_->router_family().frozen = true;
}

}  // namespace scadf
