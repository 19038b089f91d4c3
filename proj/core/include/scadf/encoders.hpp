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

#include <array>
#include <span>
#include <vector>

#include "scadf/layers.hpp"
#include "scadf/spatial_context.hpp"

namespace scadf {

enum class Modality { kCfr, kNum };

struct TokenStream {
  Var tokens;  ///< [B, M_i, d]
  Modality modality = Modality::kCfr;
};

struct EncoderConfig {
  std::size_t s = 5;
  std::size_t subcarriers = 64;
  std::size_t patch = 16;
  std::size_t width = 32;
  std::size_t kernel = 3;

  /// Tokens per vertex in either stream (N_c / P).
  std::size_t tokens_per_vertex() const { return subcarriers / patch; }
  /// Stream length l_cfr = l_num = s * N_c / P.
  std::size_t stream_length() const { return s * tokens_per_vertex(); }
  void validate() const;
};

/// Depth-wise conv (kernel 3, per channel) over frequency, pointwise 3 -> d,
/// GELU, average pooling of each length-P patch into one token, then learned
/// positional embeddings. Vertices never mix.
class CfrEncoder {
 public:
  CfrEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config, Rng& rng);
  /// v_cfr: [B, s, 3, N_c]
  TokenStream operator()(const Var& v_cfr) const;

 private:
  EncoderConfig config_;
  Parameter* depthwise_weight_;
  Parameter* depthwise_bias_;
  Linear pointwise_;
  Parameter* positions_;
};

/// Per-vertex linear embedding of the 4 geometry scalars, a residual two-layer
/// MLP, then N_c/P separate projections per vertex so the stream length matches
/// the CFR stream.
class NumEncoder {
 public:
  NumEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config, Rng& rng);
  /// v_num: [B, 4 s]
  TokenStream operator()(const Var& v_num) const;

 private:
  EncoderConfig config_;
  Linear embed_;
  Mlp refine_;
  Linear split_;
  Parameter* positions_;
};

/// Per-feature z-score statistics gathered from training samples. Geometry
/// scalars are standardized per scalar, CFR values per channel; targets get a
/// per-axis centre and a shared scale so predictions can be emitted in metres.
struct FeatureNormalizer {
  std::array<double, 4> geom_mean{0, 0, 0, 0};
  std::array<double, 4> geom_std{1, 1, 1, 1};
  std::array<double, 3> cfr_mean{0, 0, 0};
  std::array<double, 3> cfr_std{1, 1, 1};
  std::array<double, 2> target_center{0, 0};
  double target_scale = 1.0;

  static FeatureNormalizer fit(std::span<const TrajectorySample* const> samples);
  static FeatureNormalizer identity() { return {}; }

  void apply_num(std::span<const double> in, std::span<double> out) const;
  void apply_cfr(std::span<const double> in, std::size_t subcarriers, std::span<double> out) const;
};

struct Batch {
  Tensor v_cfr;    ///< [B, s, 3, N_c], standardized
  Tensor v_num;    ///< [B, 4 s], standardized
  Tensor targets;  ///< [B, s + 1, 2], metres
  std::vector<const TrajectorySample*> samples;
};

Batch make_batch(std::span<const TrajectorySample* const> samples, const FeatureNormalizer& normalizer);

}  // namespace scadf
