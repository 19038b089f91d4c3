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


#include "scadf/encoders.hpp"

#include <cmath>

#include "scadf/errors.hpp"

namespace scadf {

namespace {

// Constant features keep unit scale instead of dividing by zero.
double safe_std(double var) { return var > 1e-24 ? std::sqrt(var) : 1.0; }

}  // namespace

void EncoderConfig::validate() const {
  if (s < 1 || subcarriers < 1 || patch < 1 || width < 1) throw ConfigError("encoder sizes must be positive");
  if (subcarriers % patch != 0) {
    throw ConfigError("subcarrier count " + std::to_string(subcarriers) + " is not divisible by patch length " +
                      std::to_string(patch));
  }
  if (kernel % 2 == 0) throw ConfigError("depth-wise kernel length must be odd");
}

CfrEncoder::CfrEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config, Rng& rng)
    : config_(config),
      depthwise_weight_(&add_weight(store, name + ".depthwise.weight", 3, config.kernel, rng)),
      depthwise_bias_(&add_small(store, name + ".depthwise.bias", {3}, rng)),
      pointwise_(store, name + ".pointwise", 3, config.width, rng),
      positions_(&add_small(store, name + ".positions", {config.stream_length(), config.width}, rng)) {
  config_.validate();
}

TokenStream CfrEncoder::operator()(const Var& v_cfr) const {
  const std::size_t s = config_.s;
  const std::size_t nc = config_.subcarriers;
  if (v_cfr.shape().size() != 4 || v_cfr.dim(1) != s || v_cfr.dim(2) != 3 || v_cfr.dim(3) != nc) {
    throw DimensionError("CFR encoder expects [B, " + std::to_string(s) + ", 3, " + std::to_string(nc) + "], got " +
                         diff::shape_str(v_cfr.shape()));
  }
  const std::size_t batch = v_cfr.dim(0);
  const std::size_t d = config_.width;
  const std::size_t per_vertex = config_.tokens_per_vertex();

  Var h = diff::depthwise_conv1d(v_cfr, diff::parameter(*depthwise_weight_), diff::parameter(*depthwise_bias_));
  h = diff::gelu(pointwise_(diff::transpose(h)));  // [B, s, N_c, d]
  h = diff::reshape(h, {batch, s, per_vertex, config_.patch, d});
  h = diff::mean(h, 3);
  h = diff::reshape(h, {batch, s * per_vertex, d});
  return {diff::add(h, diff::parameter(*positions_)), Modality::kCfr};
}

NumEncoder::NumEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config, Rng& rng)
    : config_(config),
      embed_(store, name + ".embed", 4, config.width, rng),
      refine_(store, name + ".refine", config.width, config.width, rng),
      split_(store, name + ".split", config.width, config.width * config.tokens_per_vertex(), rng),
      positions_(&add_small(store, name + ".positions", {config.stream_length(), config.width}, rng)) {
  config_.validate();
  if (config_.stream_length() % config_.s != 0) {
    throw ConfigError("numeric stream length is not divisible by the trajectory length");
  }
}

TokenStream NumEncoder::operator()(const Var& v_num) const {
  const std::size_t s = config_.s;
  if (v_num.shape().size() != 2 || v_num.dim(1) != 4 * s) {
    throw DimensionError("numeric encoder expects [B, " + std::to_string(4 * s) + "], got " +
                         diff::shape_str(v_num.shape()));
  }
  const std::size_t batch = v_num.dim(0);
  const std::size_t d = config_.width;
  Var e = embed_(diff::reshape(v_num, {batch, s, 4}));
  e = diff::add(e, refine_(e));
  Var tokens = diff::reshape(split_(e), {batch, config_.stream_length(), d});
  return {diff::add(tokens, diff::parameter(*positions_)), Modality::kNum};
}

FeatureNormalizer FeatureNormalizer::fit(std::span<const TrajectorySample* const> samples) {
  if (samples.empty()) throw ConfigError("cannot fit feature statistics on an empty training set");
  FeatureNormalizer n;
  // Two passes: means first, then squared deviations.
  std::array<double, 4> gs{};
  std::array<double, 3> cs{};
  std::array<double, 2> ts{};
  double vertices = 0.0;
  double cfr_count = 0.0;
  for (const auto* sample : samples) {
    const std::size_t nc = sample->subcarriers;
    for (std::size_t v = 0; v < sample->s; ++v) {
      for (std::size_t f = 0; f < 4; ++f) gs[f] += sample->v_num[4 * v + f];
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t l = 0; l < nc; ++l) cs[c] += sample->v_cfr[(v * 3 + c) * nc + l];
      }
      ts[0] += sample->targets[v][0];
      ts[1] += sample->targets[v][1];
      vertices += 1.0;
      cfr_count += static_cast<double>(nc);
    }
  }
  for (std::size_t f = 0; f < 4; ++f) n.geom_mean[f] = gs[f] / vertices;
  for (std::size_t c = 0; c < 3; ++c) n.cfr_mean[c] = cs[c] / cfr_count;
  n.target_center = {ts[0] / vertices, ts[1] / vertices};

  std::array<double, 4> gss{};
  std::array<double, 3> css{};
  double tss = 0.0;
  for (const auto* sample : samples) {
    const std::size_t nc = sample->subcarriers;
    for (std::size_t v = 0; v < sample->s; ++v) {
      for (std::size_t f = 0; f < 4; ++f) {
        const double dx = sample->v_num[4 * v + f] - n.geom_mean[f];
        gss[f] += dx * dx;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t l = 0; l < nc; ++l) {
          const double dx = sample->v_cfr[(v * 3 + c) * nc + l] - n.cfr_mean[c];
          css[c] += dx * dx;
        }
      }
      const double dx = sample->targets[v][0] - n.target_center[0];
      const double dy = sample->targets[v][1] - n.target_center[1];
      tss += dx * dx + dy * dy;
    }
  }
  for (std::size_t f = 0; f < 4; ++f) n.geom_std[f] = safe_std(gss[f] / vertices);
  for (std::size_t c = 0; c < 3; ++c) n.cfr_std[c] = safe_std(css[c] / cfr_count);
  const double rms = std::sqrt(tss / (2.0 * vertices));
  n.target_scale = rms > 1e-12 ? rms : 1.0;
  return n;
}

void FeatureNormalizer::apply_num(std::span<const double> in, std::span<double> out) const {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - geom_mean[i % 4]) / geom_std[i % 4];
}

void FeatureNormalizer::apply_cfr(std::span<const double> in, std::size_t subcarriers, std::span<double> out) const {
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t c = (i / subcarriers) % 3;
    out[i] = (in[i] - cfr_mean[c]) / cfr_std[c];
  }
}

Batch make_batch(std::span<const TrajectorySample* const> samples, const FeatureNormalizer& normalizer) {
  if (samples.empty()) throw ConfigError("empty batch");
  const std::size_t s = samples.front()->s;
  const std::size_t nc = samples.front()->subcarriers;
  const std::size_t b = samples.size();
  Batch batch;
  batch.v_cfr = Tensor({b, s, 3, nc});
  batch.v_num = Tensor({b, 4 * s});
  batch.targets = Tensor({b, s + 1, 2});
  for (std::size_t i = 0; i < b; ++i) {
    const auto* sample = samples[i];
    if (sample->s != s || sample->subcarriers != nc) throw DimensionError("batch mixes trajectory shapes");
    normalizer.apply_num(sample->v_num, batch.v_num.data().subspan(i * 4 * s, 4 * s));
    normalizer.apply_cfr(sample->v_cfr, nc, batch.v_cfr.data().subspan(i * s * 3 * nc, s * 3 * nc));
    for (std::size_t k = 0; k <= s; ++k) {
      batch.targets[(i * (s + 1) + k) * 2] = sample->targets[k][0];
      batch.targets[(i * (s + 1) + k) * 2 + 1] = sample->targets[k][1];
    }
  }
  batch.samples.assign(samples.begin(), samples.end());
  return batch;
}

}  // namespace scadf
