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


#include "scadf/mmd.hpp"

#include <cmath>
#include <iostream>
#include <vector>

#include "scadf/errors.hpp"

namespace scadf {

std::string to_string(MmdSign sign) {
  return sign == MmdSign::kPenalizeSimilarity ? "penalize_similarity" : "minimize_divergence";
}

MmdSign parse_mmd_sign(const std::string& name) {
  if (name == "penalize_similarity") return MmdSign::kPenalizeSimilarity;
  if (name == "minimize_divergence") return MmdSign::kMinimizeDivergence;
  throw ConfigError("unknown mmd_sign: " + name + " (expected penalize_similarity|minimize_divergence)");
}

double MmdConfig::bandwidth_for_width(std::size_t width) { return std::sqrt(static_cast<double>(width) / 2.0); }

void MmdConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("MMD kernel bandwidth must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("MMD weight alpha must be non-negative");
}

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
  double dist = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dist += (x[i] - y[i]) * (x[i] - y[i]);
  return std::exp(-dist / (2.0 * sigma * sigma));
}

Var mmd_sq(const Var& a, const Var& b, double sigma) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mmd_sq: shapes " + diff::shape_str(a.shape()) + " and " + diff::shape_str(b.shape()) +
                         " differ");
  }
  Var within = diff::add(diff::gaussian_kernel_mean(a, a, sigma), diff::gaussian_kernel_mean(b, b, sigma));
  return diff::sub(within, diff::scale(diff::gaussian_kernel_mean(a, b, sigma), 2.0));
}

Var diversity_loss(std::span<const RoutingState> routers, double sigma) {
  const std::size_t k = routers.size();
  if (k < 2) {
    static bool noticed = false;
    if (!noticed) {
      std::clog << "note: diversity loss needs at least two routers; using 0\n";
      noticed = true;
    }
    return diff::constant(Tensor::scalar(0.0));
  }
  // sum_{p<q} MMD^2(X_p, X_q) = (K - 1) sum_p k(X_p, X_p) - 2 sum_{p<q} k(X_p, X_q),
  // so each self term is evaluated once.
  auto pairwise = [&](auto member) {
    std::vector<Var> self_terms;
    std::vector<Var> cross_terms;
    for (std::size_t p = 0; p < k; ++p) {
      const Var& xp = routers[p].*member;
      self_terms.push_back(diff::gaussian_kernel_mean(xp, xp, sigma));
      for (std::size_t q = p + 1; q < k; ++q) {
        cross_terms.push_back(diff::gaussian_kernel_mean(xp, routers[q].*member, sigma));
      }
    }
    const int axis = static_cast<int>(self_terms.front().shape().size());
    auto stack_sum = [axis](const std::vector<Var>& terms) {
      std::vector<Var> parts;
      for (const Var& t : terms) {
        Shape shape = t.shape();
        shape.push_back(1);
        parts.push_back(diff::reshape(t, shape));
      }
      return diff::sum(diff::concat(parts, axis), axis);
    };
    return diff::sub(diff::scale(stack_sum(self_terms), static_cast<double>(k - 1)),
                     diff::scale(stack_sum(cross_terms), 2.0));
  };
  Var total = diff::add(pairwise(&RoutingState::dispatch), pairwise(&RoutingState::combine));
  const double coeff = 2.0 / static_cast<double>(k * (k - 1));
  return diff::scale(diff::mean_all(total), coeff);
}

Var total_loss(const Var& coord, const Var& diversity, double alpha, MmdSign sign) {
  if (!(alpha >= 0.0)) throw ConfigError("MMD weight alpha must be non-negative");
  const double weight = sign == MmdSign::kPenalizeSimilarity ? -alpha : alpha;
  return diff::add(coord, diff::scale(diversity, weight));
}

}  // namespace scadf
