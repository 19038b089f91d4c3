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
#include <string>

#include "scadf/soft_moe.hpp"

namespace scadf {

/// How the diversity term enters the objective.
///  kPenalizeSimilarity: L = L_coord - alpha * L_MMD, so descent pushes routers apart.
///  kMinimizeDivergence: L = L_coord + alpha * L_MMD, which pulls routers together.
enum class MmdSign { kPenalizeSimilarity, kMinimizeDivergence };

std::string to_string(MmdSign sign);
MmdSign parse_mmd_sign(const std::string& name);

struct MmdConfig {
  double sigma = 4.0;
  double alpha = 0.1;
  MmdSign sign = MmdSign::kPenalizeSimilarity;

  /// sigma = sqrt(d / 2) for embedding width d.
  static double bandwidth_for_width(std::size_t width);
  void validate() const;
};

/// Gaussian kernel exp(-|x - y|^2 / (2 sigma^2)).
double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma);

/// Biased (V-statistic) squared MMD between the row sets of a and b, diagonal
/// terms included. a, b: [..., M, w]; result: [...].
Var mmd_sq(const Var& a, const Var& b, double sigma);

/// 2/(K(K-1)) * sum_{p<q} [MMD^2(D^p, D^q) + MMD^2(C^p, C^q)], averaged over
/// any leading batch axis. Returns 0 (with a notice on stderr) for K < 2.
Var diversity_loss(std::span<const RoutingState> routers, double sigma);

/// L_coord + sign * alpha * L_MMD with sign = -1 for kPenalizeSimilarity.
Var total_loss(const Var& coord, const Var& diversity, double alpha, MmdSign sign);

}  // namespace scadf
