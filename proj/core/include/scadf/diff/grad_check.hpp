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
#include <functional>
#include <string>
#include <vector>

#include "scadf/diff/parameters.hpp"
#include "scadf/diff/var.hpp"

namespace scadf::diff {

struct GradCheckOptions {
  std::size_t samples = 200;
  double step = 1e-5;
  double rel_tolerance = 1e-4;
  /// Absolute differences below this are treated as finite-difference round-off.
  double abs_floor = 1e-9;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  /// Entries sorted by descending relative error, at most ten.
  std::vector<GradCheckEntry> worst;
  double max_rel_error = 0.0;
  std::size_t failures = 0;
  bool passed() const noexcept { return failures == 0; }
};

/// Compares backward() gradients of `closure` against central differences on a
/// random subsample of scalar parameters. Every parameter tensor contributes at
/// least one sample; all scalars are checked when there are fewer than requested.
/// The closure must rebuild the graph from the current parameter values each call.
GradCheckReport grad_check(const std::function<Var()>& closure, ParameterStore& store,
                           const GradCheckOptions& options = {});

}  // namespace scadf::diff
