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


#include "scadf/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace scadf::diff {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> choose_samples(const ParameterStore& store, std::size_t wanted,
                                                                 Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  const std::size_t total = store.scalar_count();
  if (total <= wanted) {
    for (std::size_t p = 0; p < store.size(); ++p) {
      for (std::size_t i = 0; i < store[p].value.size(); ++i) picks.emplace_back(p, i);
    }
    return picks;
  }
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  for (std::size_t p = 0; p < store.size(); ++p) chosen.emplace(p, rng.index(store[p].value.size()));
  // Flat index -> (tensor, offset) through cumulative sizes.
  std::vector<std::size_t> starts;
  std::size_t acc = 0;
  for (std::size_t p = 0; p < store.size(); ++p) {
    starts.push_back(acc);
    acc += store[p].value.size();
  }
  while (chosen.size() < wanted) {
    const std::size_t flat = rng.index(total);
    const auto it = std::upper_bound(starts.begin(), starts.end(), flat) - 1;
    const auto p = static_cast<std::size_t>(it - starts.begin());
    chosen.emplace(p, flat - *it);
  }
  picks.assign(chosen.begin(), chosen.end());
  return picks;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var()>& closure, ParameterStore& store,
                           const GradCheckOptions& options) {
  store.zero_grad();
  backward(closure());
  std::vector<Tensor> analytic;
  for (std::size_t p = 0; p < store.size(); ++p) analytic.push_back(store[p].grad);

  Rng rng(options.seed);
  GradCheckReport report;
  for (const auto& [p, i] : choose_samples(store, options.samples, rng)) {
    Parameter& param = store[p];
    const double saved = param.value[i];
    param.value[i] = saved + options.step;
    const double up = closure().item();
    param.value[i] = saved - options.step;
    const double down = closure().item();
    param.value[i] = saved;

    GradCheckEntry e;
    e.name = param.name;
    e.index = i;
    e.analytic = analytic[p][i];
    e.numeric = (up - down) / (2.0 * options.step);
    e.abs_error = std::abs(e.analytic - e.numeric);
    const double denom = std::max(std::abs(e.analytic), std::abs(e.numeric));
    e.rel_error = denom > 0.0 ? e.abs_error / denom : 0.0;
    e.pass = e.abs_error <= options.abs_floor || e.rel_error <= options.rel_tolerance;
    if (!e.pass) ++report.failures;
    // Differences under the absolute floor are FD noise and do not count toward the maximum.
    if (e.abs_error > options.abs_floor) report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(std::move(e));
  }

  report.worst = report.entries;
  // Entries above the floor first, so round-off noise does not crowd out real errors.
  const double floor = options.abs_floor;
  std::sort(report.worst.begin(), report.worst.end(), [floor](const auto& a, const auto& b) {
    const bool a_counts = a.abs_error > floor, b_counts = b.abs_error > floor;
    if (a_counts != b_counts) return a_counts;
    return a.rel_error > b.rel_error;
  });
  if (report.worst.size() > 10) report.worst.resize(10);
  return report;
}

}  // namespace scadf::diff
