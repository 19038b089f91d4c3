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

#include <stdexcept>
#include <string>

namespace scadf {

/// Bad or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch between tensors or dataset entries.
class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Violated call contract (non-scalar loss, missing gradients, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN/Inf encountered during training (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// UE and BS coincide, so no path geometry can be defined.
class DegenerateGeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A location has no propagation path at all.
class NoCoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RadiusSearchError : public std::runtime_error {
 public:
  RadiusSearchError(const std::string& what, double best_median)
      : std::runtime_error(what), best_median_(best_median) {}
  double best_median() const noexcept { return best_median_; }

 private:
  double best_median_;
};

class SamplingExhaustedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scadf
