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

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scadf/diff/parameters.hpp"
#include "scadf/diff/tensor.hpp"

namespace scadf::diff {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// On-disk layout: one line of JSON header
///   {"format": "scadf-f64", "meta": {...}, "tensors": [{"name", "shape", "dtype": "f64le", "offset"}, ...]}
/// terminated by '\n', followed by little-endian float64 blobs in header order.
/// Offsets are in bytes from the first byte after the newline.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor& find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Appends every parameter of `store` under its own name.
void append_parameters(Checkpoint& ckpt, const ParameterStore& store);
/// Copies tensors into same-named parameters; every parameter must be present with a matching shape.
void assign_parameters(const Checkpoint& ckpt, ParameterStore& store);

}  // namespace scadf::diff
