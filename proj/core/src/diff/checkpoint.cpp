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


#include "scadf/diff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "scadf/errors.hpp"

namespace scadf::diff {

namespace {

constexpr const char* kFormat = "scadf-f64";

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  } else {
    return v;
  }
}

}  // namespace

const Tensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw ConfigError("checkpoint has no tensor named " + name);
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = kFormat;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"shape", t.tensor.shape()}, {"dtype", "f64le"}, {"offset", offset}});
    offset += 8 * t.tensor.size();
  }
  out << header.dump() << '\n';
  for (const auto& t : ckpt.tensors) {
    for (double v : t.tensor.data()) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.write(buf, 8);
    }
  }
  if (!out) throw std::runtime_error("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("checkpoint header missing");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format", "") != kFormat) throw ConfigError("unsupported checkpoint format");

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  std::uint64_t expected_offset = 0;
  for (const auto& entry : header.at("tensors")) {
    if (entry.at("dtype") != "f64le") throw ConfigError("unsupported dtype in checkpoint");
    if (entry.at("offset").get<std::uint64_t>() != expected_offset) {
      throw ConfigError("checkpoint blobs are not contiguous in header order");
    }
    Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    for (auto& v : t.data()) {
      char buf[8];
      if (!in.read(buf, 8)) throw ConfigError("checkpoint truncated");
      std::uint64_t bits = 0;
      std::memcpy(&bits, buf, 8);
      v = std::bit_cast<double>(to_little_endian(bits));
    }
    expected_offset += 8 * t.size();
    ckpt.tensors.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  return read_checkpoint(in);
}

void append_parameters(Checkpoint& ckpt, const ParameterStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) ckpt.tensors.push_back({store[i].name, store[i].value});
}

void assign_parameters(const Checkpoint& ckpt, ParameterStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store[i];
    const Tensor& t = ckpt.find(p.name);
    if (t.shape() != p.value.shape()) {
      throw DimensionError("checkpoint tensor " + p.name + " has shape " + shape_str(t.shape()) + ", model expects " +
                           shape_str(p.value.shape()));
    }
    p.value = t;
  }
}

}  // namespace scadf::diff
