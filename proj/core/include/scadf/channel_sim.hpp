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
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace scadf {

inline constexpr double kSpeedOfLight = 299'792'458.0;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

double norm(Vec2 v);
double dot(Vec2 a, Vec2 b);
double cross(Vec2 a, Vec2 b);
/// Wraps an angle into [-pi, pi).
double wrap_angle(double radians);

/// OFDM band: subcarrier l sits at f_c + l / (T_s * N_c) with T_s = 1 / bandwidth.
struct BandConfig {
  double carrier_hz = 2.6e9;
  double bandwidth_hz = 50e6;
  std::size_t subcarriers = 64;

  double symbol_time() const { return 1.0 / bandwidth_hz; }
  double subcarrier_hz(std::size_t l) const;
  void validate() const;
};

/// Band list for the three carriers used throughout (2.6, 6 and 28 GHz).
std::vector<BandConfig> default_bands();

struct Path {
  double amplitude = 0.0;  ///< linear, dimensionless
  double phase = 0.0;      ///< radians
  double delay = 0.0;      ///< seconds
  double aod = 0.0;        ///< radians, at the BS
  double aoa = 0.0;        ///< radians, at the UE, pointing back along the arriving ray
  int order = 0;           ///< reflection order, 0 = direct
};
using PathSet = std::vector<Path>;

struct Wall {
  Vec2 a;
  Vec2 b;
};

struct Bounds {
  Vec2 lo;
  Vec2 hi;
  bool contains(Vec2 p) const { return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y; }
};

struct Scene {
  Vec2 bs;
  std::vector<Wall> walls;
  Bounds bounds{{0.0, 0.0}, {60.0, 60.0}};
  std::uint64_t seed = 0;
  /// UE layout: `ue_count` points spread around `ue_clumps` Gaussian centres.
  std::size_t ue_count = 200;
  std::size_t ue_clumps = 25;
  double ue_spread = 1.0;

  void validate() const;
};

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);
Scene load_scene(const std::string& path);
void save_scene(const std::string& path, const Scene& scene);

enum class ScenePreset { kOpen, kCanyon, kDense };
ScenePreset parse_preset(const std::string& name);
Scene make_preset_scene(ScenePreset preset, std::uint64_t seed);

struct Fingerprint {
  Vec2 position;
  std::size_t subcarriers = 0;
  /// 3 x N_c row-major: real, imaginary, magnitude of the CFR.
  std::vector<double> cfr;
  /// dominant AoD [rad], dominant AoA [rad], dominant path length [m], total gain [dB].
  std::array<double, 4> geom{};
  bool los = false;
  std::size_t band_id = 0;
};

/// Image-method tracer: direct path plus one first-order reflection per wall
/// (max_order = 1). Amplitude 1/length, phase -2 pi f_c tau wrapped.
/// Throws DegenerateGeometryError when UE and BS coincide.
PathSet trace_paths(const Scene& scene, Vec2 ue, int max_order, double carrier_hz);

/// H(f_l) = sum_i a_i exp(j phi_i) exp(-j 2 pi f_l tau_i) for l = 0..N_c-1.
std::vector<std::complex<double>> cfr_from_paths(const PathSet& paths, const BandConfig& band);

/// Index of the dominant path: max amplitude, ties broken by smallest delay.
std::size_t dominant_path(const PathSet& paths);

/// Throws NoCoverageError for an empty path set.
Fingerprint make_fingerprint(const PathSet& paths, const BandConfig& band, Vec2 position, std::size_t band_id);

/// Deterministic UE layout for the scene (inside bounds, away from the BS).
std::vector<Vec2> sample_ue_positions(const Scene& scene);

}  // namespace scadf
