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


#include "scadf/channel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>

#include "scadf/diff/parameters.hpp"
#include "scadf/errors.hpp"

namespace scadf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kEps = 1e-9;

struct Crossing {
  double t;  // along the path segment
  double u;  // along the wall
};

std::optional<Crossing> intersect(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
  const Vec2 r = q - p;
  const Vec2 s = b - a;
  const double denom = cross(r, s);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const Vec2 ap = a - p;
  return Crossing{cross(ap, s) / denom, cross(ap, r) / denom};
}

bool blocked(const Scene& scene, Vec2 p, Vec2 q, std::optional<std::size_t> skip_wall) {
  for (std::size_t w = 0; w < scene.walls.size(); ++w) {
    if (skip_wall && *skip_wall == w) continue;
    const auto c = intersect(p, q, scene.walls[w].a, scene.walls[w].b);
    if (c && c->t > kEps && c->t < 1.0 - kEps && c->u >= -kEps && c->u <= 1.0 + kEps) return true;
  }
  return false;
}

Vec2 mirror(Vec2 p, const Wall& wall) {
  const Vec2 dir = wall.b - wall.a;
  const double len2 = dot(dir, dir);
  const double t = dot(p - wall.a, dir) / len2;
  const Vec2 foot = wall.a + t * dir;
  return foot + (foot - p);
}

double angle_of(Vec2 v) { return wrap_angle(std::atan2(v.y, v.x)); }

Path make_path(double length, Vec2 departure, Vec2 arrival_back, int order, double carrier_hz) {
  Path p;
  p.delay = length / kSpeedOfLight;
  p.amplitude = 1.0 / length;
  p.phase = wrap_angle(-kTwoPi * carrier_hz * p.delay);
  p.aod = angle_of(departure);
  p.aoa = angle_of(arrival_back);
  p.order = order;
  return p;
}

std::vector<Wall> rectangle(double x0, double y0, double x1, double y1) {
  return {{{x0, y0}, {x1, y0}}, {{x1, y0}, {x1, y1}}, {{x1, y1}, {x0, y1}}, {{x0, y1}, {x0, y0}}};
}

}  // namespace

double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

double wrap_angle(double radians) {
  double w = radians - kTwoPi * std::floor((radians + std::numbers::pi) / kTwoPi);
  if (w >= std::numbers::pi) w -= kTwoPi;
  if (w < -std::numbers::pi) w += kTwoPi;
  return w;
}

double BandConfig::subcarrier_hz(std::size_t l) const {
  return carrier_hz + static_cast<double>(l) / (symbol_time() * static_cast<double>(subcarriers));
}

void BandConfig::validate() const {
  if (subcarriers < 1) throw ConfigError("band needs at least one subcarrier");
  if (!(bandwidth_hz > 0.0)) throw ConfigError("band bandwidth must be positive");
  if (!(carrier_hz > 0.0)) throw ConfigError("band carrier frequency must be positive");
}

std::vector<BandConfig> default_bands() {
  return {{2.6e9, 50e6, 64}, {6e9, 50e6, 64}, {28e9, 50e6, 64}};
}

void Scene::validate() const {
  if (!(bounds.hi.x > bounds.lo.x && bounds.hi.y > bounds.lo.y)) throw ConfigError("scene bounds are empty");
  if (!bounds.contains(bs)) throw ConfigError("base station lies outside the scene bounds");
  for (const auto& w : walls) {
    if (norm(w.b - w.a) <= 0.0) throw ConfigError("scene contains a zero-length wall");
  }
  if (ue_clumps == 0 || ue_count == 0) throw ConfigError("scene needs at least one UE clump and location");
}

nlohmann::json scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["bs"] = {scene.bs.x, scene.bs.y};
  j["walls"] = nlohmann::json::array();
  for (const auto& w : scene.walls) j["walls"].push_back({w.a.x, w.a.y, w.b.x, w.b.y});
  j["bounds"] = {scene.bounds.lo.x, scene.bounds.lo.y, scene.bounds.hi.x, scene.bounds.hi.y};
  j["seed"] = scene.seed;
  j["ue_count"] = scene.ue_count;
  j["ue_clumps"] = scene.ue_clumps;
  j["ue_spread"] = scene.ue_spread;
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  try {
    const auto bs = j.at("bs").get<std::vector<double>>();
    const auto bounds = j.at("bounds").get<std::vector<double>>();
    if (bs.size() != 2 || bounds.size() != 4) throw ConfigError("scene: `bs` needs 2 and `bounds` 4 numbers");
    s.bs = {bs[0], bs[1]};
    s.bounds = {{bounds[0], bounds[1]}, {bounds[2], bounds[3]}};
    for (const auto& w : j.at("walls")) {
      const auto v = w.get<std::vector<double>>();
      if (v.size() != 4) throw ConfigError("scene: each wall needs 4 numbers");
      s.walls.push_back({{v[0], v[1]}, {v[2], v[3]}});
    }
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ue_count = j.value("ue_count", s.ue_count);
    s.ue_clumps = j.value("ue_clumps", s.ue_clumps);
    s.ue_spread = j.value("ue_spread", s.ue_spread);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scene description: ") + e.what());
  }
  s.validate();
  return s;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene file: " + path);
  try {
    return scene_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("scene file " + path + " is not valid JSON: " + e.what());
  }
}

void save_scene(const std::string& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scene file: " + path);
  out << scene_to_json(scene).dump(2) << '\n';
}

ScenePreset parse_preset(const std::string& name) {
  if (name == "open") return ScenePreset::kOpen;
  if (name == "canyon") return ScenePreset::kCanyon;
  if (name == "dense") return ScenePreset::kDense;
  throw ConfigError("unknown scene preset: " + name + " (expected open|canyon|dense)");
}

Scene make_preset_scene(ScenePreset preset, std::uint64_t seed) {
  Scene s;
  s.seed = seed;
  s.bounds = {{0.0, 0.0}, {60.0, 60.0}};
  diff::Rng rng(diff::mix_seed(seed, 0x5ce7e));
  switch (preset) {
    case ScenePreset::kOpen:
      s.bs = {30.0, 30.0};
      s.walls = {{{0.0, 1.0}, {60.0, 1.0}}, {{59.0, 0.0}, {59.0, 60.0}}};
      break;
    case ScenePreset::kCanyon: {
      // Street along x between two facade rows; gaps open side streets.
      s.bs = {6.0, 30.0};
      for (double y : {22.0, 38.0}) {
        double x = 0.0;
        while (x < 60.0) {
          const double len = rng.uniform(8.0, 16.0);
          const double end = std::min(60.0, x + len);
          s.walls.push_back({{x, y}, {end, y}});
          x = end + rng.uniform(3.0, 6.0);
        }
      }
      s.walls.push_back({{0.0, 2.0}, {60.0, 2.0}});
      s.walls.push_back({{0.0, 58.0}, {60.0, 58.0}});
      s.walls.push_back({{58.0, 0.0}, {58.0, 60.0}});
      break;
    }
    case ScenePreset::kDense: {
      s.bs = {30.0, 30.0};
      std::size_t placed = 0;
      for (int attempt = 0; attempt < 200 && placed < 7; ++attempt) {
        const double w = rng.uniform(5.0, 11.0);
        const double h = rng.uniform(5.0, 11.0);
        const double x0 = rng.uniform(2.0, 58.0 - w);
        const double y0 = rng.uniform(2.0, 58.0 - h);
        // keep the base station outside every building footprint
        if (s.bs.x > x0 - 3.0 && s.bs.x < x0 + w + 3.0 && s.bs.y > y0 - 3.0 && s.bs.y < y0 + h + 3.0) continue;
        for (auto& wall : rectangle(x0, y0, x0 + w, y0 + h)) s.walls.push_back(wall);
        ++placed;
      }
      s.walls.push_back({{0.0, 1.0}, {60.0, 1.0}});
      s.walls.push_back({{1.0, 0.0}, {1.0, 60.0}});
      break;
    }
  }
  return s;
}

PathSet trace_paths(const Scene& scene, Vec2 ue, int max_order, double carrier_hz) {
  if (max_order != 0 && max_order != 1) throw ConfigError("max_order must be 0 or 1");
  if (!scene.bounds.contains(ue)) throw ConfigError("UE position lies outside the scene bounds");
  const Vec2 bs = scene.bs;
  if (norm(ue - bs) < 1e-6) throw DegenerateGeometryError("UE coincides with the base station");

  PathSet paths;
  if (!blocked(scene, bs, ue, std::nullopt)) {
    paths.push_back(make_path(norm(ue - bs), ue - bs, bs - ue, 0, carrier_hz));
  }
  if (max_order == 0) return paths;

  for (std::size_t w = 0; w < scene.walls.size(); ++w) {
    const Wall& wall = scene.walls[w];
    const Vec2 image = mirror(bs, wall);
    if (norm(image - ue) < 1e-9) continue;
    const auto c = intersect(image, ue, wall.a, wall.b);
    if (!c || c->t <= kEps || c->t >= 1.0 - kEps || c->u < 0.0 || c->u > 1.0) continue;
    const Vec2 hit = image + c->t * (ue - image);
    if (blocked(scene, bs, hit, w) || blocked(scene, hit, ue, w)) continue;
    paths.push_back(make_path(norm(ue - image), hit - bs, hit - ue, 1, carrier_hz));
  }
  return paths;
}

std::vector<std::complex<double>> cfr_from_paths(const PathSet& paths, const BandConfig& band) {
  band.validate();
  std::vector<std::complex<double>> h(band.subcarriers);
  for (std::size_t l = 0; l < band.subcarriers; ++l) {
    const double f = band.subcarrier_hz(l);
    std::complex<double> acc{0.0, 0.0};
    for (const auto& p : paths) {
      acc += p.amplitude * std::polar(1.0, p.phase - kTwoPi * f * p.delay);
    }
    h[l] = acc;
  }
  return h;
}

std::size_t dominant_path(const PathSet& paths) {
  if (paths.empty()) throw NoCoverageError("no propagation path");
  std::size_t best = 0;
  for (std::size_t i = 1; i < paths.size(); ++i) {
    const auto& p = paths[i];
    const auto& b = paths[best];
    if (p.amplitude > b.amplitude || (p.amplitude == b.amplitude && p.delay < b.delay)) best = i;
  }
  return best;
}

Fingerprint make_fingerprint(const PathSet& paths, const BandConfig& band, Vec2 position, std::size_t band_id) {
  if (paths.empty()) throw NoCoverageError("location has no propagation path");
  const auto h = cfr_from_paths(paths, band);
  Fingerprint fp;
  fp.position = position;
  fp.band_id = band_id;
  fp.subcarriers = band.subcarriers;
  const std::size_t n = band.subcarriers;
  fp.cfr.assign(3 * n, 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    fp.cfr[l] = h[l].real();
    fp.cfr[n + l] = h[l].imag();
    fp.cfr[2 * n + l] = std::hypot(h[l].real(), h[l].imag());
  }
  const Path& dom = paths[dominant_path(paths)];
  double power = 0.0;
  for (const auto& p : paths) {
    power += p.amplitude * p.amplitude;
    fp.los = fp.los || p.order == 0;
  }
  fp.geom = {dom.aod, dom.aoa, dom.delay * kSpeedOfLight, 10.0 * std::log10(power)};
  return fp;
}

std::vector<Vec2> sample_ue_positions(const Scene& scene) {
  scene.validate();
  diff::Rng rng(diff::mix_seed(scene.seed, 0x0e11));
  const Vec2 lo = scene.bounds.lo;
  const Vec2 hi = scene.bounds.hi;
  const double margin = std::min(3.0 * scene.ue_spread, 0.25 * std::min(hi.x - lo.x, hi.y - lo.y));
  std::vector<Vec2> centers;
  for (std::size_t c = 0; c < scene.ue_clumps; ++c) {
    centers.push_back({rng.uniform(lo.x + margin, hi.x - margin), rng.uniform(lo.y + margin, hi.y - margin)});
  }
  std::vector<Vec2> out;
  out.reserve(scene.ue_count);
  for (std::size_t i = 0; i < scene.ue_count; ++i) {
    // Each location draws from its own stream so positions do not depend on generation order.
    diff::Rng local(diff::mix_seed(scene.seed, 1000 + i));
    const Vec2 c = centers[i % centers.size()];
    Vec2 p;
    double spread = scene.ue_spread;
    do {
      p = {std::clamp(c.x + local.normal(0.0, spread), lo.x, hi.x),
           std::clamp(c.y + local.normal(0.0, spread), lo.y, hi.y)};
      spread += 0.1;
    } while (norm(p - scene.bs) < 1.0);
    out.push_back(p);
  }
  return out;
}

}  // namespace scadf
