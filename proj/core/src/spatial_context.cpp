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


#include "scadf/spatial_context.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scadf/diff/parameters.hpp"
#include "scadf/errors.hpp"

namespace scadf {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // smaller root wins so the representative is the lowest index
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<Cluster> cluster_points(std::span<const Vec2> points, double radius) {
  if (!(radius > 0.0)) throw ConfigError("cluster radius must be positive");
  DisjointSet sets(points.size());
  const double reach = 2.0 * radius;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (norm(points[i] - points[j]) <= reach) sets.unite(i, j);
    }
  }
  std::vector<Cluster> clusters;
  std::vector<std::size_t> slot(points.size(), SIZE_MAX);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t root = sets.find(i);
    if (slot[root] == SIZE_MAX) {
      slot[root] = clusters.size();
      Cluster c;
      c.id = clusters.size();
      c.anchor = points[i];
      clusters.push_back(std::move(c));
    }
    clusters[slot[root]].members.push_back(i);
  }
  return clusters;
}

double median_cluster_size(const std::vector<Cluster>& clusters) {
  if (clusters.empty()) return 0.0;
  std::vector<std::size_t> sizes;
  for (const auto& c : clusters) sizes.push_back(c.members.size());
  std::sort(sizes.begin(), sizes.end());
  const std::size_t n = sizes.size();
  if (n % 2 == 1) return static_cast<double>(sizes[n / 2]);
  return 0.5 * static_cast<double>(sizes[n / 2 - 1] + sizes[n / 2]);
}

std::vector<double> default_radius_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 32; ++i) grid.push_back(0.25 * i);
  return grid;
}

double select_radius(std::span<const Vec2> points, std::span<const double> candidate_radii, std::size_t n_min) {
  if (points.empty()) throw ConfigError("radius selection needs at least one point");
  if (n_min < 1) throw ConfigError("n_min must be at least 1");
  if (candidate_radii.empty()) throw ConfigError("radius grid is empty");
  for (std::size_t i = 1; i < candidate_radii.size(); ++i) {
    if (!(candidate_radii[i] > candidate_radii[i - 1])) throw ConfigError("radius grid must be strictly ascending");
  }
  double best = 0.0;
  for (double r : candidate_radii) {
    const double med = median_cluster_size(cluster_points(points, r));
    if (med >= static_cast<double>(n_min)) return r;
    best = std::max(best, med);
  }
  std::ostringstream msg;
  msg << "no candidate radius reaches median cluster size " << n_min << " (best median " << best << ")";
  throw RadiusSearchError(msg.str(), best);
}

std::optional<ClusterSplit> split_cluster(const Cluster& cluster, double train_fraction, std::uint64_t seed) {
  const std::size_t n = cluster.members.size();
  if (n < 2) return std::nullopt;
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> order = cluster.members;
  diff::Rng rng(diff::mix_seed(seed, cluster.id));
  std::shuffle(order.begin(), order.end(), rng.engine());
  ClusterSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split: " + name);
}

std::vector<Trajectory> sample_trajectories(const Cluster& cluster, const ClusterSplit& split, std::size_t s,
                                            std::size_t count, Split which, std::uint64_t seed,
                                            std::size_t retry_budget) {
  if (s < 1) throw ConfigError("trajectory length must be at least 1");
  const auto& pool = which == Split::kTrain ? split.train : cluster.members;
  if (pool.empty() || (which == Split::kTest && split.test.empty())) {
    throw SamplingExhaustedError("cluster " + std::to_string(cluster.id) + " has no points on the " +
                                 to_string(which) + " side");
  }
  const auto is_test_point = [&](std::size_t idx) {
    return std::binary_search(split.test.begin(), split.test.end(), idx);
  };

  diff::Rng rng(diff::mix_seed(seed, cluster.id * 2 + (which == Split::kTest ? 1 : 0)));
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < retry_budget && !accepted; ++attempt) {
      Trajectory t;
      t.cluster_id = cluster.id;
      t.split = which;
      for (std::size_t v = 0; v < s; ++v) {
        const std::size_t idx = pool[rng.index(pool.size())];
        t.vertices.push_back(idx);
        t.unseen.push_back(is_test_point(idx));
      }
      if (which == Split::kTest && std::none_of(t.unseen.begin(), t.unseen.end(), [](bool u) { return u; })) continue;
      out.push_back(std::move(t));
      accepted = true;
    }
    if (!accepted) {
      throw SamplingExhaustedError("retry budget exhausted while sampling test trajectories in cluster " +
                                   std::to_string(cluster.id));
    }
  }
  return out;
}

AssembledFeatures assemble_features(std::span<const Fingerprint* const> vertices) {
  if (vertices.empty()) throw DimensionError("trajectory has no vertices");
  const std::size_t nc = vertices.front()->subcarriers;
  const std::size_t band = vertices.front()->band_id;
  AssembledFeatures f;
  f.v_num.reserve(4 * vertices.size());
  f.v_cfr.reserve(3 * nc * vertices.size());
  for (const Fingerprint* fp : vertices) {
    if (fp->subcarriers != nc || fp->cfr.size() != 3 * nc) {
      throw DimensionError("fingerprints in one trajectory have different subcarrier counts (" + std::to_string(nc) +
                           " vs " + std::to_string(fp->subcarriers) + ")");
    }
    if (fp->band_id != band) throw DimensionError("fingerprints in one trajectory come from different bands");
    f.v_num.insert(f.v_num.end(), fp->geom.begin(), fp->geom.end());
    f.v_cfr.insert(f.v_cfr.end(), fp->cfr.begin(), fp->cfr.end());
  }
  return f;
}

TrajectorySample render_sample(const Trajectory& trajectory, std::span<const Fingerprint> fingerprints) {
  std::vector<const Fingerprint*> vertices;
  for (std::size_t idx : trajectory.vertices) vertices.push_back(&fingerprints[idx]);
  auto features = assemble_features(vertices);

  TrajectorySample sample;
  sample.s = vertices.size();
  sample.subcarriers = vertices.front()->subcarriers;
  sample.v_num = std::move(features.v_num);
  sample.v_cfr = std::move(features.v_cfr);
  sample.band_id = vertices.front()->band_id;
  sample.split = trajectory.split;
  sample.cluster_id = trajectory.cluster_id;
  sample.unseen_flags = trajectory.unseen;
  sample.contains_unseen =
      trajectory.split == Split::kTest && std::any_of(trajectory.unseen.begin(), trajectory.unseen.end(),
                                                      [](bool u) { return u; });
  std::array<double, 2> centroid{0.0, 0.0};
  for (const Fingerprint* fp : vertices) {
    sample.targets.push_back({fp->position.x, fp->position.y});
    sample.los_flags.push_back(fp->los);
    centroid[0] += fp->position.x;
    centroid[1] += fp->position.y;
  }
  centroid[0] /= static_cast<double>(sample.s);
  centroid[1] /= static_cast<double>(sample.s);
  sample.targets.push_back(centroid);
  return sample;
}

Dataset build_dataset(const Scene& scene, const DatasetConfig& config) {
  if (config.bands.empty()) throw ConfigError("dataset needs at least one band");
  for (const auto& b : config.bands) b.validate();
  const auto locations = sample_ue_positions(scene);

  // Geometry (and therefore coverage and LOS state) is band independent.
  std::vector<Vec2> covered;
  std::vector<std::vector<Fingerprint>> per_band(config.bands.size());
  for (const Vec2 ue : locations) {
    const PathSet probe = trace_paths(scene, ue, 1, config.bands.front().carrier_hz);
    if (probe.empty()) continue;
    covered.push_back(ue);
    for (std::size_t b = 0; b < config.bands.size(); ++b) {
      const PathSet paths = trace_paths(scene, ue, 1, config.bands[b].carrier_hz);
      per_band[b].push_back(make_fingerprint(paths, config.bands[b], ue, b));
    }
  }
  if (covered.empty()) throw ConfigError("no UE location in the scene has coverage");

  Dataset ds;
  ds.bands = config.bands;
  ds.locations = locations.size();
  ds.covered_locations = covered.size();
  ds.radius = select_radius(covered, config.radius_grid, config.n_min);
  const auto clusters = cluster_points(covered, ds.radius);

  for (const auto& cluster : clusters) {
    const auto split = split_cluster(cluster, config.train_fraction, config.seed);
    if (!split) continue;
    ++ds.clusters_used;
    const std::uint64_t cluster_seed = diff::mix_seed(config.seed, 0xc105 + cluster.id);
    auto trajectories =
        sample_trajectories(cluster, *split, config.s, config.train_per_cluster, Split::kTrain, cluster_seed,
                            config.retry_budget);
    auto test = sample_trajectories(cluster, *split, config.s, config.test_per_cluster, Split::kTest, cluster_seed,
                                    config.retry_budget);
    trajectories.insert(trajectories.end(), test.begin(), test.end());
    for (const auto& t : trajectories) {
      for (std::size_t b = 0; b < config.bands.size(); ++b) ds.samples.push_back(render_sample(t, per_band[b]));
    }
  }
  return ds;
}

namespace {

nlohmann::json sample_to_json(const TrajectorySample& s) {
  nlohmann::json j;
  j["v_num"] = s.v_num;
  nlohmann::json cfr = nlohmann::json::array();
  const std::size_t nc = s.subcarriers;
  for (std::size_t v = 0; v < s.s; ++v) {
    nlohmann::json vertex = nlohmann::json::array();
    for (std::size_t c = 0; c < 3; ++c) {
      const auto first = s.v_cfr.begin() + static_cast<std::ptrdiff_t>((v * 3 + c) * nc);
      vertex.push_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(nc)));
    }
    cfr.push_back(std::move(vertex));
  }
  j["v_cfr"] = std::move(cfr);
  j["targets"] = s.targets;
  j["band_id"] = s.band_id;
  j["split"] = to_string(s.split);
  j["contains_unseen"] = s.contains_unseen;
  j["los_flags"] = s.los_flags;
  j["unseen_flags"] = s.unseen_flags;
  j["cluster_id"] = s.cluster_id;
  return j;
}

TrajectorySample sample_from_json(const nlohmann::json& j) {
  TrajectorySample s;
  s.v_num = j.at("v_num").get<std::vector<double>>();
  const auto& cfr = j.at("v_cfr");
  s.s = cfr.size();
  if (s.s == 0 || s.v_num.size() != 4 * s.s) throw DimensionError("dataset line: v_num length must be 4s");
  s.subcarriers = cfr.at(0).at(0).size();
  for (const auto& vertex : cfr) {
    if (vertex.size() != 3) throw DimensionError("dataset line: each CFR vertex needs 3 channels");
    for (const auto& channel : vertex) {
      auto row = channel.get<std::vector<double>>();
      if (row.size() != s.subcarriers) throw DimensionError("dataset line: mixed subcarrier counts");
      s.v_cfr.insert(s.v_cfr.end(), row.begin(), row.end());
    }
  }
  s.targets = j.at("targets").get<std::vector<std::array<double, 2>>>();
  if (s.targets.size() != s.s + 1) throw DimensionError("dataset line: targets must have s+1 rows");
  s.band_id = j.at("band_id").get<std::size_t>();
  s.split = parse_split(j.at("split").get<std::string>());
  s.contains_unseen = j.value("contains_unseen", false);
  s.los_flags = j.at("los_flags").get<std::vector<bool>>();
  s.unseen_flags = j.value("unseen_flags", std::vector<bool>(s.s, false));
  s.cluster_id = j.value("cluster_id", std::size_t{0});
  return s;
}

}  // namespace

void write_dataset_jsonl(std::ostream& out, std::span<const TrajectorySample> samples) {
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

std::vector<TrajectorySample> read_dataset_jsonl(std::istream& in) {
  std::vector<TrajectorySample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::string& path, std::span<const TrajectorySample> samples) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset: " + path);
  write_dataset_jsonl(out, samples);
}

std::vector<TrajectorySample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset: " + path);
  return read_dataset_jsonl(in);
}

}  // namespace scadf
