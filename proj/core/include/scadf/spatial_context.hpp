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
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scadf/channel_sim.hpp"

namespace scadf {

struct Cluster {
  std::size_t id = 0;
  /// Ascending indices into the clustered point list.
  std::vector<std::size_t> members;
  /// Position of the lowest-index member.
  Vec2 anchor;
};

/// Connected components of the graph linking points whose r-balls overlap
/// (distance <= 2r). Clusters are ordered by their smallest member index.
std::vector<Cluster> cluster_points(std::span<const Vec2> points, double radius);

double median_cluster_size(const std::vector<Cluster>& clusters);

/// 0.25 m to 8 m in 0.25 m steps.
std::vector<double> default_radius_grid();

/// Smallest grid radius whose median cluster size reaches `n_min`.
/// Throws RadiusSearchError (carrying the best median seen) when none does.
double select_radius(std::span<const Vec2> points, std::span<const double> candidate_radii, std::size_t n_min);

struct ClusterSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// round(train_fraction * |members|) training points, clamped so both sides are
/// non-empty. Returns nullopt for singleton clusters (the cluster is skipped).
std::optional<ClusterSplit> split_cluster(const Cluster& cluster, double train_fraction, std::uint64_t seed);

enum class Split { kTrain, kTest };
std::string to_string(Split split);
Split parse_split(const std::string& name);

/// Location indices of one trajectory plus which of them are test-only points.
struct Trajectory {
  std::size_t cluster_id = 0;
  std::vector<std::size_t> vertices;
  std::vector<bool> unseen;
  Split split = Split::kTrain;
};

/// Train draws take vertices uniformly with replacement from the train side.
/// Test draws take vertices from the whole cluster and keep a draw only if it
/// holds at least one test-only point; each requested trajectory gets
/// `retry_budget` attempts before SamplingExhaustedError.
std::vector<Trajectory> sample_trajectories(const Cluster& cluster, const ClusterSplit& split, std::size_t s,
                                            std::size_t count, Split which, std::uint64_t seed,
                                            std::size_t retry_budget = 100);

struct TrajectorySample {
  std::size_t s = 0;
  std::size_t subcarriers = 0;
  /// [theta_t, theta_r, d, g] per vertex, vertex-major; length 4s.
  std::vector<double> v_num;
  /// s x 3 x N_c row-major.
  std::vector<double> v_cfr;
  /// s vertex coordinates followed by their centroid.
  std::vector<std::array<double, 2>> targets;
  std::size_t band_id = 0;
  Split split = Split::kTrain;
  bool contains_unseen = false;
  std::vector<bool> los_flags;
  std::vector<bool> unseen_flags;
  std::size_t cluster_id = 0;
};

struct AssembledFeatures {
  std::vector<double> v_num;
  std::vector<double> v_cfr;
};

/// Concatenates geometry scalars and stacks CFR tensors in vertex order.
/// Throws DimensionError when fingerprints disagree on band or subcarrier count.
AssembledFeatures assemble_features(std::span<const Fingerprint* const> vertices);

TrajectorySample render_sample(const Trajectory& trajectory, std::span<const Fingerprint> fingerprints);

struct DatasetConfig {
  std::vector<BandConfig> bands = default_bands();
  std::size_t s = 5;
  std::size_t n_min = 8;
  std::vector<double> radius_grid = default_radius_grid();
  double train_fraction = 0.7;
  std::size_t train_per_cluster = 12;
  std::size_t test_per_cluster = 4;
  std::size_t retry_budget = 100;
  std::uint64_t seed = 0;
};

struct Dataset {
  double radius = 0.0;
  std::size_t locations = 0;
  std::size_t covered_locations = 0;
  std::size_t clusters_used = 0;
  std::vector<BandConfig> bands;
  std::vector<TrajectorySample> samples;
};

/// Traces every UE location, clusters covered locations at r*, splits each
/// cluster 70/30, samples trajectories and renders each of them once per band.
Dataset build_dataset(const Scene& scene, const DatasetConfig& config);

void write_dataset_jsonl(std::ostream& out, std::span<const TrajectorySample> samples);
std::vector<TrajectorySample> read_dataset_jsonl(std::istream& in);
void save_dataset(const std::string& path, std::span<const TrajectorySample> samples);
std::vector<TrajectorySample> load_dataset(const std::string& path);

}  // namespace scadf
