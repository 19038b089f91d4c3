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


#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "scadf/diff/parameters.hpp"
#include "scadf/errors.hpp"
#include "scadf/spatial_context.hpp"

namespace scadf {
namespace {

// Union-find over all pairs; independent of the library's traversal order.
std::vector<std::vector<std::size_t>> oracle_components(const std::vector<Vec2>& pts, double r) {
  std::vector<std::size_t> parent(pts.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      if (norm(pts[i] - pts[j]) <= 2.0 * r) parent[find(i)] = find(j);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pts.size(); ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) out.push_back(members);
  std::sort(out.begin(), out.end());
  return out;
}

double oracle_median(const std::vector<std::vector<std::size_t>>& comps) {
  std::vector<double> sizes;
  for (const auto& c : comps) sizes.push_back(static_cast<double>(c.size()));
  std::sort(sizes.begin(), sizes.end());
  const std::size_t n = sizes.size();
  return n % 2 ? sizes[n / 2] : 0.5 * (sizes[n / 2 - 1] + sizes[n / 2]);
}

std::vector<Vec2> random_points(std::size_t n, std::uint64_t seed, double extent) {
  diff::Rng rng(seed);
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(0.0, extent), rng.uniform(0.0, extent)});
  return pts;
}

std::vector<std::vector<std::size_t>> as_sets(const std::vector<Cluster>& clusters) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& c : clusters) out.push_back(c.members);
  return out;
}

TEST(Clustering, MatchesUnionFindOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pts = random_points(60, seed, 30.0);
    for (double r : {0.25, 1.0, 1.75, 3.0}) {
      const auto clusters = cluster_points(pts, r);
      EXPECT_EQ(as_sets(clusters), oracle_components(pts, r)) << "seed " << seed << " r " << r;
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        EXPECT_EQ(clusters[c].id, c);
        EXPECT_TRUE(std::is_sorted(clusters[c].members.begin(), clusters[c].members.end()));
        EXPECT_EQ(clusters[c].anchor, pts[clusters[c].members.front()]);
        if (c > 0) {
          EXPECT_LT(clusters[c - 1].members.front(), clusters[c].members.front());
        }
      }
    }
  }
}

TEST(Clustering, TouchingBallsLink) {
  const std::vector<Vec2> pts{{0.0, 0.0}, {2.0, 0.0}, {4.5, 0.0}};
  EXPECT_EQ(cluster_points(pts, 1.0).size(), 2u);  // distance exactly 2r links
  EXPECT_EQ(cluster_points(pts, 1.25).size(), 1u);
}

TEST(Clustering, CoarsensAsRadiusGrows) {
  const auto pts = random_points(80, 17, 40.0);
  const auto grid = default_radius_grid();
  std::vector<std::size_t> label_prev;
  std::size_t count_prev = pts.size() + 1;
  for (double r : grid) {
    const auto clusters = cluster_points(pts, r);
    EXPECT_LE(clusters.size(), count_prev);
    count_prev = clusters.size();
    std::vector<std::size_t> label(pts.size());
    for (const auto& c : clusters) {
      for (std::size_t m : c.members) label[m] = c.id;
    }
    // Points together at a smaller radius stay together.
    if (!label_prev.empty()) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
          if (label_prev[i] == label_prev[j]) {
            EXPECT_EQ(label[i], label[j]);
          }
        }
      }
    }
    label_prev = label;
  }
}

TEST(Clustering, MedianIsNotMonotoneInRadius) {
  // Three chains of five points (spacing 1) and two isolated points. Merging
  // the first two chains lowers the median from 5 to (1 + 5) / 2 = 3.
  std::vector<Vec2> pts;
  for (double start : {0.0, 10.0, 300.0}) {
    for (int i = 0; i < 5; ++i) pts.push_back({start + i, 0.0});
  }
  pts.push_back({100.0, 0.0});
  pts.push_back({200.0, 0.0});
  EXPECT_DOUBLE_EQ(median_cluster_size(cluster_points(pts, 0.5)), 5.0);
  EXPECT_DOUBLE_EQ(median_cluster_size(cluster_points(pts, 3.0)), 3.0);
}

TEST(Clustering, MedianOfEvenCountAverages) {
  std::vector<Cluster> clusters(4);
  const std::size_t sizes[] = {1, 4, 2, 9};
  for (std::size_t i = 0; i < 4; ++i) clusters[i].members.resize(sizes[i]);
  EXPECT_DOUBLE_EQ(median_cluster_size(clusters), 3.0);
  EXPECT_DOUBLE_EQ(median_cluster_size({}), 0.0);
}

TEST(RadiusSearch, MatchesExhaustiveScan) {
  const auto grid = default_radius_grid();
  ASSERT_EQ(grid.size(), 32u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.25);
  EXPECT_DOUBLE_EQ(grid.back(), 8.0);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto pts = random_points(50, 100 + seed, 50.0);
    for (std::size_t n_min : {1u, 2u, 4u, 8u}) {
      double expected = -1.0;
      for (double r : grid) {
        if (oracle_median(oracle_components(pts, r)) >= static_cast<double>(n_min)) {
          expected = r;
          break;
        }
      }
      if (expected < 0.0) {
        EXPECT_THROW(select_radius(pts, grid, n_min), RadiusSearchError);
      } else {
        EXPECT_DOUBLE_EQ(select_radius(pts, grid, n_min), expected) << "seed " << seed << " n_min " << n_min;
      }
    }
  }
}

TEST(RadiusSearch, FailureCarriesBestMedian) {
  const std::vector<Vec2> pts{{0, 0}, {0.4, 0}, {50, 50}};
  const std::vector<double> grid{0.25, 0.5};
  try {
    select_radius(pts, grid, 3);
    FAIL() << "expected RadiusSearchError";
  } catch (const RadiusSearchError& e) {
    // Sizes {2, 1} at r = 0.25 give median 1.5.
    EXPECT_DOUBLE_EQ(e.best_median(), 1.5);
  }
  const std::vector<double> unsorted{0.5, 0.25};
  EXPECT_THROW(select_radius(pts, unsorted, 1), ConfigError);
}

Cluster make_cluster(std::size_t id, std::vector<std::size_t> members) {
  Cluster c;
  c.id = id;
  c.members = std::move(members);
  return c;
}

TEST(ClusterSplit, SizesFollowRoundedFraction) {
  const Cluster ten = make_cluster(3, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto s10 = split_cluster(ten, 0.7, 1);
  ASSERT_TRUE(s10);
  EXPECT_EQ(s10->train.size(), 7u);
  EXPECT_EQ(s10->test.size(), 3u);
  std::vector<std::size_t> joined = s10->train;
  joined.insert(joined.end(), s10->test.begin(), s10->test.end());
  std::sort(joined.begin(), joined.end());
  EXPECT_EQ(joined, ten.members);

  const auto s2 = split_cluster(make_cluster(0, {4, 9}), 0.7, 1);
  ASSERT_TRUE(s2);
  EXPECT_EQ(s2->train.size(), 1u);
  EXPECT_EQ(s2->test.size(), 1u);
  // Extreme fractions are clamped so both sides stay non-empty.
  EXPECT_EQ(split_cluster(ten, 1.0, 1)->test.size(), 1u);
  EXPECT_EQ(split_cluster(ten, 0.0, 1)->train.size(), 1u);
  EXPECT_FALSE(split_cluster(make_cluster(0, {5}), 0.7, 1));
  EXPECT_EQ(split_cluster(ten, 0.7, 1)->test, s10->test);
}

TEST(Trajectories, TrainDrawsStayOnTrainSide) {
  const Cluster c = make_cluster(2, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto split = *split_cluster(c, 0.7, 5);
  const auto trajs = sample_trajectories(c, split, 5, 200, Split::kTrain, 9);
  ASSERT_EQ(trajs.size(), 200u);
  std::set<std::size_t> seen;
  for (const auto& t : trajs) {
    EXPECT_EQ(t.vertices.size(), 5u);
    EXPECT_EQ(t.split, Split::kTrain);
    EXPECT_EQ(t.cluster_id, 2u);
    for (std::size_t v = 0; v < 5; ++v) {
      EXPECT_TRUE(std::binary_search(split.train.begin(), split.train.end(), t.vertices[v]));
      EXPECT_FALSE(t.unseen[v]);
      seen.insert(t.vertices[v]);
    }
  }
  // 1000 uniform draws from 7 points cover all of them.
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Trajectories, TestDrawsAreUniformOverValidSequences) {
  // Cluster {0,1,2,3}, test side {3}: the valid length-2 sequences are the
  // 16 - 9 = 7 ordered pairs containing 3, each with probability 1/7.
  const Cluster c = make_cluster(0, {0, 1, 2, 3});
  ClusterSplit split{{0, 1, 2}, {3}};
  const std::size_t draws = 7000;
  const auto trajs = sample_trajectories(c, split, 2, draws, Split::kTest, 4);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
  for (const auto& t : trajs) {
    ASSERT_EQ(t.vertices.size(), 2u);
    ASSERT_TRUE(t.vertices[0] == 3 || t.vertices[1] == 3);
    for (std::size_t v = 0; v < 2; ++v) EXPECT_EQ(t.unseen[v], t.vertices[v] == 3);
    ++counts[{t.vertices[0], t.vertices[1]}];
  }
  EXPECT_EQ(counts.size(), 7u);
  // Binomial sd at p = 1/7 is about 29; allow five of them.
  for (const auto& [pair, n] : counts) EXPECT_NEAR(static_cast<double>(n), draws / 7.0, 150.0);
}

TEST(Trajectories, RetryBudgetAndContracts) {
  const Cluster c = make_cluster(0, {0, 1, 2, 3});
  ClusterSplit split{{0, 1, 2}, {3}};
  EXPECT_THROW(sample_trajectories(c, split, 2, 1, Split::kTest, 0, 0), SamplingExhaustedError);
  ClusterSplit no_test{{0, 1, 2, 3}, {}};
  EXPECT_THROW(sample_trajectories(c, no_test, 2, 1, Split::kTest, 0), SamplingExhaustedError);
  EXPECT_THROW(sample_trajectories(c, split, 0, 1, Split::kTrain, 0), ConfigError);
  EXPECT_EQ(sample_trajectories(c, split, 3, 5, Split::kTrain, 0).size(), 5u);
}

Fingerprint fake_fingerprint(Vec2 pos, std::size_t nc, std::size_t band, bool los, double tag) {
  Fingerprint fp;
  fp.position = pos;
  fp.subcarriers = nc;
  fp.band_id = band;
  fp.los = los;
  fp.geom = {tag, tag + 0.1, tag + 0.2, tag + 0.3};
  for (std::size_t i = 0; i < 3 * nc; ++i) fp.cfr.push_back(tag * 100.0 + static_cast<double>(i));
  return fp;
}

TEST(Features, AssembleAndRenderLayout) {
  std::vector<Fingerprint> fps;
  for (std::size_t i = 0; i < 4; ++i) {
    fps.push_back(fake_fingerprint({static_cast<double>(i), 2.0 * i}, 3, 1, i % 2 == 0, static_cast<double>(i)));
  }
  Trajectory t;
  t.cluster_id = 6;
  t.vertices = {3, 0, 3};
  t.unseen = {true, false, true};
  t.split = Split::kTest;
  const TrajectorySample s = render_sample(t, fps);
  EXPECT_EQ(s.s, 3u);
  EXPECT_EQ(s.subcarriers, 3u);
  ASSERT_EQ(s.v_num.size(), 12u);
  EXPECT_EQ(s.v_num[0], 3.0);
  EXPECT_EQ(s.v_num[4], 0.0);
  EXPECT_DOUBLE_EQ(s.v_num[11], 3.3);
  ASSERT_EQ(s.v_cfr.size(), 27u);
  EXPECT_EQ(s.v_cfr[0], 300.0);
  EXPECT_EQ(s.v_cfr[9], 0.0);
  EXPECT_EQ(s.v_cfr[26], 308.0);
  ASSERT_EQ(s.targets.size(), 4u);
  EXPECT_EQ(s.targets[1], (std::array<double, 2>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(s.targets[3][0], 2.0);
  EXPECT_DOUBLE_EQ(s.targets[3][1], 4.0);
  EXPECT_EQ(s.los_flags, (std::vector<bool>{false, true, false}));
  EXPECT_TRUE(s.contains_unseen);
  EXPECT_EQ(s.band_id, 1u);
  EXPECT_EQ(s.cluster_id, 6u);

  Fingerprint other_band = fps[0];
  other_band.band_id = 0;
  std::vector<const Fingerprint*> mixed{&fps[0], &other_band};
  EXPECT_THROW(assemble_features(mixed), DimensionError);
  Fingerprint wide = fake_fingerprint({0, 0}, 4, 1, true, 0.0);
  std::vector<const Fingerprint*> ragged{&fps[0], &wide};
  EXPECT_THROW(assemble_features(ragged), DimensionError);
}

class DatasetFixture : public ::testing::Test {
 protected:
  static DatasetConfig small_config() {
    DatasetConfig cfg;
    cfg.s = 3;
    cfg.n_min = 4;
    cfg.train_per_cluster = 4;
    cfg.test_per_cluster = 2;
    cfg.seed = 21;
    for (auto& b : cfg.bands) b.subcarriers = 16;
    return cfg;
  }
  static Scene small_scene() {
    Scene s = make_preset_scene(ScenePreset::kCanyon, 8);
    s.ue_count = 80;
    s.ue_clumps = 10;
    return s;
  }
};

TEST_F(DatasetFixture, InvariantsHold) {
  const DatasetConfig cfg = small_config();
  const Dataset ds = build_dataset(small_scene(), cfg);
  ASSERT_GT(ds.clusters_used, 0u);
  EXPECT_EQ(ds.samples.size(), ds.clusters_used * (cfg.train_per_cluster + cfg.test_per_cluster) * cfg.bands.size());
  EXPECT_LE(ds.covered_locations, ds.locations);
  std::map<std::size_t, std::size_t> per_band;
  for (const auto& s : ds.samples) {
    ++per_band[s.band_id];
    EXPECT_EQ(s.s, cfg.s);
    EXPECT_EQ(s.v_num.size(), 4 * cfg.s);
    EXPECT_EQ(s.v_cfr.size(), 3 * 16 * cfg.s);
    ASSERT_EQ(s.targets.size(), cfg.s + 1);
    double cx = 0.0, cy = 0.0;
    for (std::size_t v = 0; v < cfg.s; ++v) {
      cx += s.targets[v][0];
      cy += s.targets[v][1];
    }
    EXPECT_NEAR(s.targets.back()[0], cx / cfg.s, 1e-12);
    EXPECT_NEAR(s.targets.back()[1], cy / cfg.s, 1e-12);
    const bool any_unseen = std::find(s.unseen_flags.begin(), s.unseen_flags.end(), true) != s.unseen_flags.end();
    if (s.split == Split::kTrain) {
      EXPECT_FALSE(any_unseen);
      EXPECT_FALSE(s.contains_unseen);
    } else {
      EXPECT_TRUE(any_unseen);
      EXPECT_TRUE(s.contains_unseen);
    }
    for (std::size_t v = 0; v < cfg.s; ++v) {
      EXPECT_TRUE(small_scene().bounds.contains({s.targets[v][0], s.targets[v][1]}));
    }
  }
  EXPECT_EQ(per_band.size(), cfg.bands.size());
  for (const auto& [band, n] : per_band) EXPECT_EQ(n, ds.samples.size() / cfg.bands.size());
}

TEST_F(DatasetFixture, BandRenderingsShareGeometry) {
  const Dataset ds = build_dataset(small_scene(), small_config());
  const std::size_t bands = ds.bands.size();
  for (std::size_t i = 0; i + bands <= ds.samples.size(); i += bands) {
    for (std::size_t b = 1; b < bands; ++b) {
      EXPECT_EQ(ds.samples[i + b].targets, ds.samples[i].targets);
      EXPECT_EQ(ds.samples[i + b].los_flags, ds.samples[i].los_flags);
      EXPECT_EQ(ds.samples[i + b].band_id, b);
    }
  }
}

TEST_F(DatasetFixture, DeterministicAndJsonlRoundTripIsExact) {
  const Dataset a = build_dataset(small_scene(), small_config());
  const Dataset b = build_dataset(small_scene(), small_config());
  std::ostringstream out_a, out_b;
  write_dataset_jsonl(out_a, a.samples);
  write_dataset_jsonl(out_b, b.samples);
  EXPECT_EQ(out_a.str(), out_b.str());

  std::istringstream in(out_a.str());
  const auto back = read_dataset_jsonl(in);
  ASSERT_EQ(back.size(), a.samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& x = back[i];
    const auto& y = a.samples[i];
    EXPECT_EQ(x.v_num, y.v_num);
    EXPECT_EQ(x.v_cfr, y.v_cfr);
    EXPECT_EQ(x.targets, y.targets);
    EXPECT_EQ(x.band_id, y.band_id);
    EXPECT_EQ(x.split, y.split);
    EXPECT_EQ(x.los_flags, y.los_flags);
    EXPECT_EQ(x.unseen_flags, y.unseen_flags);
    EXPECT_EQ(x.contains_unseen, y.contains_unseen);
    EXPECT_EQ(x.cluster_id, y.cluster_id);
  }

  DatasetConfig other = small_config();
  other.seed = 22;
  std::ostringstream out_c;
  write_dataset_jsonl(out_c, build_dataset(small_scene(), other).samples);
  EXPECT_NE(out_c.str(), out_a.str());
}

TEST(DatasetIo, RejectsMalformedLines) {
  std::istringstream bad_json("{not json}\n");
  EXPECT_THROW(read_dataset_jsonl(bad_json), ConfigError);
  std::istringstream short_num(
      R"({"v_num":[1,2,3],"v_cfr":[[[1],[2],[3]]],"targets":[[0,0],[0,0]],"band_id":0,"split":"train",)"
      R"("contains_unseen":false,"los_flags":[true]})"
      "\n");
  EXPECT_THROW(read_dataset_jsonl(short_num), DimensionError);
}

}  // namespace
}  // namespace scadf
