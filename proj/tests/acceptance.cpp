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


// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scadf/channel_sim.hpp"
#include "scadf/diff/checkpoint.hpp"
#include "scadf/errors.hpp"
#include "scadf/mmd.hpp"
#include "scadf/model.hpp"
#include "scadf/pipeline.hpp"
#include "scadf/soft_moe.hpp"
#include "scadf/spatial_context.hpp"
#include "scadf/task_moe.hpp"

namespace scadf {
namespace {

// Tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr std::size_t kGradSamples = 200;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kRoutingPasses = 1000;
constexpr double kStochasticTol = 1e-9;
constexpr std::size_t kMmdInputs = 100;
constexpr double kMmdTol = 1e-12;
constexpr std::size_t kReductionInputs = 50;
constexpr double kReductionTol = 1e-10;
constexpr std::size_t kCfrPathSets = 200;
constexpr double kCfrRelTol = 1e-9;
constexpr std::size_t kClusterInstances = 200;
constexpr std::size_t kClusterPoints = 50;
constexpr std::size_t kOverfitSamples = 64;
constexpr std::size_t kOverfitEpochs = 300;
constexpr double kOverfitMse = 1e-2;
constexpr double kOverfitSeconds = 300.0;
constexpr double kSpatialContextFactor = 1.5;
constexpr std::uint64_t kBenchmarkSeeds[] = {1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Tensor normal(const Shape& shape, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(gen);
  return t;
}

// ---------------------------------------------------------------------------
// 1. Gradient exactness of the full objective.

Outcome gradient_exactness() {
  ExperimentConfig c;
  c.data.s = 2;
  c.model.s = 2;
  c.model.width = 8;
  c.model.experts = 2;
  c.model.depth = 1;
  c.model.heads = 2;
  diff::GradCheckOptions opts;
  opts.samples = kGradSamples;
  opts.rel_tolerance = kGradRelTol;
  const auto start = std::chrono::steady_clock::now();
  const auto report = run_grad_check(c, 2, opts);
  const double secs = seconds_since(start);
  return {report.passed() && report.entries.size() >= kGradSamples && secs < kGradSeconds,
          fmt("%zu scalars, %zu failures, max rel %.2e (tol %.0e), %.1f s", report.entries.size(), report.failures,
              report.max_rel_error, kGradRelTol, secs)};
}

// ---------------------------------------------------------------------------
// 2. Dispatch columns and combine rows are stochastic.

double stochastic_error(const RoutingState& r) {
  const Tensor& d = r.dispatch.value();
  const Tensor& c = r.combine.value();
  const std::size_t n = d.dim(d.rank() - 1), m = d.dim(d.rank() - 2), lead = d.size() / (m * n);
  double worst = 0.0;
  for (std::size_t b = 0; b < lead; ++b) {
    const double* dp = d.data().data() + b * m * n;
    const double* cp = c.data().data() + b * m * n;
    for (std::size_t j = 0; j < n; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < m; ++i) col += dp[i * n + j];
      worst = std::max(worst, std::abs(col - 1.0));
    }
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) row += cp[i * n + j];
      worst = std::max(worst, std::abs(row - 1.0));
    }
  }
  return worst;
}

Outcome routing_stochasticity() {
  ModelConfig mc;
  mc.s = 3;
  mc.subcarriers = 32;
  mc.patch = 8;
  mc.width = 16;
  mc.experts = 3;
  mc.heads = 2;
  std::mt19937_64 gen(2);
  double worst = 0.0;
  std::size_t matrices = 0;
  std::unique_ptr<LocalizationModel> model;
  for (std::size_t pass = 0; pass < kRoutingPasses; ++pass) {
    if (pass % 100 == 0) {
      model = std::make_unique<LocalizationModel>(mc, pass);
      // Sharpen the routers so the softmaxes are far from uniform.
      for (std::size_t i = 0; i < model->parameters().size(); ++i) {
        auto& p = model->parameters()[i];
        if (p.name.find("phi") != std::string::npos) {
          for (double& v : p.value.data()) v *= 20.0;
        }
      }
    }
    const double scale = std::exp(std::uniform_real_distribution<double>(-3.0, 3.0)(gen));
    const ModelOutput out =
        model->forward(normal({2, mc.s, 3, mc.subcarriers}, gen, scale), normal({2, 4 * mc.s}, gen, scale));
    for (const auto* group : {&out.fusion_routing, &out.task_routing}) {
      for (const auto& r : *group) {
        worst = std::max(worst, stochastic_error(r));
        ++matrices;
      }
    }
  }
  return {worst <= kStochasticTol && matrices == kRoutingPasses * (mc.depth + mc.tasks()),
          fmt("%zu passes, %zu router states, worst |sum - 1| = %.2e (tol %.0e)", kRoutingPasses, matrices, worst,
              kStochasticTol)};
}

// ---------------------------------------------------------------------------
// 3. MMD against a naive double sum.

double naive_mmd(const Tensor& a, const Tensor& b, double sigma) {
  const std::size_t m = a.dim(0), n = b.dim(0), w = a.dim(1);
  const auto k = [&](const Tensor& x, std::size_t i, const Tensor& y, std::size_t j) {
    long double d2 = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const long double diff = x.at({i, c}) - y.at({j, c});
      d2 += diff * diff;
    }
    return std::exp(-d2 / (2.0L * sigma * sigma));
  };
  long double aa = 0.0, bb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) aa += k(a, i, a, j);
    for (std::size_t j = 0; j < n; ++j) ab += k(a, i, b, j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) bb += k(b, i, b, j);
  }
  return static_cast<double>(aa / (m * m) + bb / (n * n) - 2.0L * ab / (m * n));
}

Outcome mmd_oracle() {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> size(1, 12);
  std::uniform_real_distribution<double> log_sigma(-1.0, 2.0);
  double worst = 0.0, worst_self = 0.0;
  bool symmetric = true;
  for (std::size_t t = 0; t < kMmdInputs; ++t) {
    const std::size_t m = size(gen), w = size(gen);
    const Tensor a = normal({m, w}, gen), b = normal({m, w}, gen);
    const double sigma = std::exp(log_sigma(gen));
    const double ab = mmd_sq(diff::constant(a), diff::constant(b), sigma).item();
    const double ba = mmd_sq(diff::constant(b), diff::constant(a), sigma).item();
    worst = std::max(worst, std::abs(ab - naive_mmd(a, b, sigma)));
    worst_self = std::max(worst_self, std::abs(mmd_sq(diff::constant(a), diff::constant(a), sigma).item()));
    symmetric = symmetric && ab == ba;
  }
  return {worst <= kMmdTol && worst_self <= kMmdTol && symmetric,
          fmt("%zu inputs, max |err| %.2e, max |MMD(A,A)| %.2e (tol %.0e), symmetry %s", kMmdInputs, worst,
              worst_self, kMmdTol, symmetric ? "exact" : "broken")};
}

// ---------------------------------------------------------------------------
// 4. One task with a tied router and no embedding is a soft MoE block plus pooling.

Outcome reduction_equivalence() {
  std::mt19937_64 gen(4);
  double worst = 0.0;
  for (std::size_t t = 0; t < kReductionInputs; ++t) {
    SoftMoeConfig bc;
    bc.width = 8;
    bc.experts = 1 + t % 4;
    bc.heads = 1 + t % 2;
    bc.hidden_mult = 2;
    ParameterStore task_store, block_store;
    Rng rng(100 + t);
    TaskMoe task(task_store, "t", TaskMoeConfig{bc, 1}, rng);
    SoftMoeBlock block(block_store, "b", bc, rng);
    LayerNorm pool_norm(block_store, "pool", bc.width);
    // Tie: copy every block parameter into the task model (the router gains a unit task axis).
    for (std::size_t i = 0; i < block_store.size(); ++i) {
      Parameter& p = block_store[i];
      std::string suffix = p.name.substr(p.name.find('.') + 1);
      if (p.name.rfind("pool.", 0) == 0) {
        p.value = task_store.get("t.output_norm." + suffix).value;
        continue;
      }
      if (suffix == "phi") suffix = "phi_task";
      Tensor& dst = task_store.get("t." + suffix).value;
      std::copy(p.value.data().begin(), p.value.data().end(), dst.data().begin());
    }
    task_store.get("t.task_embedding0").value.fill(0.0);
    const std::size_t batch = 1 + t % 3, tokens = 2 + t % 5;
    const Tensor x = normal({batch, tokens, bc.width}, gen);
    const TaskOutputs got = task(diff::constant(x));
    const SoftMoeBlockOutput want = block(diff::constant(x));
    const Tensor& h = got.residual[0].value();
    for (std::size_t i = 0; i < h.size(); ++i) worst = std::max(worst, std::abs(h[i] - want.output.value()[i]));
    const Tensor pooled = pool_tokens(want.output, pool_norm).value();
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      worst = std::max(worst, std::abs(got.pooled[0].value()[i] - pooled[i]));
    }
  }
  return {worst <= kReductionTol,
          fmt("%zu inputs, max |diff| %.2e (tol %.0e)", kReductionInputs, worst, kReductionTol)};
}

// ---------------------------------------------------------------------------
// 5. CFR linearity, amplitude scaling and delay shift.

double rel_diff(const std::vector<std::complex<double>>& a, const std::vector<std::complex<double>>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

Outcome cfr_physics() {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> amp(0.001, 0.2), phase(-std::numbers::pi, std::numbers::pi), delay(1e-8, 6e-7), u(0.0, 1.0);
  const auto random_paths = [&](std::size_t n) {
    PathSet ps(n);
    for (auto& p : ps) {
      p.amplitude = amp(gen);
      p.phase = phase(gen);
      p.delay = delay(gen);
    }
    return ps;
  };
  double linearity = 0.0, scaling = 0.0, shifting = 0.0;
  const auto bands = default_bands();
  for (std::size_t t = 0; t < kCfrPathSets; ++t) {
    const BandConfig& band = bands[t % bands.size()];
    const PathSet p = random_paths(1 + t % 7), q = random_paths(1 + t % 5);
    PathSet both = p;
    both.insert(both.end(), q.begin(), q.end());
    const auto hp = cfr_from_paths(p, band), hq = cfr_from_paths(q, band);
    std::vector<std::complex<double>> sum(hp.size());
    for (std::size_t l = 0; l < sum.size(); ++l) sum[l] = hp[l] + hq[l];
    linearity = std::max(linearity, rel_diff(cfr_from_paths(both, band), sum));

    const double c = 0.1 + 10.0 * u(gen);
    PathSet scaled = p;
    for (auto& path : scaled) path.amplitude *= c;
    std::vector<std::complex<double>> want(hp.size());
    for (std::size_t l = 0; l < hp.size(); ++l) want[l] = c * hp[l];
    scaling = std::max(scaling, rel_diff(cfr_from_paths(scaled, band), want));

    const double shift = 1e-7 * u(gen);
    PathSet shifted = p;
    for (auto& path : shifted) path.delay += shift;
    for (std::size_t l = 0; l < hp.size(); ++l) {
      want[l] = hp[l] * std::polar(1.0, -2.0 * std::numbers::pi * band.subcarrier_hz(l) * shift);
    }
    shifting = std::max(shifting, rel_diff(cfr_from_paths(shifted, band), want));
  }
  // Exact cases: no paths gives zeros; one unit path with no delay or phase gives ones.
  bool exact = true;
  for (const auto& h : cfr_from_paths({}, bands[0])) exact = exact && h == std::complex<double>(0.0, 0.0);
  Path unit;
  unit.amplitude = 1.0;
  for (const auto& h : cfr_from_paths({unit}, bands[1])) exact = exact && h == std::complex<double>(1.0, 0.0);
  const double worst = std::max({linearity, scaling, shifting});
  return {worst <= kCfrRelTol && exact,
          fmt("%zu path sets, rel err linearity %.1e, scaling %.1e, delay shift %.1e (tol %.0e); exact cases %s",
              kCfrPathSets, linearity, scaling, shifting, kCfrRelTol, exact ? "ok" : "wrong")};
}

// ---------------------------------------------------------------------------
// 6. Clustering against breadth-first connected components, radius search exhaustively.

std::vector<std::vector<std::size_t>> bfs_components(const std::vector<Vec2>& pts, double r) {
  std::vector<int> label(pts.size(), -1);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < pts.size(); ++s) {
    if (label[s] >= 0) continue;
    std::vector<std::size_t> members{s}, queue{s};
    label[s] = static_cast<int>(out.size());
    while (!queue.empty()) {
      const std::size_t i = queue.back();
      queue.pop_back();
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (label[j] < 0 && std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) <= 2.0 * r) {
          label[j] = label[s];
          members.push_back(j);
          queue.push_back(j);
        }
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

double oracle_median(const std::vector<std::vector<std::size_t>>& comps) {
  std::vector<double> sizes;
  for (const auto& c : comps) sizes.push_back(static_cast<double>(c.size()));
  std::sort(sizes.begin(), sizes.end());
  const std::size_t n = sizes.size();
  return n % 2 ? sizes[n / 2] : 0.5 * (sizes[n / 2 - 1] + sizes[n / 2]);
}

Outcome clustering() {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> coord(0.0, 30.0), radius(0.1, 3.0);
  std::uniform_int_distribution<std::size_t> n_min(1, 8);
  const auto grid = default_radius_grid();
  std::size_t cluster_mismatch = 0, radius_mismatch = 0, infeasible = 0;
  for (std::size_t t = 0; t < kClusterInstances; ++t) {
    std::vector<Vec2> pts(kClusterPoints);
    for (auto& p : pts) p = {coord(gen), coord(gen)};
    // Some exact duplicates and touching pairs.
    pts[1] = pts[0];
    const double r = radius(gen);
    pts[3] = {pts[2].x + 2.0 * r, pts[2].y};
    const auto got = cluster_points(pts, r);
    const auto want = bfs_components(pts, r);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i].members == want[i];
    cluster_mismatch += !same;

    const std::size_t need = n_min(gen);
    std::optional<double> expected;
    for (double g : grid) {
      if (oracle_median(bfs_components(pts, g)) >= static_cast<double>(need)) {
        expected = g;
        break;
      }
    }
    try {
      const double chosen = select_radius(pts, grid, need);
      radius_mismatch += !expected || *expected != chosen;
    } catch (const RadiusSearchError&) {
      radius_mismatch += expected.has_value();
      ++infeasible;
    }
  }
  return {cluster_mismatch == 0 && radius_mismatch == 0,
          fmt("%zu instances of %zu points: %zu cluster mismatches, %zu radius mismatches (%zu infeasible)",
              kClusterInstances, kClusterPoints, cluster_mismatch, radius_mismatch, infeasible)};
}

// ---------------------------------------------------------------------------
// 7. Dataset invariants and byte-identical regeneration.

Outcome dataset_invariants() {
  std::size_t samples = 0, test = 0, unseen_bad = 0, centroid_bad = 0, leaks = 0;
  bool identical = true;
  for (const ScenePreset preset : {ScenePreset::kOpen, ScenePreset::kCanyon, ScenePreset::kDense}) {
    const Scene scene = make_preset_scene(preset, 7);
    DatasetConfig dc;
    dc.seed = 7;
    const Dataset ds = build_dataset(scene, dc);
    std::ostringstream first, second;
    write_dataset_jsonl(first, ds.samples);
    write_dataset_jsonl(second, build_dataset(scene, dc).samples);
    identical = identical && first.str() == second.str();

    // Positions that training trajectories visit, per cluster.
    std::map<std::size_t, std::set<std::pair<double, double>>> train_positions;
    for (const auto& s : ds.samples) {
      if (s.split != Split::kTrain) continue;
      for (std::size_t v = 0; v < s.s; ++v) train_positions[s.cluster_id].insert({s.targets[v][0], s.targets[v][1]});
    }
    for (const auto& s : ds.samples) {
      ++samples;
      double cx = 0.0, cy = 0.0;
      for (std::size_t v = 0; v < s.s; ++v) {
        cx += s.targets[v][0];
        cy += s.targets[v][1];
      }
      cx /= static_cast<double>(s.s);
      cy /= static_cast<double>(s.s);
      const double scale = 1.0 + std::abs(cx) + std::abs(cy);
      centroid_bad += std::abs(s.targets[s.s][0] - cx) > 1e-12 * scale || std::abs(s.targets[s.s][1] - cy) > 1e-12 * scale;
      const bool any_unseen = std::count(s.unseen_flags.begin(), s.unseen_flags.end(), true) > 0;
      if (s.split == Split::kTrain) {
        unseen_bad += any_unseen || s.contains_unseen;
        continue;
      }
      ++test;
      unseen_bad += !any_unseen || !s.contains_unseen;
      const auto& seen = train_positions[s.cluster_id];
      for (std::size_t v = 0; v < s.s; ++v) {
        leaks += s.unseen_flags[v] && seen.count({s.targets[v][0], s.targets[v][1]}) != 0;
      }
    }
  }
  return {unseen_bad == 0 && centroid_bad == 0 && leaks == 0 && identical && test > 0,
          fmt("%zu samples (%zu test): unseen-rule violations %zu, unseen points seen in training %zu, centroid "
              "violations %zu, regeneration %s",
              samples, test, unseen_bad, leaks, centroid_bad, identical ? "byte-identical" : "differs")};
}

// ---------------------------------------------------------------------------
// 8. Overfit a fixed set of 64 samples.

Outcome overfit() {
  ExperimentConfig c;
  c.scenes = {"canyon"};
  c.seed = 8;
  c.train.epochs = kOverfitEpochs;
  // Small batches give enough steps for the cosine schedule to settle.
  c.train.batch = 4;
  c.train.lr = 2e-3;
  c.train.weight_decay = 0.0;
  c.train.alpha = 0.0;
  const std::vector<TrajectorySample> samples = build_samples(c);
  std::vector<const TrajectorySample*> fixed;
  for (const auto& s : samples) {
    if (s.split == Split::kTrain && fixed.size() < kOverfitSamples) fixed.push_back(&s);
  }
  const auto start = std::chrono::steady_clock::now();
  const TrainResult r = train_model(c, fixed, {});
  const double secs = seconds_since(start);
  const double mse = evaluate(*r.model, fixed, "train", r.best_epoch, {}).front().mse;
  return {mse < kOverfitMse && secs < kOverfitSeconds && fixed.size() == kOverfitSamples,
          fmt("%zu samples, %zu epochs: train MSE %.3e m^2 (threshold %.0e), %.0f s", fixed.size(), kOverfitEpochs, mse,
              kOverfitMse, secs)};
}

// ---------------------------------------------------------------------------
// 9 to 11. Seed-paired benchmark on mixed bands.

ExperimentConfig benchmark_config(Architecture arch, std::uint64_t seed) {
  ExperimentConfig c;
  c.scenes = {"canyon"};
  c.seed = seed;
  c.model.arch = arch;
  c.train.epochs = 20;
  c.train.batch = 32;
  c.train.lr = 1e-3;
  return c;
}

struct BenchmarkRun {
  double mse = 0.0;
  double nlos_mse = 0.0;
  double router_mmd = 0.0;
};

struct Benchmark {
  std::map<std::string, std::vector<BenchmarkRun>> runs;
  double seconds = 0.0;
};

const Benchmark& benchmark() {
  static const Benchmark result = [] {
    Benchmark b;
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::pair<std::string, std::function<ExperimentConfig(std::uint64_t)>>> arms = {
        {"scadf", [](auto s) { return benchmark_config(Architecture::kScadf, s); }},
        {"softmoe", [](auto s) { return benchmark_config(Architecture::kSoftMoe, s); }},
        {"fullcon", [](auto s) { return benchmark_config(Architecture::kFullCon, s); }},
        {"concat", [](auto s) { return benchmark_config(Architecture::kConcat, s); }},
        {"s1", [](auto s) { return apply_ablation(benchmark_config(Architecture::kScadf, s), AblationKnob::kNoSpatialContext); }},
        {"alpha0", [](auto s) { return apply_ablation(benchmark_config(Architecture::kScadf, s), AblationKnob::kNoMmd); }},
    };
    for (const std::uint64_t seed : kBenchmarkSeeds) {
      for (const auto& [name, make] : arms) {
        const ExperimentConfig config = make(seed);
        const ExperimentResult r = run_experiment(config);
        const MetricsRecord* rec = find_record(r.test, "test_mix");
        b.runs[name].push_back({rec->mse, rec->nlos_mse, rec->mmd_loss});
        std::printf("  benchmark %-7s seed %llu: mse %.4f nlos %.4f router mmd %.6e\n", name.c_str(),
                    static_cast<unsigned long long>(seed), rec->mse, rec->nlos_mse, rec->mmd_loss);
        std::fflush(stdout);
      }
    }
    b.seconds = seconds_since(start);
    return b;
  }();
  return result;
}

double mean_of(const std::vector<BenchmarkRun>& runs, double BenchmarkRun::*field) {
  double total = 0.0;
  for (const auto& r : runs) total += r.*field;
  return total / static_cast<double>(runs.size());
}

Outcome spatial_context() {
  const auto& b = benchmark();
  const double full = mean_of(b.runs.at("scadf"), &BenchmarkRun::nlos_mse);
  const double single = mean_of(b.runs.at("s1"), &BenchmarkRun::nlos_mse);
  const double ratio = single / full;
  return {ratio >= kSpatialContextFactor,
          fmt("NLOS test MSE over %zu seeds: s=1 %.3f vs s=5 %.3f, ratio %.2f (need >= %.1f)",
              std::size(kBenchmarkSeeds), single, full, ratio, kSpatialContextFactor)};
}

Outcome dynamic_fusion() {
  const auto& b = benchmark();
  const double scadf = mean_of(b.runs.at("scadf"), &BenchmarkRun::mse);
  const double softmoe = mean_of(b.runs.at("softmoe"), &BenchmarkRun::mse);
  const double fullcon = mean_of(b.runs.at("fullcon"), &BenchmarkRun::mse);
  const double concat = mean_of(b.runs.at("concat"), &BenchmarkRun::mse);
  return {scadf < softmoe && scadf < concat,
          fmt("mean test MSE over %zu seeds: scadf %.3f, softmoe %.3f, fullcon %.3f, concat %.3f",
              std::size(kBenchmarkSeeds), scadf, softmoe, fullcon, concat)};
}

Outcome mmd_effect() {
  const auto& b = benchmark();
  const auto& with = b.runs.at("scadf");
  const auto& without = b.runs.at("alpha0");
  std::size_t wins = 0;
  std::string pairs;
  for (std::size_t i = 0; i < with.size(); ++i) {
    wins += with[i].router_mmd > without[i].router_mmd;
    pairs += fmt(" %.6e/%.6e", with[i].router_mmd, without[i].router_mmd);
  }
  return {wins == with.size(),
          fmt("router MMD alpha=0.1 vs alpha=0 per seed:%s; %zu of %zu seeds higher", pairs.c_str(), wins, with.size())};
}

// ---------------------------------------------------------------------------
// 12. Checkpoint round trip and byte-identical metrics.

Outcome persistence() {
  ExperimentConfig c;
  c.scenes = {"canyon"};
  c.seed = 12;
  c.data.s = 2;
  c.model.s = 2;
  c.data.bands = default_bands();
  for (auto& band : c.data.bands) band.subcarriers = 16;
  c.model.subcarriers = 16;
  c.model.patch = 8;
  c.model.width = 8;
  c.model.experts = 2;
  c.model.heads = 2;
  c.model.depth = 1;
  c.train.epochs = 3;
  c.train.batch = 16;
  c.train.lr = 1e-3;
  const auto samples = build_samples(c);
  const DataSplits splits = split_samples(samples, c);
  const auto csv_of = [&](const std::vector<MetricsRecord>& records) {
    std::ostringstream out;
    write_metrics_csv(out, records, c.model.tasks());
    return out.str();
  };
  const TrainResult a = train_model(c, splits.train, splits.validation);
  const TrainResult b = train_model(c, splits.train, splits.validation);
  const bool history_identical = csv_of(a.history) == csv_of(b.history);

  std::stringstream blob;
  diff::write_checkpoint(blob, make_checkpoint(*a.model));
  const auto loaded = model_from_checkpoint(diff::read_checkpoint(blob));
  EvalOptions eo;
  eo.band_labels = band_labels(c.data.bands);
  const auto before = evaluate(*a.model, splits.test_mix, "test_mix", 0, eo);
  const auto after = evaluate(*loaded, splits.test_mix, "test_mix", 0, eo);
  const bool mse_exact = before.front().mse == after.front().mse && csv_of(before) == csv_of(after);
  return {history_identical && mse_exact,
          fmt("reloaded test MSE %.17g vs %.17g (%s); training CSV of two runs %s", after.front().mse,
              before.front().mse, mse_exact ? "bit-exact" : "differs", history_identical ? "byte-identical" : "differs")};
}

}  // namespace
}  // namespace scadf

int main(int argc, char** argv) {
  using namespace scadf;
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"gradient exactness", gradient_exactness},
      {"routing stochasticity", routing_stochasticity},
      {"MMD oracle equivalence", mmd_oracle},
      {"reduction equivalence", reduction_equivalence},
      {"CFR physics", cfr_physics},
      {"clustering correctness", clustering},
      {"dataset invariants", dataset_invariants},
      {"overfit capacity", overfit},
      {"spatial context helps NLOS", spatial_context},
      {"dynamic fusion ordering", dynamic_fusion},
      {"MMD raises router diversity", mmd_effect},
      {"persistence", persistence},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && selected.count(i + 1) == 0) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    failures += !outcome.pass;
    std::printf("[%s] %2zu %s: %s\n", outcome.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
