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


#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scadf/errors.hpp"
#include "scadf/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scadf;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

void print_summary(const std::vector<MetricsRecord>& records) {
  for (const auto& r : records) {
    if (r.band != "all") continue;
    std::cout << r.split << ": samples=" << r.samples << " mse=" << r.mse << " los=" << r.los_mse
              << " nlos=" << r.nlos_mse << " nlos_u=" << r.nlos_u_mse << " centroid=" << r.centroid_mse << "\n";
  }
}

int cmd_gen_scene(const std::string& preset, std::uint64_t seed, std::size_t ue_count, const std::string& out) {
  Scene scene = make_preset_scene(parse_preset(preset), seed);
  if (ue_count > 0) scene.ue_count = ue_count;
  scene.validate();
  save_scene(out, scene);
  std::cout << "wrote " << out << " (" << scene.walls.size() << " walls)\n";
  return 0;
}

struct BuildArgs {
  std::string config;
  std::string scene;
  std::string out;
  std::size_t s = 5;
  std::size_t n_min = 8;
  std::size_t train_per_cluster = 12;
  std::size_t test_per_cluster = 4;
  std::vector<double> bands;
  std::vector<double> radius_grid;
  std::uint64_t seed = 0;
};

/// Band values of at least 1e6 are read as Hz, smaller ones as GHz.
double carrier_hz(double value) { return value >= 1e6 ? value : value * 1e9; }

int cmd_build_dataset(const BuildArgs& args) {
  std::vector<TrajectorySample> samples;
  if (!args.config.empty()) {
    samples = build_samples(load_experiment(args.config));
  } else {
    if (args.scene.empty()) throw ConfigError("build-dataset needs --scene or --config");
    DatasetConfig dc;
    dc.s = args.s;
    dc.n_min = args.n_min;
    dc.train_per_cluster = args.train_per_cluster;
    dc.test_per_cluster = args.test_per_cluster;
    dc.seed = args.seed;
    if (!args.bands.empty()) {
      dc.bands.clear();
      for (double b : args.bands) dc.bands.push_back({carrier_hz(b)});
    }
    if (!args.radius_grid.empty()) dc.radius_grid = args.radius_grid;
    Dataset built = build_dataset(load_scene(args.scene), dc);
    std::cout << "radius " << built.radius << " m, " << built.covered_locations << "/" << built.locations
              << " covered locations, " << built.clusters_used << " clusters\n";
    samples = std::move(built.samples);
  }
  save_dataset(args.out, samples);
  std::cout << "wrote " << samples.size() << " samples to " << args.out << "\n";
  return 0;
}

json checkpoint_meta(const ExperimentConfig& config, const TrainResult& result) {
  std::vector<double> ghz;
  for (const auto& b : config.data.bands) ghz.push_back(b.carrier_hz / 1e9);
  return {{"experiment", to_json(config)},
          {"bands_ghz", ghz},
          {"best_epoch", result.best_epoch},
          {"best_validation_mse", std::isnan(result.best_validation_mse) ? json(nullptr)
                                                                         : json(result.best_validation_mse)},
          {"steps", result.steps}};
}

int run_and_save(const ExperimentConfig& config, const std::string& out_dir, const std::string& routing_path) {
  fs::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();
  std::ofstream steps = open_output((fs::path(out_dir) / "steps.csv").string());
  steps << "step,epoch,loss,coord_loss,mmd_loss,lr\n";
  TrainOptions options;
  options.step_log = &steps;

  const std::vector<TrajectorySample> samples = build_samples(config);
  const DataSplits splits = split_samples(samples, config);
  std::cout << "train " << splits.train.size() << ", validation " << splits.validation.size() << ", test "
            << splits.test_mix.size() << " (in-band) + " << splits.test_ood.size() << " (held-out band)\n";
  TrainResult result = train_model(config, splits.train, splits.validation, options);

  const std::size_t tasks = result.model->config().tasks();
  save_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.history, tasks);
  diff::save_checkpoint((fs::path(out_dir) / "model.bin").string(),
                        make_checkpoint(*result.model, checkpoint_meta(config, result)));
  std::ofstream(fs::path(out_dir) / "config.json") << to_json(config).dump(2) << '\n';

  EvalOptions eval;
  eval.alpha = config.train.alpha;
  eval.mmd_sign = config.train.mmd_sign;
  eval.band_labels = band_labels(config.data.bands);
  std::ofstream routing;
  if (!routing_path.empty()) {
    routing = open_output(routing_path);
    eval.routing_dump = &routing;
  }
  std::vector<MetricsRecord> test = evaluate(*result.model, splits.test_mix, "test_mix", result.best_epoch, eval);
  if (config.split == SplitMode::kOod) {
    auto ood = evaluate(*result.model, splits.test_ood, "test_ood", result.best_epoch, eval);
    test.insert(test.end(), ood.begin(), ood.end());
  }
  save_metrics_csv((fs::path(out_dir) / "test.csv").string(), test, tasks);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "best epoch " << result.best_epoch << " of " << config.train.epochs << ", " << result.steps
            << " steps, " << seconds << " s\n";
  print_summary(test);
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& report,
             const std::string& split, std::size_t batch, const std::string& routing_path) {
  const diff::Checkpoint ckpt = diff::load_checkpoint(ckpt_path);
  const auto model = model_from_checkpoint(ckpt);
  const std::vector<TrajectorySample> samples = load_dataset(data_path);
  std::vector<const TrajectorySample*> selected;
  for (const auto& s : samples) {
    if (split == "all" || to_string(s.split) == split) selected.push_back(&s);
  }
  EvalOptions eval;
  eval.batch = batch;
  if (ckpt.meta.contains("experiment")) {
    const json& train = ckpt.meta.at("experiment").value("train", json::object());
    eval.alpha = train.value("alpha", eval.alpha);
    if (train.contains("mmd_sign")) eval.mmd_sign = parse_mmd_sign(train.at("mmd_sign").get<std::string>());
  }
  if (ckpt.meta.contains("bands_ghz")) {
    std::vector<BandConfig> bands;
    for (double g : ckpt.meta.at("bands_ghz").get<std::vector<double>>()) bands.push_back({g * 1e9});
    eval.band_labels = band_labels(bands);
  }
  std::ofstream routing;
  if (!routing_path.empty()) {
    routing = open_output(routing_path);
    eval.routing_dump = &routing;
  }
  const long epoch = ckpt.meta.value("best_epoch", 0L);
  const auto records = evaluate(*model, selected, split, epoch, eval);
  save_metrics_csv(report, records, model->config().tasks());
  print_summary(records);
  return 0;
}

int cmd_grad_check(const std::string& config_path, std::size_t batch, std::size_t samples, std::uint64_t seed) {
  const ExperimentConfig config = load_experiment(config_path);
  diff::GradCheckOptions options;
  options.samples = samples;
  options.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  const auto report = run_grad_check(config, batch, options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "checked " << report.entries.size() << " scalars in " << seconds << " s; max relative error "
            << report.max_rel_error << "; failures " << report.failures << "\n";
  for (const auto& e : report.worst) {
    std::cout << "  " << e.name << "[" << e.index << "] analytic=" << e.analytic << " numeric=" << e.numeric
              << " rel=" << e.rel_error << (e.pass ? "" : "  FAIL") << "\n";
  }
  std::cout << (report.passed() ? "PASS" : "FAIL") << "\n";
  return report.passed() ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scadf: channel fingerprint localization with soft mixture-of-experts fusion"};
  app.require_subcommand(1);

  std::string preset = "canyon";
  std::uint64_t scene_seed = 0;
  std::size_t ue_count = 0;
  std::string scene_out = "scene.json";
  auto* gen = app.add_subcommand("gen-scene", "Write a synthetic scene description");
  gen->add_option("--preset", preset, "open | canyon | dense")->capture_default_str();
  gen->add_option("--seed", scene_seed, "Scene seed")->capture_default_str();
  gen->add_option("--ue-count", ue_count, "Override the number of UE locations");
  gen->add_option("--out", scene_out, "Output scene JSON")->capture_default_str();

  BuildArgs build;
  auto* ds = app.add_subcommand("build-dataset", "Trace a scene and write trajectory samples (JSONL)");
  ds->add_option("--config", build.config, "Experiment config (builds every configured scene)");
  ds->add_option("--scene", build.scene, "Scene JSON");
  ds->add_option("--out", build.out, "Output JSONL")->required();
  ds->add_option("--s", build.s, "Trajectory length")->capture_default_str();
  ds->add_option("--n-min", build.n_min, "Minimum median cluster size")->capture_default_str();
  ds->add_option("--train-per-cluster", build.train_per_cluster)->capture_default_str();
  ds->add_option("--test-per-cluster", build.test_per_cluster)->capture_default_str();
  ds->add_option("--bands", build.bands, "Carrier frequencies, e.g. 2.6e9,6e9,28e9")->delimiter(',');
  ds->add_option("--radius-grid", build.radius_grid, "Ascending candidate radii in metres")->delimiter(',');
  ds->add_option("--seed", build.seed)->capture_default_str();

  std::string config_path;
  std::string out_dir = "run";
  std::string routing_path;
  auto* train = app.add_subcommand("train", "Train a model and write checkpoint + metrics");
  train->add_option("--config", config_path, "Experiment config JSON")->required();
  train->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  train->add_option("--dump-routing", routing_path, "Write routing entropy summaries for the test set");

  std::string knob;
  auto* ablate = app.add_subcommand("ablate", "Train with one ablation knob applied");
  ablate->add_option("--config", config_path, "Experiment config JSON")->required();
  ablate->add_option("--knob", knob, "no_spatial_context | single_expert | static_fusion | no_mmd")->required();
  ablate->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  ablate->add_option("--dump-routing", routing_path, "Write routing entropy summaries for the test set");

  std::string ckpt_path, data_path, report = "report.csv", split = "test";
  std::size_t eval_batch = 64;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  eval->add_option("--data", data_path, "Dataset JSONL")->required();
  eval->add_option("--report", report, "Metrics CSV")->capture_default_str();
  eval->add_option("--split", split, "train | test | all")->capture_default_str();
  eval->add_option("--batch", eval_batch)->capture_default_str();
  eval->add_option("--dump-routing", routing_path, "Write routing entropy summaries");

  std::size_t gc_batch = 2;
  std::size_t gc_samples = 200;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full objective");
  gc->add_option("--config", config_path, "Experiment config JSON")->required();
  gc->add_option("--batch", gc_batch)->capture_default_str();
  gc->add_option("--samples", gc_samples, "Scalars to sample")->capture_default_str();
  gc->add_option("--seed", gc_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_scene(preset, scene_seed, ue_count, scene_out);
    if (*ds) return cmd_build_dataset(build);
    if (*train) return run_and_save(load_experiment(config_path), out_dir, routing_path);
    if (*ablate) return run_and_save(apply_ablation(load_experiment(config_path), parse_ablation(knob)), out_dir,
                                     routing_path);
    if (*eval) return cmd_eval(ckpt_path, data_path, report, split, eval_batch, routing_path);
    if (*gc) return cmd_grad_check(config_path, gc_batch, gc_samples, gc_seed);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const RadiusSearchError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DegenerateGeometryError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SamplingExhaustedError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NoCoverageError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
