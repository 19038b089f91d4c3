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

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scadf/diff/checkpoint.hpp"
#include "scadf/diff/grad_check.hpp"
#include "scadf/mmd.hpp"
#include "scadf/model.hpp"
#include "scadf/spatial_context.hpp"

namespace scadf {

enum class SplitMode { kMix, kOod };
std::string to_string(SplitMode mode);
SplitMode parse_split_mode(const std::string& name);

enum class AblationKnob { kNone, kNoSpatialContext, kSingleExpert, kStaticFusion, kNoMmd };
std::string to_string(AblationKnob knob);
AblationKnob parse_ablation(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch = 64;
  double lr = 1e-4;
  double weight_decay = 5e-5;
  double alpha = 0.1;
  MmdSign mmd_sign = MmdSign::kPenalizeSimilarity;
  /// Share of train trajectories held back for checkpoint selection.
  double validation_fraction = 0.1;
};

struct ExperimentConfig {
  /// Scene JSON files, or preset names (open, canyon, dense) generated from the seed.
  std::vector<std::string> scenes{"open", "canyon", "dense"};
  /// Optional prebuilt dataset (JSONL); when set, `scenes` is ignored.
  std::string dataset_file;
  DatasetConfig data;
  ModelConfig model;
  TrainConfig train;
  SplitMode split = SplitMode::kMix;
  /// Carrier frequencies in GHz kept out of training in ood mode.
  std::vector<double> held_out_ghz;
  AblationKnob ablation = AblationKnob::kNone;
  std::uint64_t seed = 0;

  /// Throws ConfigError on inconsistent settings or missing files.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Relative file paths are resolved against `base_dir` when it is non-empty.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::string& base_dir = "");
ExperimentConfig load_experiment(const std::string& path);

/// Returns a copy with the knob applied; identical budgets otherwise.
ExperimentConfig apply_ablation(ExperimentConfig config, AblationKnob knob);

/// Builds (or loads) the samples for an experiment.
std::vector<TrajectorySample> build_samples(const ExperimentConfig& config);

struct DataSplits {
  std::vector<const TrajectorySample*> train;
  std::vector<const TrajectorySample*> validation;
  /// Test samples on training bands.
  std::vector<const TrajectorySample*> test_mix;
  /// Test samples on held-out bands (ood mode only).
  std::vector<const TrajectorySample*> test_ood;
};

/// Partitions samples by split flag and band. Validation takes whole
/// trajectories (every band rendering of the same vertex set).
DataSplits split_samples(std::span<const TrajectorySample> samples, const ExperimentConfig& config);

/// Fixed column order:
///   epoch,split,band,samples,vertices,mse,los_vertices,los_mse,nlos_vertices,nlos_mse,
///   nlos_u_vertices,nlos_u_mse,centroid_mse,loss,coord_loss,mmd_loss,lr,
///   task_0_mse..task_{K-1}_mse,task_0_dispatch_entropy..task_{K-1}_dispatch_entropy
/// Empty slices leave their MSE fields blank. On evaluation rows mmd_loss is
/// the mean pairwise MMD between task routers.
struct MetricsRecord {
  static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

  long epoch = 0;
  std::string split;
  std::string band = "all";
  std::size_t samples = 0;
  std::size_t vertices = 0;
  double mse = kNaN;
  std::size_t los_vertices = 0;
  double los_mse = kNaN;
  std::size_t nlos_vertices = 0;
  double nlos_mse = kNaN;
  /// Vertices that are both unseen during training and NLOS.
  std::size_t nlos_u_vertices = 0;
  double nlos_u_mse = kNaN;
  double centroid_mse = kNaN;
  double loss = kNaN;
  double coord_loss = kNaN;
  double mmd_loss = kNaN;
  double lr = kNaN;
  std::vector<double> task_mse;
  std::vector<double> task_dispatch_entropy;
};

std::string metrics_header(std::size_t tasks);
std::string metrics_row(const MetricsRecord& record, std::size_t tasks);
void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records, std::size_t tasks);
void save_metrics_csv(const std::string& path, std::span<const MetricsRecord> records, std::size_t tasks);

/// Human-readable band labels ("2.6GHz") indexed by band id.
std::vector<std::string> band_labels(std::span<const BandConfig> bands);

struct EvalOptions {
  std::size_t batch = 64;
  double alpha = 0.1;
  MmdSign mmd_sign = MmdSign::kPenalizeSimilarity;
  std::vector<std::string> band_labels;
  /// Per-batch routing entropy summaries, one JSON line per batch.
  std::ostream* routing_dump = nullptr;
};

/// Record "all" followed by one record per band present. Vertex predictions
/// define the point errors; the centroid is reported separately.
std::vector<MetricsRecord> evaluate(const LocalizationModel& model, std::span<const TrajectorySample* const> samples,
                                    const std::string& split, long epoch, const EvalOptions& options);

struct TrainOptions {
  /// One CSV line per optimizer step: step,epoch,loss,coord_loss,mmd_loss,lr.
  std::ostream* step_log = nullptr;
  /// Evaluate the validation set each epoch (needed for best-checkpoint selection).
  bool validate_each_epoch = true;
};

struct TrainResult {
  std::unique_ptr<LocalizationModel> model;  ///< parameters of the best validation epoch
  std::vector<MetricsRecord> history;
  long best_epoch = 0;
  double best_validation_mse = MetricsRecord::kNaN;
  std::size_t steps = 0;
};

/// Minibatch AdamW with cosine decay over the whole run. Throws NumericalError
/// on a non-finite loss and ContractError if a test sample reaches the loop.
TrainResult train_model(const ExperimentConfig& config, std::span<const TrajectorySample* const> train,
                        std::span<const TrajectorySample* const> validation, const TrainOptions& options = {});

struct ExperimentResult {
  TrainResult training;
  std::vector<MetricsRecord> test;
};

/// Builds data, trains, and evaluates the best model on the test slices.
ExperimentResult run_experiment(const ExperimentConfig& config, const TrainOptions& options = {});

/// First record with the given split and band, or null.
const MetricsRecord* find_record(std::span<const MetricsRecord> records, const std::string& split,
                                 const std::string& band = "all");

diff::Checkpoint make_checkpoint(const LocalizationModel& model, nlohmann::json meta = nlohmann::json::object());
std::unique_ptr<LocalizationModel> model_from_checkpoint(const diff::Checkpoint& ckpt);

/// Finite-difference check of the full objective on a random batch drawn from
/// the configured model dimensions.
diff::GradCheckReport run_grad_check(const ExperimentConfig& config, std::size_t batch,
                                     const diff::GradCheckOptions& options);

}  // namespace scadf
