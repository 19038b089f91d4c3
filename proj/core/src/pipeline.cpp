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


#include "scadf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "scadf/diff/optimizer.hpp"
#include "scadf/errors.hpp"

namespace scadf {

namespace {

namespace fs = std::filesystem;
using diff::mix_seed;
using nlohmann::json;

constexpr double kNaN = MetricsRecord::kNaN;

bool is_preset_name(const std::string& name) { return name == "open" || name == "canyon" || name == "dense"; }

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& item : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

std::set<std::size_t> held_out_band_ids(const ExperimentConfig& config) {
  std::set<std::size_t> ids;
  if (config.split != SplitMode::kOod) return ids;
  for (double ghz : config.held_out_ghz) {
    for (std::size_t b = 0; b < config.data.bands.size(); ++b) {
      if (std::abs(config.data.bands[b].carrier_hz - ghz * 1e9) <= 1e-6 * ghz * 1e9) ids.insert(b);
    }
  }
  return ids;
}

ModelConfig effective_model(const ExperimentConfig& config) {
  ModelConfig m = config.model;
  m.s = config.data.s;
  m.subcarriers = config.data.bands.empty() ? m.subcarriers : config.data.bands.front().subcarriers;
  return m;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct Mean {
  double sum = 0.0;
  double weight = 0.0;
  void add(double x, double w = 1.0) {
    sum += x * w;
    weight += w;
  }
  double value() const { return weight > 0.0 ? sum / weight : kNaN; }
};

/// Running sums for one slice of vertices and loss terms.
struct Accumulator {
  std::size_t samples = 0;
  Mean all, los, nlos, nlos_u, centroid;
  std::vector<Mean> task;
  std::vector<Mean> entropy;
  Mean loss, coord, mmd;

  explicit Accumulator(std::size_t tasks) : task(tasks), entropy(tasks) {}

  void add_predictions(const Tensor& pred, std::span<const TrajectorySample* const> batch) {
    const std::size_t k = task.size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const TrajectorySample& s = *batch[i];
      for (std::size_t t = 0; t < k; ++t) {
        const double dx = pred[(i * k + t) * 2] - s.targets[t][0];
        const double dy = pred[(i * k + t) * 2 + 1] - s.targets[t][1];
        const double err = dx * dx + dy * dy;
        task[t].add(err);
        if (t + 1 == k) {
          centroid.add(err);
          continue;
        }
        all.add(err);
        if (s.los_flags[t]) {
          los.add(err);
        } else {
          nlos.add(err);
          if (t < s.unseen_flags.size() && s.unseen_flags[t]) nlos_u.add(err);
        }
      }
    }
    samples += batch.size();
  }

  MetricsRecord finish(long epoch, const std::string& split, const std::string& band) const {
    MetricsRecord r;
    r.epoch = epoch;
    r.split = split;
    r.band = band;
    r.samples = samples;
    r.vertices = static_cast<std::size_t>(all.weight);
    r.mse = all.value();
    r.los_vertices = static_cast<std::size_t>(los.weight);
    r.los_mse = los.value();
    r.nlos_vertices = static_cast<std::size_t>(nlos.weight);
    r.nlos_mse = nlos.value();
    r.nlos_u_vertices = static_cast<std::size_t>(nlos_u.weight);
    r.nlos_u_mse = nlos_u.value();
    r.centroid_mse = centroid.value();
    r.loss = loss.value();
    r.coord_loss = coord.value();
    r.mmd_loss = mmd.value();
    for (const Mean& m : task) r.task_mse.push_back(m.value());
    for (const Mean& m : entropy) r.task_dispatch_entropy.push_back(m.value());
    return r;
  }
};

/// Mean over batch and experts of the token entropy of each dispatch column.
double dispatch_entropy(const Tensor& dispatch) {
  const std::size_t m = dispatch.dim(-2);
  const std::size_t n = dispatch.dim(-1);
  const std::size_t batches = dispatch.size() / (m * n);
  double total = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        const double p = dispatch[(b * m + i) * n + j];
        if (p > 0.0) total -= p * std::log(p);
      }
    }
  }
  return total / static_cast<double>(batches * n);
}

json routing_summary(const std::string& name, const RoutingState& routing) {
  const Tensor& d = routing.dispatch.value();
  const Tensor& c = routing.combine.value();
  const std::size_t m = d.dim(-2);
  const std::size_t n = d.dim(-1);
  const std::size_t batches = d.size() / (m * n);
  std::vector<double> columns(n, 0.0);
  std::vector<double> rows(m, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double p = d[(b * m + i) * n + j];
        const double q = c[(b * m + i) * n + j];
        if (p > 0.0) columns[j] -= p * std::log(p) / static_cast<double>(batches);
        if (q > 0.0) rows[i] -= q * std::log(q) / static_cast<double>(batches);
      }
    }
  }
  return {{"name", name}, {"dispatch_column_entropy", columns}, {"combine_row_entropy", rows}};
}

double sigma_for(const LocalizationModel& model) { return MmdConfig::bandwidth_for_width(model.config().width); }

void check_sample_shapes(std::span<const TrajectorySample* const> samples, const ModelConfig& model,
                         const std::string& what) {
  for (const auto* s : samples) {
    if (s->s != model.s || s->subcarriers != model.subcarriers) {
      throw ConfigError(what + " sample has s=" + std::to_string(s->s) + ", N_c=" + std::to_string(s->subcarriers) +
                        " but the model expects s=" + std::to_string(model.s) +
                        ", N_c=" + std::to_string(model.subcarriers));
    }
  }
}

double grad_norm(const Parameter& p) {
  double total = 0.0;
  for (double g : p.grad.data()) total += g * g;
  return std::sqrt(total);
}

std::string numerical_diagnostics(const ParameterStore& store, double lr, std::size_t step) {
  std::vector<std::pair<double, std::string>> norms;
  for (std::size_t i = 0; i < store.size(); ++i) norms.emplace_back(grad_norm(store[i]), store[i].name);
  std::sort(norms.begin(), norms.end(), [](const auto& a, const auto& b) {
    if (std::isnan(a.first) != std::isnan(b.first)) return std::isnan(a.first);
    return a.first > b.first;
  });
  std::ostringstream msg;
  msg << "non-finite loss at step " << step << " (last lr " << lr << "); largest gradient norms of the previous step:";
  for (std::size_t i = 0; i < std::min<std::size_t>(5, norms.size()); ++i) {
    msg << ' ' << norms[i].second << '=' << norms[i].first;
  }
  return msg.str();
}

}  // namespace

std::string to_string(SplitMode mode) { return mode == SplitMode::kMix ? "mix" : "ood"; }

SplitMode parse_split_mode(const std::string& name) {
  if (name == "mix") return SplitMode::kMix;
  if (name == "ood") return SplitMode::kOod;
  throw ConfigError("unknown split mode: " + name + " (expected mix|ood)");
}

std::string to_string(AblationKnob knob) {
  switch (knob) {
    case AblationKnob::kNone: return "none";
    case AblationKnob::kNoSpatialContext: return "no_spatial_context";
    case AblationKnob::kSingleExpert: return "single_expert";
    case AblationKnob::kStaticFusion: return "static_fusion";
    case AblationKnob::kNoMmd: return "no_mmd";
  }
  return "none";
}

AblationKnob parse_ablation(const std::string& name) {
  for (auto knob : {AblationKnob::kNone, AblationKnob::kNoSpatialContext, AblationKnob::kSingleExpert,
                    AblationKnob::kStaticFusion, AblationKnob::kNoMmd}) {
    if (to_string(knob) == name) return knob;
  }
  throw ConfigError("unknown ablation knob: " + name +
                    " (expected no_spatial_context|single_expert|static_fusion|no_mmd)");
}

void ExperimentConfig::validate() const {
  if (dataset_file.empty()) {
    if (scenes.empty()) throw ConfigError("experiment needs at least one scene or a dataset file");
    for (const auto& scene : scenes) {
      if (!is_preset_name(scene) && !fs::exists(scene)) throw ConfigError("scene file not found: " + scene);
    }
  } else if (!fs::exists(dataset_file)) {
    throw ConfigError("dataset file not found: " + dataset_file);
  }
  if (data.bands.empty()) throw ConfigError("experiment needs at least one band");
  for (const auto& band : data.bands) {
    band.validate();
    if (band.subcarriers != data.bands.front().subcarriers) {
      throw ConfigError("all bands must share the subcarrier count");
    }
  }
  if (data.s < 1) throw ConfigError("trajectory length s must be at least 1");
  effective_model(*this).validate();
  if (train.batch < 1) throw ConfigError("batch size must be positive");
  if (!(train.lr >= 0.0) || !(train.weight_decay >= 0.0)) throw ConfigError("lr and weight decay must be >= 0");
  if (!(train.alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  if (!(train.validation_fraction >= 0.0 && train.validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  if (split == SplitMode::kOod) {
    const auto held = held_out_band_ids(*this);
    if (held.size() != held_out_ghz.size() || held.empty()) {
      throw ConfigError("ood mode needs held_out_ghz entries that each match a configured band");
    }
    if (held.size() >= data.bands.size()) throw ConfigError("ood mode must keep at least one band for training");
  } else if (!held_out_ghz.empty()) {
    throw ConfigError("held_out_ghz only applies to split mode ood");
  }
}

json to_json(const ExperimentConfig& c) {
  std::vector<double> ghz;
  for (const auto& b : c.data.bands) ghz.push_back(b.carrier_hz / 1e9);
  json data = {{"bands_ghz", ghz},
               {"bandwidth_mhz", c.data.bands.empty() ? 50.0 : c.data.bands.front().bandwidth_hz / 1e6},
               {"subcarriers", c.data.bands.empty() ? 64 : c.data.bands.front().subcarriers},
               {"s", c.data.s},
               {"n_min", c.data.n_min},
               {"radius_grid", c.data.radius_grid},
               {"train_fraction", c.data.train_fraction},
               {"train_per_cluster", c.data.train_per_cluster},
               {"test_per_cluster", c.data.test_per_cluster},
               {"retry_budget", c.data.retry_budget}};
  json model = to_json(effective_model(c));
  json train = {{"epochs", c.train.epochs},
                {"batch", c.train.batch},
                {"lr", c.train.lr},
                {"weight_decay", c.train.weight_decay},
                {"alpha", c.train.alpha},
                {"mmd_sign", to_string(c.train.mmd_sign)},
                {"validation_fraction", c.train.validation_fraction}};
  json j = {{"scenes", c.scenes}, {"data", data},       {"model", model},
            {"train", train},     {"split", to_string(c.split)}, {"held_out_ghz", c.held_out_ghz},
            {"ablation", to_string(c.ablation)}, {"seed", c.seed}};
  if (!c.dataset_file.empty()) j["dataset"] = c.dataset_file;
  return j;
}

ExperimentConfig experiment_from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  reject_unknown_keys(j, {"scenes", "dataset", "data", "model", "train", "split", "held_out_ghz", "baseline",
                          "ablation", "seed"},
                      "experiment config");
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("scenes")) c.scenes = j.at("scenes").get<std::vector<std::string>>();
    for (auto& scene : c.scenes) {
      if (!is_preset_name(scene)) scene = resolve(scene, base_dir);
    }
    if (j.contains("dataset")) c.dataset_file = resolve(j.at("dataset").get<std::string>(), base_dir);
    if (j.contains("data")) {
      const json& d = j.at("data");
      reject_unknown_keys(d, {"bands_ghz", "bandwidth_mhz", "subcarriers", "s", "n_min", "radius_grid",
                              "train_fraction", "train_per_cluster", "test_per_cluster", "retry_budget"},
                          "data");
      const double bandwidth = d.value("bandwidth_mhz", 50.0) * 1e6;
      const std::size_t subcarriers = d.value("subcarriers", std::size_t{64});
      std::vector<double> ghz{2.6, 6.0, 28.0};
      if (d.contains("bands_ghz")) ghz = d.at("bands_ghz").get<std::vector<double>>();
      c.data.bands.clear();
      for (double g : ghz) c.data.bands.push_back({g * 1e9, bandwidth, subcarriers});
      c.data.s = d.value("s", c.data.s);
      c.data.n_min = d.value("n_min", c.data.n_min);
      if (d.contains("radius_grid")) c.data.radius_grid = d.at("radius_grid").get<std::vector<double>>();
      c.data.train_fraction = d.value("train_fraction", c.data.train_fraction);
      c.data.train_per_cluster = d.value("train_per_cluster", c.data.train_per_cluster);
      c.data.test_per_cluster = d.value("test_per_cluster", c.data.test_per_cluster);
      c.data.retry_budget = d.value("retry_budget", c.data.retry_budget);
    }
    if (j.contains("model")) {
      json m = j.at("model");
      if (m.contains("s") && m.at("s").get<std::size_t>() != c.data.s) {
        throw ConfigError("model.s disagrees with data.s");
      }
      m["s"] = c.data.s;
      m["subcarriers"] = c.data.bands.front().subcarriers;
      c.model = model_config_from_json(m);
    }
    if (j.contains("baseline")) c.model.arch = parse_architecture(j.at("baseline").get<std::string>());
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown_keys(t, {"epochs", "batch", "lr", "weight_decay", "alpha", "mmd_sign", "validation_fraction"},
                          "train");
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch = t.value("batch", c.train.batch);
      c.train.lr = t.value("lr", c.train.lr);
      c.train.weight_decay = t.value("weight_decay", c.train.weight_decay);
      c.train.alpha = t.value("alpha", c.train.alpha);
      if (t.contains("mmd_sign")) c.train.mmd_sign = parse_mmd_sign(t.at("mmd_sign").get<std::string>());
      c.train.validation_fraction = t.value("validation_fraction", c.train.validation_fraction);
    }
    if (j.contains("split")) c.split = parse_split_mode(j.at("split").get<std::string>());
    if (j.contains("held_out_ghz")) c.held_out_ghz = j.at("held_out_ghz").get<std::vector<double>>();
    if (j.contains("ablation")) {
      const AblationKnob knob = parse_ablation(j.at("ablation").get<std::string>());
      c = apply_ablation(std::move(c), knob);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  c.model = effective_model(c);
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j, fs::path(path).parent_path().string());
}

ExperimentConfig apply_ablation(ExperimentConfig config, AblationKnob knob) {
  config.ablation = knob;
  switch (knob) {
    case AblationKnob::kNone: break;
    case AblationKnob::kNoSpatialContext:
      config.data.s = 1;
      config.model.s = 1;
      break;
    case AblationKnob::kSingleExpert: config.model.experts = 1; break;
    case AblationKnob::kStaticFusion: break;  // routers frozen in train_model
    case AblationKnob::kNoMmd: config.train.alpha = 0.0; break;
  }
  return config;
}

std::vector<TrajectorySample> build_samples(const ExperimentConfig& config) {
  if (!config.dataset_file.empty()) return load_dataset(config.dataset_file);
  std::vector<TrajectorySample> samples;
  for (std::size_t i = 0; i < config.scenes.size(); ++i) {
    const std::string& name = config.scenes[i];
    const Scene scene = is_preset_name(name) ? make_preset_scene(parse_preset(name), mix_seed(config.seed, 0x5ce0 + i))
                                             : load_scene(name);
    DatasetConfig dc = config.data;
    dc.seed = mix_seed(config.seed, 0xda7a + i);
    Dataset built = build_dataset(scene, dc);
    std::move(built.samples.begin(), built.samples.end(), std::back_inserter(samples));
  }
  return samples;
}

DataSplits split_samples(std::span<const TrajectorySample> samples, const ExperimentConfig& config) {
  const auto held = held_out_band_ids(config);
  // Consecutive renderings of the same trajectory share split, cluster and targets.
  std::vector<std::size_t> group(samples.size(), 0);
  std::size_t groups = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const bool same = i > 0 && samples[i].split == samples[i - 1].split &&
                      samples[i].cluster_id == samples[i - 1].cluster_id &&
                      samples[i].targets == samples[i - 1].targets;
    if (!same) ++groups;
    group[i] = groups - 1;
  }
  std::vector<std::size_t> train_groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == Split::kTrain && (train_groups.empty() || train_groups.back() != group[i])) {
      train_groups.push_back(group[i]);
    }
  }
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(config.train.validation_fraction * static_cast<double>(train_groups.size())));
  if (config.train.validation_fraction > 0.0 && n_val == 0 && train_groups.size() >= 2) n_val = 1;
  Rng rng(mix_seed(config.seed, 0x7a11d));
  for (std::size_t i = train_groups.size(); i > 1; --i) std::swap(train_groups[i - 1], train_groups[rng.index(i)]);
  const std::set<std::size_t> val_groups(train_groups.begin(), train_groups.begin() + n_val);

  DataSplits out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TrajectorySample* s = &samples[i];
    const bool held_band = held.count(s->band_id) != 0;
    if (s->split == Split::kTest) {
      (held_band ? out.test_ood : out.test_mix).push_back(s);
    } else if (!held_band) {
      (val_groups.count(group[i]) ? out.validation : out.train).push_back(s);
    }
  }
  return out;
}

std::string metrics_header(std::size_t tasks) {
  std::string h =
      "epoch,split,band,samples,vertices,mse,los_vertices,los_mse,nlos_vertices,nlos_mse,nlos_u_vertices,"
      "nlos_u_mse,centroid_mse,loss,coord_loss,mmd_loss,lr";
  for (std::size_t k = 0; k < tasks; ++k) h += ",task_" + std::to_string(k) + "_mse";
  for (std::size_t k = 0; k < tasks; ++k) h += ",task_" + std::to_string(k) + "_dispatch_entropy";
  return h;
}

std::string metrics_row(const MetricsRecord& r, std::size_t tasks) {
  std::string row = std::to_string(r.epoch) + "," + r.split + "," + r.band + "," + std::to_string(r.samples) + "," +
                    std::to_string(r.vertices) + "," + format_double(r.mse) + "," + std::to_string(r.los_vertices) +
                    "," + format_double(r.los_mse) + "," + std::to_string(r.nlos_vertices) + "," +
                    format_double(r.nlos_mse) + "," + std::to_string(r.nlos_u_vertices) + "," +
                    format_double(r.nlos_u_mse) + "," + format_double(r.centroid_mse) + "," +
                    format_double(r.loss) + "," + format_double(r.coord_loss) + "," + format_double(r.mmd_loss) +
                    "," + format_double(r.lr);
  for (std::size_t k = 0; k < tasks; ++k) row += "," + format_double(k < r.task_mse.size() ? r.task_mse[k] : kNaN);
  for (std::size_t k = 0; k < tasks; ++k) {
    row += "," + format_double(k < r.task_dispatch_entropy.size() ? r.task_dispatch_entropy[k] : kNaN);
  }
  return row;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records, std::size_t tasks) {
  out << metrics_header(tasks) << '\n';
  for (const auto& r : records) out << metrics_row(r, tasks) << '\n';
}

void save_metrics_csv(const std::string& path, std::span<const MetricsRecord> records, std::size_t tasks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write metrics: " + path);
  write_metrics_csv(out, records, tasks);
}

std::vector<std::string> band_labels(std::span<const BandConfig> bands) {
  std::vector<std::string> labels;
  for (const auto& b : bands) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%gGHz", b.carrier_hz / 1e9);
    labels.emplace_back(buf);
  }
  return labels;
}

std::vector<MetricsRecord> evaluate(const LocalizationModel& model, std::span<const TrajectorySample* const> samples,
                                    const std::string& split, long epoch, const EvalOptions& options) {
  const ModelConfig& mc = model.config();
  const std::size_t tasks = mc.tasks();
  check_sample_shapes(samples, mc, "evaluation");
  if (samples.empty()) {
    std::clog << "note: empty evaluation slice '" << split << "'\n";
    MetricsRecord empty = Accumulator(tasks).finish(epoch, split, "all");
    return {empty};
  }
  if (options.batch < 1) throw ConfigError("evaluation batch must be positive");
  std::map<std::size_t, std::vector<const TrajectorySample*>> by_band;
  for (const auto* s : samples) by_band[s->band_id].push_back(s);

  const double sigma = sigma_for(model);
  Accumulator total(tasks);
  std::vector<MetricsRecord> band_records;
  std::size_t batch_index = 0;
  for (const auto& [band_id, members] : by_band) {
    const std::string label = band_id < options.band_labels.size() ? options.band_labels[band_id]
                                                                     : "band" + std::to_string(band_id);
    Accumulator acc(tasks);
    for (std::size_t start = 0; start < members.size(); start += options.batch) {
      const std::size_t count = std::min(options.batch, members.size() - start);
      const std::span<const TrajectorySample* const> chunk(members.data() + start, count);
      const Batch batch = make_batch(chunk, model.normalizer());
      const ModelOutput out = model.forward(batch);
      const double w = static_cast<double>(count);
      const double coord = coord_loss(out.predictions, batch.targets).item();
      double mmd = kNaN;
      double loss = coord;
      if (out.task_routing.size() >= 2) {
        mmd = diversity_loss(out.task_routing, sigma).item();
        loss = coord + (options.mmd_sign == MmdSign::kPenalizeSimilarity ? -options.alpha : options.alpha) * mmd;
      }
      for (Accumulator* a : {&acc, &total}) {
        a->add_predictions(out.predictions.value(), chunk);
        a->coord.add(coord, w);
        a->loss.add(loss, w);
        if (!std::isnan(mmd)) a->mmd.add(mmd, w);
        for (std::size_t k = 0; k < out.task_routing.size(); ++k) {
          a->entropy[k].add(dispatch_entropy(out.task_routing[k].dispatch.value()), w);
        }
      }
      if (options.routing_dump) {
        json line = {{"split", split}, {"batch", batch_index}, {"band", label}, {"samples", count}};
        json routers = json::array();
        for (std::size_t i = 0; i < out.fusion_routing.size(); ++i) {
          routers.push_back(routing_summary("fusion" + std::to_string(i), out.fusion_routing[i]));
        }
        for (std::size_t k = 0; k < out.task_routing.size(); ++k) {
          routers.push_back(routing_summary("task" + std::to_string(k), out.task_routing[k]));
        }
        line["routers"] = std::move(routers);
        *options.routing_dump << line.dump() << '\n';
      }
      ++batch_index;
    }
    band_records.push_back(acc.finish(epoch, split, label));
  }
  std::vector<MetricsRecord> records{total.finish(epoch, split, "all")};
  records.insert(records.end(), band_records.begin(), band_records.end());
  return records;
}

TrainResult train_model(const ExperimentConfig& config, std::span<const TrajectorySample* const> train,
                        std::span<const TrajectorySample* const> validation, const TrainOptions& options) {
  const ModelConfig mc = effective_model(config);
  mc.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  if (config.train.batch < 1) throw ConfigError("batch size must be positive");
  check_sample_shapes(train, mc, "training");
  check_sample_shapes(validation, mc, "validation");
  for (const auto* s : train) {
    if (s->split != Split::kTrain) throw ContractError("a test sample reached the training loop");
  }

  TrainResult result;
  result.model = std::make_unique<LocalizationModel>(mc, mix_seed(config.seed, 0x1417));
  LocalizationModel& model = *result.model;
  model.set_normalizer(FeatureNormalizer::fit(train));
  if (config.ablation == AblationKnob::kStaticFusion) model.freeze_routers();
  ParameterStore& store = model.parameters();

  const std::size_t n = train.size();
  const std::size_t batch = config.train.batch;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  diff::AdamWConfig opt_config;
  opt_config.lr = config.train.lr;
  opt_config.weight_decay = config.train.weight_decay;
  opt_config.horizon = config.train.epochs * steps_per_epoch;
  diff::AdamW optimizer(store, opt_config);

  const double sigma = sigma_for(model);
  const double alpha = config.train.alpha;
  EvalOptions eval_options;
  eval_options.batch = std::max<std::size_t>(batch, 64);
  eval_options.alpha = alpha;
  eval_options.mmd_sign = config.train.mmd_sign;
  eval_options.band_labels = band_labels(config.data.bands);

  std::vector<Tensor> best = store.snapshot();
  double best_mse = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<const TrajectorySample*> chunk;

  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    Rng shuffle(mix_seed(config.seed, 0xe90c0000 + epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    Accumulator acc(mc.tasks());
    double lr = kNaN;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      chunk.clear();
      for (std::size_t i = start; i < start + count; ++i) chunk.push_back(train[order[i]]);
      const Batch b = make_batch(chunk, model.normalizer());
      const ModelOutput out = model.forward(b);
      const Var coord = coord_loss(out.predictions, b.targets);
      Var loss = coord;
      double mmd = kNaN;
      if (alpha > 0.0 && out.task_routing.size() >= 2) {
        const Var diversity = diversity_loss(out.task_routing, sigma);
        mmd = diversity.item();
        loss = total_loss(coord, diversity, alpha, config.train.mmd_sign);
      }
      lr = optimizer.current_lr();
      if (!std::isfinite(loss.item())) {
        throw NumericalError(numerical_diagnostics(store, lr, optimizer.step_count()));
      }
      // Zeroed late so the diagnostics above still see the previous step's gradients.
      store.zero_grad();
      diff::backward(loss);
      optimizer.step(store);
      ++result.steps;

      const double w = static_cast<double>(count);
      acc.add_predictions(out.predictions.value(), chunk);
      acc.loss.add(loss.item(), w);
      acc.coord.add(coord.item(), w);
      if (!std::isnan(mmd)) acc.mmd.add(mmd, w);
      if (options.step_log) {
        *options.step_log << result.steps << ',' << epoch << ',' << format_double(loss.item()) << ','
                          << format_double(coord.item()) << ',' << format_double(mmd) << ',' << format_double(lr)
                          << '\n';
      }
    }
    MetricsRecord train_record = acc.finish(static_cast<long>(epoch), "train", "all");
    train_record.lr = lr;
    result.history.push_back(std::move(train_record));

    if (!validation.empty() && options.validate_each_epoch) {
      MetricsRecord val = evaluate(model, validation, "val", static_cast<long>(epoch), eval_options).front();
      val.lr = lr;
      if (val.mse < best_mse) {
        best_mse = val.mse;
        best = store.snapshot();
        result.best_epoch = static_cast<long>(epoch);
        result.best_validation_mse = val.mse;
      }
      result.history.push_back(std::move(val));
    } else {
      best = store.snapshot();
      result.best_epoch = static_cast<long>(epoch);
    }
  }
  store.restore(best);
  store.release_grads();
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const TrainOptions& options) {
  config.validate();
  const std::vector<TrajectorySample> samples = build_samples(config);
  const DataSplits splits = split_samples(samples, config);
  ExperimentResult result;
  result.training = train_model(config, splits.train, splits.validation, options);
  EvalOptions eval;
  eval.alpha = config.train.alpha;
  eval.mmd_sign = config.train.mmd_sign;
  eval.band_labels = band_labels(config.data.bands);
  const long epoch = result.training.best_epoch;
  result.test = evaluate(*result.training.model, splits.test_mix, "test_mix", epoch, eval);
  if (config.split == SplitMode::kOod) {
    auto ood = evaluate(*result.training.model, splits.test_ood, "test_ood", epoch, eval);
    result.test.insert(result.test.end(), ood.begin(), ood.end());
  }
  return result;
}

const MetricsRecord* find_record(std::span<const MetricsRecord> records, const std::string& split,
                                 const std::string& band) {
  for (const auto& r : records) {
    if (r.split == split && r.band == band) return &r;
  }
  return nullptr;
}

diff::Checkpoint make_checkpoint(const LocalizationModel& model, json meta) {
  diff::Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  ckpt.meta["model"] = to_json(model.config());
  append_parameters(ckpt, model.parameters());
  const FeatureNormalizer& n = model.normalizer();
  auto add = [&](const std::string& name, std::span<const double> values) {
    Tensor t({values.size()});
    std::copy(values.begin(), values.end(), t.data().begin());
    ckpt.tensors.push_back({"__norm/" + name, std::move(t)});
  };
  add("geom_mean", n.geom_mean);
  add("geom_std", n.geom_std);
  add("cfr_mean", n.cfr_mean);
  add("cfr_std", n.cfr_std);
  add("target_center", n.target_center);
  add("target_scale", std::span<const double>(&n.target_scale, 1));
  return ckpt;
}

std::unique_ptr<LocalizationModel> model_from_checkpoint(const diff::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model")) throw ConfigError("checkpoint has no model description");
  auto model = std::make_unique<LocalizationModel>(model_config_from_json(ckpt.meta.at("model")), 0);
  assign_parameters(ckpt, model->parameters());
  FeatureNormalizer n;
  auto read = [&](const std::string& name, std::span<double> out) {
    const Tensor& t = ckpt.find("__norm/" + name);
    if (t.size() != out.size()) throw ConfigError("checkpoint normalizer entry " + name + " has the wrong size");
    std::copy(t.data().begin(), t.data().end(), out.begin());
  };
  read("geom_mean", n.geom_mean);
  read("geom_std", n.geom_std);
  read("cfr_mean", n.cfr_mean);
  read("cfr_std", n.cfr_std);
  read("target_center", n.target_center);
  read("target_scale", std::span<double>(&n.target_scale, 1));
  model->set_normalizer(n);
  return model;
}

diff::GradCheckReport run_grad_check(const ExperimentConfig& config, std::size_t batch,
                                     const diff::GradCheckOptions& options) {
  if (batch < 1) throw ConfigError("grad-check batch must be positive");
  const ModelConfig mc = effective_model(config);
  LocalizationModel model(mc, mix_seed(config.seed, 0x1417));
  Rng rng(mix_seed(config.seed, 0x9c));
  const Tensor cfr = diff::normal_tensor({batch, mc.s, 3, mc.subcarriers}, 1.0, rng);
  const Tensor num = diff::normal_tensor({batch, 4 * mc.s}, 1.0, rng);
  const Tensor targets = diff::normal_tensor({batch, mc.tasks(), 2}, 1.0, rng);
  const double sigma = sigma_for(model);
  auto closure = [&]() {
    const ModelOutput out = model.forward(cfr, num);
    Var loss = coord_loss(out.predictions, targets);
    if (out.task_routing.size() >= 2) {
      loss = total_loss(loss, diversity_loss(out.task_routing, sigma), config.train.alpha, config.train.mmd_sign);
    }
    return loss;
  };
  return diff::grad_check(closure, model.parameters(), options);
}

}  // namespace scadf
