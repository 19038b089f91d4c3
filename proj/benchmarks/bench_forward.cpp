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


#include <random>

#include <benchmark/benchmark.h>

#include "scadf/channel_sim.hpp"
#include "scadf/mmd.hpp"
#include "scadf/model.hpp"
#include "scadf/spatial_context.hpp"
#include "scadf/task_moe.hpp"

namespace scadf {
namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  Tensor t(shape);
  for (double& v : t.data()) v = dist(gen);
  return t;
}

ModelConfig model_config(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  return c;
}

void BM_Forward(benchmark::State& state) {
  const auto arch = static_cast<Architecture>(state.range(0));
  const std::size_t batch = static_cast<std::size_t>(state.range(1));
  const ModelConfig mc = model_config(arch);
  const LocalizationModel model(mc, 1);
  const Tensor cfr = random_tensor({batch, mc.s, 3, mc.subcarriers}, 2);
  const Tensor num = random_tensor({batch, 4 * mc.s}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(cfr, num).predictions.value()[0]);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
  state.SetLabel(to_string(arch));
}
BENCHMARK(BM_Forward)->ArgsProduct({{0, 1, 2, 3}, {1, 32}})->Unit(benchmark::kMillisecond);

// One training step of the full objective: forward, loss, backward.
void BM_ForwardBackward(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  const ModelConfig mc = model_config(Architecture::kScadf);
  LocalizationModel model(mc, 1);
  const Tensor cfr = random_tensor({batch, mc.s, 3, mc.subcarriers}, 2);
  const Tensor num = random_tensor({batch, 4 * mc.s}, 3);
  const Tensor targets = random_tensor({batch, mc.tasks(), 2}, 4);
  const double sigma = MmdConfig::bandwidth_for_width(mc.width);
  for (auto _ : state) {
    model.parameters().zero_grad();
    const ModelOutput out = model.forward(cfr, num);
    const Var loss = total_loss(coord_loss(out.predictions, targets), diversity_loss(out.task_routing, sigma), 0.1,
                                MmdSign::kPenalizeSimilarity);
    diff::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Cfr(benchmark::State& state) {
  const Scene scene = make_preset_scene(ScenePreset::kDense, 1);
  const PathSet paths = trace_paths(scene, {scene.bounds.hi.x * 0.3, scene.bounds.hi.y * 0.7}, 1, 28e9);
  BandConfig band;
  band.subcarriers = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(cfr_from_paths(paths, band).data());
}
BENCHMARK(BM_Cfr)->Arg(64)->Arg(1024);

void BM_Cluster(benchmark::State& state) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> coord(0.0, 60.0);
  std::vector<Vec2> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = {coord(gen), coord(gen)};
  for (auto _ : state) benchmark::DoNotOptimize(cluster_points(pts, 1.0).size());
}
BENCHMARK(BM_Cluster)->Arg(200)->Arg(2000);

}  // namespace
}  // namespace scadf

BENCHMARK_MAIN();
