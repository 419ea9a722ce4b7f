// SPDX-License-Identifier: Apache-2.0
//
// Cost of the training inner loop: one Adam step with and without replay,
// and generation of a replay batch as a function of the cycle count.
#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "gfr/replay.hpp"
#include "gfr/trainer.hpp"

namespace {

using namespace gfr;

FeatureDataset bench_dataset(std::size_t dim) {
  SynthSpec spec;
  spec.classes = 10;
  spec.dim = dim;
  spec.per_class = 100;
  spec.seed = 1;
  return normalize(synth_gaussian_clusters(spec));
}

ScenarioConfig bench_config(std::size_t dim, std::size_t hidden) {
  ScenarioConfig c;
  c.total_classes = 10;
  c.first_task_classes = 5;
  c.incremental_tasks = 5;
  c.batch_size = 64;
  c.model.input_dim = dim;
  c.model.n_classes = 10;
  c.model.hidden = hidden;
  c.model.latent_dim = 16;
  return c;
}

ModelState trained_on(const ScenarioConfig& c, std::span<const int> classes, Rng& rng) {
  ModelState s = init_model(c.model, rng);
  s.add_classes(classes, rng);
  s.task = 1;
  return s;
}

// Iterations of train_task on the first task (no replay). Arg: hidden width.
void BM_TrainStepFirstTask(benchmark::State& state) {
  const std::size_t dim = 64;
  const FeatureDataset ds = bench_dataset(dim);
  const ScenarioConfig c = bench_config(dim, static_cast<std::size_t>(state.range(0)));
  Rng rng(1);
  const std::vector<int> classes{0, 1, 2, 3, 4};
  ModelState s = trained_on(c, classes, rng);
  const TaskData data = task_data(ds, ds.indices(Split::Train, classes));
  const int steps = 10;
  for (auto _ : state) {
    train_task(s, data, nullptr, c, steps, rng);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_TrainStepFirstTask)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

// Iterations of train_task with generative replay and every replay term on.
// Arg: number of cycles applied to the generated features.
void BM_TrainStepWithReplay(benchmark::State& state) {
  const std::size_t dim = 64;
  const FeatureDataset ds = bench_dataset(dim);
  ScenarioConfig c = bench_config(dim, 128);
  c.n_cycles = static_cast<int>(state.range(0));
  Rng rng(2);
  const std::vector<int> first{0, 1, 2, 3, 4}, second{5};
  const ModelState old = trained_on(c, first, rng);
  ModelState s = old;
  s.add_classes(second, rng);
  s.task = 2;
  const TaskData data = task_data(ds, ds.indices(Split::Train, second));
  const int steps = 10;
  for (auto _ : state) {
    train_task(s, data, &old, c, steps, rng);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_TrainStepWithReplay)->Arg(0)->Arg(2)->Arg(10)->Unit(benchmark::kMillisecond);

// Building one replay batch (generation, cycling, soft targets). Arg: cycles.
void BM_ReplayBatch(benchmark::State& state) {
  const ScenarioConfig c = bench_config(64, 128);
  Rng rng(3);
  const std::vector<int> classes{0, 1, 2, 3, 4};
  const ModelState old = trained_on(c, classes, rng);
  ReplayConfig rc;
  rc.n_cycles = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_replay_batch(old, rc, rng));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rc.batch_size));
}
BENCHMARK(BM_ReplayBatch)->Arg(0)->Arg(1)->Arg(10)->Arg(20);

// Inference-path encoder over a batch. Arg: batch size.
void BM_Encode(benchmark::State& state) {
  const ScenarioConfig c = bench_config(512, 256);
  Rng rng(4);
  const std::vector<int> classes{0, 1, 2, 3, 4};
  const ModelState s = trained_on(c, classes, rng);
  const Tensor x = rng.normal_matrix(static_cast<std::size_t>(state.range(0)), 512);
  for (auto _ : state) benchmark::DoNotOptimize(encode(x, s.encoder));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Encode)->Arg(64)->Arg(1024);

}  // namespace
