// SPDX-License-Identifier: Apache-2.0
//
// Cost of the generative-quality metrics on latent samples.
#include <benchmark/benchmark.h>

#include "gfr/metrics.hpp"
#include "gfr/rng.hpp"

namespace {

using namespace gfr;

// Fréchet distance between two sample sets. Args: samples per set, dimension.
void BM_FrechetDistance(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const Tensor a = rng.normal_matrix(n, d);
  const Tensor b = rng.normal_matrix(n, d);
  for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FrechetDistance)->Args({1000, 16})->Args({10000, 16})->Args({10000, 128});

// k-means with the default restarts. Args: samples, clusters.
void BM_KMeans(benchmark::State& state) {
  Rng rng(2);
  const Tensor x = rng.normal_matrix(static_cast<std::size_t>(state.range(0)), 16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kmeans(x, static_cast<std::size_t>(state.range(1)), 7));
  }
}
BENCHMARK(BM_KMeans)->Args({1000, 20})->Args({4000, 20})->Unit(benchmark::kMillisecond);

// Full PRD curve: clustering plus the slope sweep. Arg: samples per set.
void BM_PrdCurve(benchmark::State& state) {
  Rng rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor real = rng.normal_matrix(n, 16);
  const Tensor generated = rng.normal_matrix(n, 16);
  for (auto _ : state) benchmark::DoNotOptimize(prd_curve(real, generated, 20, 1001, 7));
}
BENCHMARK(BM_PrdCurve)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

// Slope sweep alone over fixed histograms. Arg: grid size.
void BM_PrdFromHistograms(benchmark::State& state) {
  std::vector<double> p(20, 0.05), q(20, 0.0);
  for (std::size_t i = 0; i < 10; ++i) q[i] = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(prd_from_histograms(p, q, static_cast<std::size_t>(state.range(0))));
  }
}
BENCHMARK(BM_PrdFromHistograms)->Arg(101)->Arg(1001);

}  // namespace

BENCHMARK_MAIN();
