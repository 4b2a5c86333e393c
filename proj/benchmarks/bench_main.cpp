// Copyright 2026 The dpmix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "dpmix/approx.hpp"
#include "dpmix/inference.hpp"
#include "dpmix/metrics.hpp"

namespace {

using namespace dpmix;

MixtureDensity bench_mixture(int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> locs(static_cast<std::size_t>(10 * dim));
  for (double& v : locs) v = rng.normal();
  return MixtureDensity(DiscreteMeasure(dim, locs, std::vector<double>(10, 0.1)), 0.5);
}

void BM_Hellinger(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const auto p = as_density(bench_mixture(dim, 1)), q = as_density(bench_mixture(dim, 2));
  const auto scheme = QuadratureScheme::default_for(p, q);
  for (auto _ : state) benchmark::DoNotOptimize(hellinger(p, q, scheme).value);
}
BENCHMARK(BM_Hellinger)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_GibbsSweep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const auto data = mixture_sample(bench_mixture(1, 4), n, rng);
  FitConfig cfg;
  cfg.truncation = 20;
  GibbsSampler sampler(data, default_prior(1), cfg);
  for (auto _ : state) sampler.sweep();
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_GibbsSweep)->Arg(100)->Arg(1000)->Arg(10000);

void BM_Discretize(benchmark::State& state) {
  const CompactDensity u = uniform_density(1, 1.0);
  DiscretizeOptions opts;
  opts.measure_errors = false;
  const double eps = 1.0 / static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(discretize(MixingSource::of(u), 0.05, eps, opts).atom_count);
}
BENCHMARK(BM_Discretize)->Arg(10)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
