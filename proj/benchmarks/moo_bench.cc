// Copyright 2026 The hdatrain Authors
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

#include <random>

#include "hdatrain/moo.h"

namespace hdatrain {
namespace {

std::vector<Objectives> RandomObjectives(size_t n) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Objectives> objs(n);
  for (auto& o : objs) o = {u(rng), u(rng), u(rng)};
  return objs;
}

void BM_NondominatedSort(benchmark::State& state) {
  const auto objs = RandomObjectives(static_cast<size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(FastNondominatedSort(objs));
}
BENCHMARK(BM_NondominatedSort)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_Hypervolume(benchmark::State& state) {
  const auto objs = RandomObjectives(static_cast<size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(Hypervolume(objs, {1.1, 1.1, 1.1}));
}
BENCHMARK(BM_Hypervolume)->Arg(16)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace hdatrain

BENCHMARK_MAIN();
