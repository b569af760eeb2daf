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
#include <string>

#include "hdatrain/checkpointing.h"

namespace hdatrain {
namespace {

// Item sizes below max_memory; small sizes keep the DP grid small, large
// ones push the solver to branch and bound.
MilpInstance RandomInstance(int n, int64_t max_memory) {
  std::mt19937_64 rng(7);
  MilpInstance inst;
  int64_t total = 0;
  for (int i = 0; i < n; ++i) {
    const int64_t m = 1 + static_cast<int64_t>(rng() % max_memory);
    inst.items.push_back({"a" + std::to_string(i), m, static_cast<int64_t>(rng() % 100000)});
    total += m;
  }
  inst.budget = total / 2;
  return inst;
}

void BM_MilpDp(benchmark::State& state) {
  const auto inst = RandomInstance(static_cast<int>(state.range(0)), 4096);
  for (auto _ : state) benchmark::DoNotOptimize(SolveCheckpointMilp(inst));
}
BENCHMARK(BM_MilpDp)->Arg(16)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_MilpBranchAndBound(benchmark::State& state) {
  const auto inst = RandomInstance(static_cast<int>(state.range(0)), int64_t{1} << 40);
  for (auto _ : state) benchmark::DoNotOptimize(SolveCheckpointMilp(inst));
}
BENCHMARK(BM_MilpBranchAndBound)->Arg(16)->Arg(32)->Arg(48)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace hdatrain

BENCHMARK_MAIN();
