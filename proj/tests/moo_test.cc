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
#include "hdatrain/moo.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>

#include "hdatrain/workloads.h"

namespace hdatrain {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool BruteDominates(const Objectives& a, const Objectives& b) {
  bool strictly = false;
  for (int k = 0; k < 3; ++k) {
    if (a[k] > b[k]) return false;
    strictly |= a[k] < b[k];
  }
  return strictly;
}

// Peel off non-dominated layers one at a time.
std::vector<std::vector<int>> BruteFronts(const std::vector<Objectives>& objs) {
  std::vector<std::vector<int>> fronts;
  std::set<int> left;
  for (int i = 0; i < static_cast<int>(objs.size()); ++i) left.insert(i);
  while (!left.empty()) {
    std::vector<int> front;
    for (int i : left) {
      bool dominated = false;
      for (int j : left) dominated |= BruteDominates(objs[j], objs[i]);
      if (!dominated) front.push_back(i);
    }
    for (int i : front) left.erase(i);
    fronts.push_back(front);
  }
  return fronts;
}

TEST(Dominates, Basics) {
  EXPECT_TRUE(Dominates({1, 1, 1}, {1, 1, 2}));
  EXPECT_FALSE(Dominates({1, 1, 1}, {1, 1, 1}));
  EXPECT_FALSE(Dominates({0, 2, 1}, {1, 1, 1}));
}

TEST(FastNondominatedSort, Trivial) {
  EXPECT_EQ(FastNondominatedSort({{1, 2, 3}}), (std::vector<std::vector<int>>{{0}}));
  EXPECT_EQ(FastNondominatedSort({{2, 2, 2}, {1, 1, 1}}),
            (std::vector<std::vector<int>>{{1}, {0}}));
}

TEST(FastNondominatedSort, MatchesBruteForce) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 64);
    std::vector<Objectives> objs(n);
    for (auto& o : objs) {
      for (auto& v : o) v = static_cast<double>(rng() % 6);  // coarse values force ties
    }
    EXPECT_EQ(FastNondominatedSort(objs), BruteFronts(objs));
  }
}

TEST(CrowdingDistance, Examples) {
  auto two = CrowdingDistance({{0, 0, 0}, {1, 1, 1}}, {0, 1});
  EXPECT_EQ(two, (std::vector<double>{kInf, kInf}));
  auto line = CrowdingDistance({{0, 5, 5}, {1, 5, 5}, {2, 5, 5}}, {0, 1, 2});
  EXPECT_EQ(line[0], kInf);
  EXPECT_DOUBLE_EQ(line[1], 1.0);
  EXPECT_EQ(line[2], kInf);
  auto same = CrowdingDistance({{3, 3, 3}, {3, 3, 3}, {3, 3, 3}, {3, 3, 3}}, {0, 1, 2, 3});
  int zeros = 0;
  for (double d : same) zeros += d == 0.0;
  EXPECT_EQ(zeros, 2);
}

TEST(CrowdingDistance, InteriorSumsNormalisedGaps) {
  // Sorted by every axis in the same order, distinct values.
  const std::vector<Objectives> objs = {{0, 10, 100}, {1, 30, 110}, {4, 40, 200}};
  const auto d = CrowdingDistance(objs, {0, 1, 2});
  EXPECT_DOUBLE_EQ(d[1], 4.0 / 4 + 30.0 / 30 + 100.0 / 100);
}

// Inclusion-exclusion over boxes [p, ref].
double HvOracle(const std::vector<Objectives>& pts, const Objectives& ref) {
  std::vector<Objectives> in;
  for (const auto& p : pts) {
    if (p[0] < ref[0] && p[1] < ref[1] && p[2] < ref[2]) in.push_back(p);
  }
  double total = 0;
  const size_t n = in.size();
  for (uint32_t mask = 1; mask < (1u << n); ++mask) {
    Objectives corner = {-kInf, -kInf, -kInf};
    int bits = 0;
    for (size_t i = 0; i < n; ++i) {
      if (!(mask >> i & 1)) continue;
      ++bits;
      for (int k = 0; k < 3; ++k) corner[k] = std::max(corner[k], in[i][k]);
    }
    const double vol = (ref[0] - corner[0]) * (ref[1] - corner[1]) * (ref[2] - corner[2]);
    total += (bits % 2 ? 1 : -1) * vol;
  }
  return total;
}

TEST(Hypervolume, SingleBox) { EXPECT_DOUBLE_EQ(Hypervolume({{1, 2, 3}}, {2, 4, 6}), 1 * 2 * 3); }

TEST(Hypervolume, MatchesInclusionExclusion) {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng() % 10);
    std::vector<Objectives> pts(n);
    for (auto& p : pts) {
      for (auto& v : p) v = static_cast<double>(rng() % 12);
    }
    const Objectives ref = {10, 10, 10};
    EXPECT_NEAR(Hypervolume(pts, ref), HvOracle(pts, ref), 1e-9) << trial;
  }
}

TEST(GenomeHex, LayoutAndRoundTrip) {
  EXPECT_EQ(GenomeHex({1, 0, 0, 0, 1}), "11");
  EXPECT_EQ(GenomeHex({0, 0, 0, 1}), "8");
  EXPECT_EQ(GenomeHex({1, 1, 1, 1, 0, 1}), "f2");
  std::mt19937_64 rng(53);
  for (size_t bits : {1, 4, 7, 39, 64}) {
    Genome g(bits);
    for (auto& b : g) b = rng() % 2;
    EXPECT_EQ(GenomeFromHex(GenomeHex(g), bits), g);
  }
  EXPECT_THROW(GenomeFromHex("zz", 8), Error);
  EXPECT_THROW(GenomeFromHex("1", 8), Error);
}

// Three conflicting objectives over a 12-bit genome.
Objectives Toy(const Genome& g) {
  double ones = 0, prefix = 0, alternation = 0;
  for (size_t i = 0; i < g.size(); ++i) {
    ones += g[i];
    prefix += g[i] ? static_cast<double>(i) : 0.0;
    if (i > 0) alternation += g[i] == g[i - 1];
  }
  return {ones, static_cast<double>(g.size()) * 6 - prefix, alternation + (g.size() - ones)};
}

std::vector<Genome> ToySeeds() { return {Genome(12, 0), Genome(12, 1)}; }

void ExpectMutuallyNondominated(const std::vector<Individual>& pop) {
  for (const auto& a : pop)
    for (const auto& b : pop) EXPECT_FALSE(Dominates(a.objectives, b.objectives));
}

TEST(Nsga2, DegenerateRunKeepsSeededFront) {
  GaParams p;
  p.population = 4;
  p.generations = 0;
  p.seed = 3;
  const auto r = Nsga2(12, ToySeeds(), Toy, p);
  ASSERT_EQ(r.snapshots.size(), 1u);
  const auto& gen0 = r.snapshots[0].population;
  std::vector<Objectives> objs;
  for (const auto& ind : gen0) objs.push_back(ind.objectives);
  std::set<Genome> expected;
  const auto fronts = BruteFronts(objs);
  for (int i : fronts[0]) expected.insert(gen0[i].genome);
  std::set<Genome> archive;
  for (const auto& ind : r.archive) archive.insert(ind.genome);
  EXPECT_EQ(archive, expected);
  // Seeds are part of generation 0.
  std::set<Genome> gen0_genomes;
  for (const auto& ind : gen0) gen0_genomes.insert(ind.genome);
  EXPECT_TRUE(gen0_genomes.count(Genome(12, 0)));
  EXPECT_TRUE(gen0_genomes.count(Genome(12, 1)));
}

TEST(Nsga2, DeterministicAcrossSeedsAndThreads) {
  GaParams p;
  p.population = 16;
  p.generations = 5;
  p.seed = 11;
  const auto a = Nsga2(12, ToySeeds(), Toy, p);
  p.jobs = 3;
  const auto b = Nsga2(12, ToySeeds(), Toy, p);
  ASSERT_EQ(a.archive.size(), b.archive.size());
  for (size_t i = 0; i < a.archive.size(); ++i) {
    EXPECT_EQ(a.archive[i].genome, b.archive[i].genome);
  }
  for (size_t s = 0; s < a.snapshots.size(); ++s) {
    EXPECT_EQ(SnapshotCsvRows(a.snapshots[s]), SnapshotCsvRows(b.snapshots[s]));
  }
}

TEST(Nsga2, Invariants) {
  GaParams p;
  p.population = 20;
  p.generations = 8;
  p.seed = 5;
  std::mutex mu;
  std::map<Genome, int> calls;
  auto counted = [&](const Genome& g) {
    std::lock_guard<std::mutex> lock(mu);
    ++calls[g];
    return Toy(g);
  };
  int callbacks = 0;
  p.on_generation = [&](const GaSnapshot&) { ++callbacks; };
  const auto r = Nsga2(12, ToySeeds(), counted, p);
  EXPECT_EQ(callbacks, 9);
  ASSERT_EQ(r.snapshots.size(), 9u);

  // Memoised: every genome is evaluated once.
  for (const auto& [g, c] : calls) EXPECT_EQ(c, 1);
  EXPECT_EQ(r.evaluations, calls.size());

  ExpectMutuallyNondominated(r.archive);
  // Nothing evaluated dominates an archive member.
  for (const auto& [g, c] : calls) {
    for (const auto& a : r.archive) EXPECT_FALSE(Dominates(Toy(g), a.objectives));
  }

  for (size_t s = 1; s < r.snapshots.size(); ++s) {
    EXPECT_GE(r.snapshots[s].hypervolume, r.snapshots[s - 1].hypervolume);
    EXPECT_EQ(r.snapshots[s].population.size(), 20u);
    for (int k = 0; k < 3; ++k) {
      auto best = [&](const GaSnapshot& snap) {
        double v = kInf;
        for (const auto& ind : snap.population) v = std::min(v, ind.objectives[k]);
        return v;
      };
      EXPECT_LE(best(r.snapshots[s]), best(r.snapshots[s - 1]));
    }
  }
}

TEST(Nsga2, RejectsBadParams) {
  GaParams p;
  p.population = 5;
  EXPECT_THROW(Nsga2(12, ToySeeds(), Toy, p), Error);
  p.population = 2;
  EXPECT_THROW(Nsga2(12, ToySeeds(), Toy, p), Error);
  p = GaParams{};
  p.crossover = 1.5;
  EXPECT_THROW(Nsga2(12, ToySeeds(), Toy, p), Error);
  p = GaParams{};
  EXPECT_THROW(Nsga2(12, {Genome(3, 0)}, Toy, p), Error);
}

TEST(Nsga2, ObjectiveErrorsPropagate) {
  GaParams p;
  p.population = 8;
  p.generations = 2;
  p.jobs = 2;
  auto failing = [](const Genome& g) -> Objectives {
    if (g[0] && g[1]) throw Error(ErrorCode::kMemoryExceeded, "boom");
    return Toy(g);
  };
  EXPECT_THROW(Nsga2(12, ToySeeds(), failing, p), Error);
}

TEST(CheckpointSearch, SmallWorkload) {
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("resnet-tiny"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  const auto hw = EdgeTpuConfig({});
  const auto m = MappingConfig::Auto(hw);
  GaParams p;
  p.population = 8;
  p.generations = 2;
  p.seed = 7;
  const auto search = Nsga2CheckpointSearch(tg, hw, m, FusionSetting::Auto(6), p);
  const auto& acts = search.activations;
  ASSERT_EQ(acts.size(), ActivationSet(tg).size());
  ExpectMutuallyNondominated(search.result.archive);

  // The all-save seed reproduces a direct evaluation.
  const Genome all_saved(acts.size(), 1);
  EXPECT_EQ(search.PlanFor(all_saved), CheckpointPlan::AllSaved(acts));
  const auto direct = EvaluatePlan(tg, search.PlanFor(all_saved), hw, m, FusionSetting::Auto(6));
  bool found = false;
  for (const auto& ind : search.result.snapshots[0].population) {
    if (ind.genome != all_saved) continue;
    found = true;
    EXPECT_EQ(ind.objectives[0], static_cast<double>(direct.schedule.latency_cycles));
    EXPECT_EQ(ind.objectives[1], direct.schedule.energy.total());
    EXPECT_EQ(ind.objectives[2],
              static_cast<double>(CheckpointPlan::AllSaved(acts).SavedBytes(acts)));
  }
  EXPECT_TRUE(found);

  const auto rows = SnapshotCsvRows(search.result.snapshots[1]);
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 8);
  EXPECT_EQ(SnapshotCsvHeader(), "generation,genome_hex,latency,energy,saved_bytes,rank\n");
  EXPECT_EQ(rows.substr(0, 2), "1,");
}

}  // namespace
}  // namespace hdatrain
