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
#include "hdatrain/checkpointing.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "hdatrain/interpreter.h"
#include "hdatrain/workloads.h"

namespace hdatrain {
namespace {

struct Brute {
  int64_t objective;
  std::vector<std::string> saved;
};

// Exhaustive 2^n search; ties go to the lexicographically smallest sorted
// saved-id list.
Brute BruteForce(const MilpInstance& inst) {
  auto items = inst.items;
  std::sort(items.begin(), items.end(), [](auto& a, auto& b) { return a.id < b.id; });
  const size_t n = items.size();
  Brute best{-1, {}};
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    int64_t mem = 0, obj = 0;
    std::vector<std::string> saved;
    for (size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        mem += items[i].memory;
        saved.push_back(items[i].id);
      } else {
        obj += items[i].recompute;
      }
    }
    if (mem > inst.budget) continue;
    if (best.objective < 0 || obj < best.objective ||
        (obj == best.objective && saved < best.saved)) {
      best = {obj, saved};
    }
  }
  return best;
}

std::vector<std::string> SavedIds(const CheckpointPlan& p) {
  std::vector<std::string> out;
  for (const auto& [id, x] : p.decisions)
    if (x) out.push_back(id);
  return out;
}

TEST(Milp, ThreeItemExample) {
  MilpInstance inst{{{"a", 4, 10}, {"b", 4, 1}, {"c", 4, 10}}, 8};
  const auto sol = SolveCheckpointMilp(inst);
  EXPECT_EQ(SavedIds(sol.plan), (std::vector<std::string>{"a", "c"}));
  EXPECT_EQ(sol.objective, 1);
  EXPECT_EQ(sol.saved_memory, 8);
}

TEST(Milp, UnconstrainedAndFullyConstrained) {
  MilpInstance inst{{{"a", 4, 10}, {"b", 6, 1}, {"c", 2, 7}}, 12};
  auto sol = SolveCheckpointMilp(inst);
  EXPECT_EQ(SavedIds(sol.plan).size(), 3u);
  EXPECT_EQ(sol.objective, 0);
  inst.budget = 0;
  sol = SolveCheckpointMilp(inst);
  EXPECT_TRUE(SavedIds(sol.plan).empty());
  EXPECT_EQ(sol.objective, 18);
}

TEST(Milp, NegativeBudgetRejected) {
  EXPECT_THROW(SolveCheckpointMilp(MilpInstance{{{"a", 1, 1}}, -1}), Error);
}

void CheckAgainstBrute(const MilpInstance& inst, const std::string& method) {
  const auto sol = SolveCheckpointMilp(inst);
  const auto brute = BruteForce(inst);
  EXPECT_EQ(sol.method, method);
  EXPECT_EQ(sol.objective, brute.objective);
  EXPECT_EQ(SavedIds(sol.plan), brute.saved);
  EXPECT_LE(sol.saved_memory, inst.budget);
  int64_t mem = 0;
  for (const auto& it : inst.items) mem += sol.plan.saved(it.id) ? it.memory : 0;
  EXPECT_EQ(mem, sol.saved_memory);
}

MilpInstance RandomInstance(std::mt19937_64& rng, int64_t mem_lo, int64_t mem_hi) {
  MilpInstance inst;
  const int n = 1 + static_cast<int>(rng() % 15);
  int64_t total = 0;
  for (int i = 0; i < n; ++i) {
    MilpItem it;
    it.id = "act" + std::to_string(100 + rng() % 900) + "_" + std::to_string(i);
    it.memory = std::uniform_int_distribution<int64_t>(mem_lo, mem_hi)(rng);
    it.recompute = std::uniform_int_distribution<int64_t>(1, 20)(rng);  // small range forces ties
    total += it.memory;
    inst.items.push_back(it);
  }
  inst.budget = std::uniform_int_distribution<int64_t>(0, total)(rng);
  return inst;
}

TEST(Milp, DynamicProgramMatchesBruteForce) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    CheckAgainstBrute(RandomInstance(rng, 0, 64), "dp");
  }
}

TEST(Milp, BranchAndBoundMatchesBruteForce) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = RandomInstance(rng, 20'000'000, 90'000'000);
    if (inst.items.size() < 2) inst.items.push_back({"extra", 0, 1});
    // Consecutive sizes force gcd 1, keeping the grid above the DP limit.
    inst.items[1].memory = inst.items[0].memory + 1;
    CheckAgainstBrute(inst, "branch_and_bound");
  }
}

TEST(Milp, ObjectiveNonIncreasingInBudget) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = RandomInstance(rng, 1, 50);
    int64_t total = 0;
    for (const auto& it : inst.items) total += it.memory;
    int64_t prev = INT64_MAX;
    for (int64_t m = 0; m <= total; m += 3) {
      inst.budget = m;
      const auto obj = SolveCheckpointMilp(inst).objective;
      EXPECT_LE(obj, prev);
      prev = obj;
    }
  }
}

TEST(Milp, DeskResnetActivations) {
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("resnet-desk"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  const auto acts = ActivationSet(tg);
  int64_t total = 0;
  for (const auto& a : acts) total += a.bytes;
  const auto sol = SolveCheckpointMilp(MilpInstance::FromActivations(acts, total / 2));
  EXPECT_EQ(sol.plan.decisions.size(), acts.size());
  EXPECT_LE(sol.saved_memory, total / 2);
  EXPECT_GT(sol.objective, 0);
}

Bindings Outputs(const ComputationGraph& g, const Bindings& bind) {
  Bindings all = Execute(g, bind), out;
  for (const auto& id : g.graph_outputs()) out[id] = all.at(id);
  return out;
}

void ExpectSameOutputs(const Bindings& a, const Bindings& b) {
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [id, v] : a) {
    const auto& w = b.at(id).data;
    ASSERT_EQ(v.data.size(), w.size()) << id;
    for (size_t i = 0; i < w.size(); ++i) {
      EXPECT_NEAR(v.data[i], w[i], 1e-12 * std::max(1.0, std::abs(w[i]))) << id;
    }
  }
}

TEST(ApplyPlan, AllSavedIsIdentity) {
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("resnet-tiny"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  const auto g = ApplyCheckpointPlan(tg, CheckpointPlan::AllSaved(ActivationSet(tg)));
  EXPECT_TRUE(g == tg.graph);
}

TEST(ApplyPlan, RandomPlansPreserveUpdates) {
  std::mt19937_64 rng(31);
  for (const char* name : {"resnet-tiny", "gpt-tiny", "checkpoint-block"}) {
    for (const auto& opt : {OptimizerSpec::Sgd(0.1, 0.9), OptimizerSpec::Adam(1e-3)}) {
      const auto tg = BuildTrainingGraph(BuildBuiltinWorkload(name), LossSpec{}, opt);
      const auto acts = ActivationSet(tg);
      const auto bind = RandomBindings(tg.graph, rng);
      const auto reference = Outputs(tg.graph, bind);
      for (int trial = 0; trial < 4; ++trial) {
        auto plan = CheckpointPlan::AllRecomputed(acts);
        if (trial > 0) {
          for (auto& [id, x] : plan.decisions) x = static_cast<int>(rng() % 2);
        }
        const auto g = ApplyCheckpointPlan(tg, plan);
        EXPECT_TRUE(ValidateGraph(g).empty()) << name;
        ExpectSameOutputs(Outputs(g, bind), reference);
      }
    }
  }
}

// Discarded activations are regenerated by backward-phase clones and no
// longer read across phases.
TEST(ApplyPlan, DiscardedActivationsLeaveBackwardLiveness) {
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("fusion-chain"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  const auto acts = ActivationSet(tg);
  const auto g = ApplyCheckpointPlan(tg, CheckpointPlan::AllRecomputed(acts));
  for (const auto& a : acts) {
    for (const auto& c : g.edge(a.edge).consumers) {
      EXPECT_EQ(g.node(c).phase, Phase::kForward) << a.edge << " read by " << c;
    }
  }
  int clones = 0;
  for (const auto& [id, n] : g.nodes()) {
    if (id.find("#rc.") == std::string::npos) continue;
    ++clones;
    EXPECT_EQ(n.phase, Phase::kBackward);
  }
  EXPECT_GT(clones, 0);
  // Nothing remains to recompute once every discarded tensor is regenerated.
  EXPECT_TRUE(ActivationSet(g).empty());
}

TEST(ApplyPlan, SharedProducerClonedOnce) {
  for (const char* name : {"resnet-tiny", "gpt-tiny", "checkpoint-block"}) {
    const auto tg =
        BuildTrainingGraph(BuildBuiltinWorkload(name), LossSpec{}, OptimizerSpec::Sgd(0.1, 0.9));
    const auto g = ApplyCheckpointPlan(tg, CheckpointPlan::AllRecomputed(ActivationSet(tg)));
    std::map<std::string, int> per_original;
    for (const auto& [id, n] : g.nodes()) {
      const auto pos = id.find("#rc.");
      if (pos != std::string::npos) ++per_original[id.substr(pos + 4)];
    }
    EXPECT_FALSE(per_original.empty());
    for (const auto& [orig, count] : per_original) EXPECT_EQ(count, 1) << name << " " << orig;
  }
}

TEST(ApplyPlan, PlanMismatch) {
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("resnet-tiny"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  auto plan = CheckpointPlan::AllSaved(ActivationSet(tg));
  plan.decisions.erase(plan.decisions.begin());
  try {
    ApplyCheckpointPlan(tg, plan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPlanMismatch);
  }
  plan = CheckpointPlan::AllSaved(ActivationSet(tg));
  plan.decisions["not-an-activation"] = 1;
  EXPECT_THROW(ApplyCheckpointPlan(tg, plan), Error);
}

TEST(PlanFile, RoundTrip) {
  CheckpointPlan p;
  p.decisions = {{"a", 1}, {"b", 0}, {"c", 1}};
  EXPECT_EQ(ImportPlan(ExportPlan(p)), p);
  EXPECT_THROW(ImportPlan("not json"), Error);
}

}  // namespace
}  // namespace hdatrain
