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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hdatrain/autodiff.h"

namespace hdatrain {

// Activation edge id -> 1 (saved) or 0 (recomputed).
struct CheckpointPlan {
  std::map<std::string, int> decisions;

  static CheckpointPlan AllSaved(const std::vector<ActivationInfo>& acts);
  static CheckpointPlan AllRecomputed(const std::vector<ActivationInfo>& acts);
  bool saved(const std::string& edge) const { return decisions.at(edge) != 0; }
  int64_t SavedBytes(const std::vector<ActivationInfo>& acts) const;
  bool operator==(const CheckpointPlan&) const = default;
};

struct MilpItem {
  std::string id;
  int64_t memory = 0;     // m_a, bytes
  int64_t recompute = 0;  // r_a, MACs
};

struct MilpInstance {
  std::vector<MilpItem> items;
  int64_t budget = 0;  // M, bytes

  static MilpInstance FromActivations(const std::vector<ActivationInfo>& acts, int64_t budget);
};

struct MilpSolution {
  CheckpointPlan plan;
  int64_t objective = 0;     // sum of r_a over recomputed items
  int64_t saved_memory = 0;  // sum of m_a over saved items
  std::string method;        // "dp" or "branch_and_bound"
};

// Exact minimiser of sum r_a (1 - x_a) subject to sum m_a x_a <= M. Among
// optimal plans the saved set that is lexicographically smallest as a sorted
// id sequence is returned. Uses a DP over the budget divided by the gcd of the
// item sizes when that grid is small enough, branch and bound otherwise.
// Throws Error(kInvalidParam) for negative sizes, costs or budget and for
// duplicate ids.
MilpSolution SolveCheckpointMilp(const MilpInstance& inst);

// Upper limits for the DP path; above either one the solver switches to
// branch and bound.
constexpr int64_t kMilpMaxGrid = 10'000'000;
constexpr int64_t kMilpMaxTableBits = int64_t{1} << 31;

// Rewrites the training graph so every discarded activation is regenerated
// right before its first backward consumer. Clones are named
// "<first consumer id>#rc.<original node id>" and their outputs
// "<original edge>~rc"; a node needed by several discarded activations is
// cloned once. Throws Error(kPlanMismatch) when the plan keys differ from the
// activation set.
ComputationGraph ApplyCheckpointPlan(const TrainingGraph& tg, const CheckpointPlan& plan);

// Plan files: a JSON list of [edge id, 0|1] records sorted by edge id.
std::string ExportPlan(const CheckpointPlan& plan);
CheckpointPlan ImportPlan(const std::string& text);
CheckpointPlan LoadPlanFile(const std::string& path);

}  // namespace hdatrain
