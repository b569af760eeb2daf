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

#include "hdatrain/graph.h"
#include "hdatrain/hda.h"

namespace hdatrain {

enum class Parallelism { kNone, kDataParallel, kPipeline, kTensorParallel };

std::string_view ToString(Parallelism p);

struct MappingConfig {
  // node id -> core id; nodes not listed (or mapped to "auto") use the
  // built-in heuristic.
  std::map<std::string, std::string> assignment;
  Parallelism parallelism = Parallelism::kNone;
  int64_t split = 1;  // batch or channel split count
  // Node ids that open a new pipeline stage (topological order).
  std::vector<std::string> stage_boundaries;
  std::map<std::string, int64_t> tiling;  // node id -> T_i
  // Cap for nodes without an explicit T_i: the largest power of two that is
  // <= this value and divides the outer loop extent.
  int64_t default_tiling = 1;

  // Tensor parallel across the array cores when there are several of them,
  // pipeline otherwise.
  static MappingConfig Auto(const HdaSpec& hda);
  bool operator==(const MappingConfig&) const = default;
};

int64_t TilingFactor(const MappingConfig& mapping, const OperatorNode& node);

// Checks tiling divisibility, split counts and stage boundary ids against g.
void ValidateMapping(const ComputationGraph& g, const MappingConfig& mapping);

MappingConfig ImportMapping(const std::string& text);
MappingConfig LoadMappingFile(const std::string& path);
std::string ExportMapping(const MappingConfig& mapping);

// Where a node runs: `split` equal shares over `cores` (indices into
// HdaSpec::cores).
struct Placement {
  std::vector<int> cores;
  int64_t split = 1;
  Parallelism kind = Parallelism::kNone;
};

using Assignment = std::map<std::string, Placement>;

// Static core assignment. Errors: kIncompatibleCore for an explicit mapping
// of an array operator onto a SIMD core, kUnmappableNode when no core fits.
Assignment AssignCores(const ComputationGraph& g, const HdaSpec& hda, const MappingConfig& mapping);

struct NodeCost {
  int64_t compute_cycles = 0;
  int64_t memory_cycles = 0;
  int64_t cycles = 0;
  std::vector<double> level_bytes;  // per memory level of the core
  double compute_energy_pJ = 0;
  double memory_energy_pJ = 0;
  double energy_pJ() const { return compute_energy_pJ + memory_energy_pJ; }
};

// Roofline cost of one share of `node` on `core`. Edges in `on_chip` are
// fused intermediates and only touch the innermost level serving them.
// Errors: kIncompatibleCore.
NodeCost ComputeNodeCost(const ComputationGraph& g, const OperatorNode& node, const CoreSpec& core,
                         int64_t tiles, const Placement& placement,
                         const std::vector<std::string>& on_chip = {});

// A partition is a list of node-id groups covering every node exactly once.
using Partition = std::vector<std::vector<std::string>>;
Partition SingletonPartition(const ComputationGraph& g);

// On-chip bytes needed to run `nodes` as one subgraph on a single core:
// every touched non-weight tensor divided by the largest member T_i, plus
// member weights.
int64_t SubgraphWorkingSet(const ComputationGraph& g, const std::vector<std::string>& nodes,
                           const MappingConfig& mapping);

struct EnergyBreakdown {
  double compute = 0;
  double on_chip = 0;
  double off_chip = 0;
  double link = 0;
  double total() const { return compute + on_chip + off_chip + link; }
};

struct NodeTiming {
  std::string node;
  std::vector<std::string> cores;
  int64_t start = 0;
  int64_t end = 0;
  double energy_pJ = 0;  // compute + on-chip share of this node
};

struct ScheduleResult {
  std::vector<NodeTiming> timeline;  // in scheduling order
  int64_t latency_cycles = 0;
  EnergyBreakdown energy;
  std::map<std::string, int64_t> peak_core_memory;  // bytes, per core id
  int64_t peak_activation_memory = 0;
  int64_t offchip_bytes = 0;
  int64_t link_bytes = 0;
  size_t subgraph_count = 0;
};

// List schedule of the partition's subgraphs in topological order.
// Errors: kGraphInvalid (partition not an exact cover or cyclic between
// subgraphs), kMemoryExceeded, kUnmappableNode, kIncompatibleCore.
ScheduleResult Schedule(const ComputationGraph& g, const Partition& partition, const HdaSpec& hda,
                        const MappingConfig& mapping);

// Columns: node_id,core,start,end,energy_pJ. Split nodes list cores joined by '+'.
std::string TimelineCsv(const ScheduleResult& result);

}  // namespace hdatrain
