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
#include <string>
#include <vector>

#include "hdatrain/graph.h"
#include "hdatrain/hda.h"
#include "hdatrain/scheduler.h"

namespace hdatrain {

struct FusionLimits {
  int max_len = 6;
  int max_conv = 3;  // Conv + ConvTranspose per subgraph
  int max_gemm = 2;  // Gemm + MatMul per subgraph
};

struct CandidateSubgraph {
  std::vector<std::string> nodes;           // sorted by id
  int64_t working_set = 0;                  // bytes on a single core
  std::vector<std::string> feasible_cores;  // compatible cores with enough capacity
  std::vector<int64_t> tiling_set;          // distinct T_i, ascending
  int conv_count = 0;
  int gemm_count = 0;
  int multi_output_nodes = 0;  // members with an edge leaving the subgraph
};

// Every singleton plus every connected, convex subgraph of at most max_len
// nodes reachable by breadth-first growth from each seed node that passes the
// memory, tiling divisibility and operator-count checks. Each node set is
// emitted once; order is by seed id, then discovery.
std::vector<CandidateSubgraph> EnumerateCandidates(const ComputationGraph& g, const HdaSpec& hda,
                                                   const MappingConfig& mapping,
                                                   const FusionLimits& limits);

// Keeps candidates with at most one member whose outputs leave the subgraph.
std::vector<CandidateSubgraph> FilterSingleOutput(const std::vector<CandidateSubgraph>& cands);

struct PartitionOptions {
  bool minimize_cut_bytes = false;  // secondary objective after the count
  size_t max_candidates = 50000;    // above this, skip the exact search
  size_t max_states = 500000;       // search budget before falling back
};

struct FusedPartition {
  Partition groups;              // each group sorted by id, groups in schedule order
  std::vector<size_t> selected;  // candidate indices, parallel to groups
  bool exact = true;
  std::string method;     // "exact" or "greedy"
  int64_t cut_bytes = 0;  // bytes of tensors leaving their subgraph
};

// Minimum-count exact cover whose subgraph dependency graph is acyclic.
// Requires every node to be covered by some candidate (singletons are).
FusedPartition SolvePartition(const std::vector<CandidateSubgraph>& cands,
                              const ComputationGraph& g, const PartitionOptions& options = {});

// enumerate -> single-output filter -> solve.
FusedPartition FuseGraph(const ComputationGraph& g, const HdaSpec& hda,
                         const MappingConfig& mapping, const FusionLimits& limits,
                         const PartitionOptions& options = {});

// Problems with one subgraph as a fusion group (empty when it satisfies
// connectivity, convexity, length, memory, tiling, operator-count and
// single-output rules). Singletons are exempt from the capacity rules.
std::vector<std::string> VerifySubgraph(const ComputationGraph& g,
                                        const std::vector<std::string>& nodes, const HdaSpec& hda,
                                        const MappingConfig& mapping, const FusionLimits& limits);

// Every node in exactly one group, no unknown nodes, no empty groups.
bool IsExactCover(const ComputationGraph& g, const Partition& partition);
// Dependencies between groups form a DAG.
bool IsAcyclicPartition(const ComputationGraph& g, const Partition& partition);

// Partition files: a JSON list of node-id lists.
std::string ExportPartition(const Partition& partition);
Partition ImportPartition(const std::string& text);
Partition LoadPartitionFile(const std::string& path);

// Keeps the groups' nodes that exist in g (dropping emptied groups) and adds
// a singleton for every node left uncovered. Throws Error(kGraphInvalid) when
// a node appears in two groups.
Partition CompletePartition(const ComputationGraph& g, const Partition& partial);

// Bytes of tensors produced inside a group and consumed outside it (or graph outputs).
int64_t CutBytes(const ComputationGraph& g, const std::vector<std::string>& nodes);

}  // namespace hdatrain
