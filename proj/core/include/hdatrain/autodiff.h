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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "hdatrain/graph.h"

namespace hdatrain {

enum class LossKind { kCrossEntropyWithSoftmax, kMeanSquaredError };

struct LossSpec {
  LossKind kind = LossKind::kCrossEntropyWithSoftmax;
  // Label edge. Created as a graph input shaped like the network output when
  // the forward graph does not already declare it.
  std::string target = "label";
};

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double lr = 0.01;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 1;  // Adam bias-correction step

  static OptimizerSpec Sgd(double lr, double momentum);
  static OptimizerSpec Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Throws Error(kInvalidParam) when a hyper-parameter is out of range.
  void Validate() const;
  int num_states() const { return kind == OptimizerKind::kAdam ? 2 : 1; }
};

std::string_view ToString(LossKind kind);
std::string_view ToString(OptimizerKind kind);

struct ParameterInfo {
  std::string weight;
  std::string grad;                         // final accumulated gradient edge
  std::string grad_node;                    // node producing `grad`
  std::string update_node;                  // empty until an optimizer is inserted
  std::vector<std::string> states;          // optimizer state inputs
  std::string updated_weight;               // θ'
  std::vector<std::string> updated_states;  // state'
};

struct TrainingGraph {
  ComputationGraph graph;
  LossSpec loss;
  OptimizerSpec optimizer;
  bool has_optimizer = false;
  std::string logits;                     // forward network output
  std::string loss_edge;                  // scalar loss
  std::vector<ParameterInfo> parameters;  // sorted by weight id
  // Forward edge -> backward nodes that read it.
  std::map<std::string, std::vector<std::string>> activation_map;
  // Parameter edge -> optimizer state edges.
  std::map<std::string, std::vector<std::string>> state_edges;

  const ParameterInfo* FindParameter(const std::string& weight) const;
};

// Copy of `fwd` with the label edge and the Loss node appended; the loss edge
// replaces the network output as the only graph output.
ComputationGraph AttachLoss(const ComputationGraph& fwd, const LossSpec& loss,
                            std::string* loss_edge = nullptr);

// Appends the loss, the backward primitives and (unless `with_optimizer` is
// false) one update node per parameter. Gradients are only produced for
// tensors that depend on a weight. Throws Error(kUnsupportedOperator) for
// kinds without a backward rule and Error(kGraphInvalid) when the forward
// graph is invalid or does not have exactly one output.
//
// Node id prefixes are "f" (forward), "g" (backward) and "o" (optimizer), so
// the id-ordered topological sort runs the phases in that order.
TrainingGraph BuildTrainingGraph(const ComputationGraph& fwd, const LossSpec& loss,
                                 const OptimizerSpec& opt, bool with_optimizer = true);

// Adds SgdUpdate/AdamUpdate nodes (prefix "o") for every parameter.
void InsertOptimizer(TrainingGraph* tg, const OptimizerSpec& opt);

// Rebuilds the bookkeeping of a training graph that was loaded from a file.
// Parameters are recovered from the optimizer nodes, so graphs built without
// an optimizer come back with an empty parameter list.
TrainingGraph AnalyzeTrainingGraph(const ComputationGraph& g);

struct ActivationInfo {
  std::string edge;
  int64_t bytes = 0;           // m_a
  int64_t recompute_macs = 0;  // r_a
};

// Forward-produced edges read by at least one backward node, sorted by id.
// r_a sums the MACs of forward nodes between the edge and the nearest graph
// inputs or other members of the set.
std::vector<ActivationInfo> ActivationSet(const ComputationGraph& g);
inline std::vector<ActivationInfo> ActivationSet(const TrainingGraph& tg) {
  return ActivationSet(tg.graph);
}

// Forward nodes that must be re-executed to regenerate `edge` when every edge
// in `available` (plus graph inputs) is resident. Sorted by id.
std::vector<std::string> RecomputeSubgraph(const ComputationGraph& g, const std::string& edge,
                                           const std::set<std::string>& available);

struct MemoryBreakdown {
  int64_t parameters = 0;
  int64_t gradients = 0;
  int64_t activations = 0;
  int64_t optimizer_states = 0;

  int64_t total() const { return parameters + gradients + activations + optimizer_states; }
};

// Batch size is whatever the graph shapes encode.
MemoryBreakdown TrainingMemoryBreakdown(const TrainingGraph& tg);

}  // namespace hdatrain
