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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hdatrain/error.h"

namespace hdatrain {

using Shape = std::vector<int64_t>;

enum class EdgeKind {
  kActivation,
  kWeight,
  kGradient,
  kOptimizerState,
  kInput,
  kLabel,
};

enum class Phase { kForward, kBackward, kOptimizer };

// Primitive operator set. Composite layers (batch norm, layer norm, softmax
// gradients) are expressed as clusters of these primitives.
enum class OpKind {
  kConv,
  kConvTranspose,
  kGemm,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kReLU,
  kReLUGrad,
  kSoftmax,
  kTranspose,
  kReshape,
  kReduceSum,
  kExpand,
  kRsqrt,
  kPool,
  kLoss,
  kLossGrad,
  kSgdUpdate,
  kAdamUpdate,
};

std::string_view ToString(OpKind kind);
std::string_view ToString(EdgeKind kind);
std::string_view ToString(Phase phase);
std::optional<OpKind> ParseOpKind(std::string_view name);
std::optional<EdgeKind> ParseEdgeKind(std::string_view name);
std::optional<Phase> ParsePhase(std::string_view name);

struct TensorEdge {
  std::string id;
  Shape shape;
  int element_bytes = 2;
  EdgeKind kind = EdgeKind::kActivation;
  // Derived by ComputationGraph; empty producer means the edge is external.
  std::string producer;
  std::vector<std::string> consumers;

  bool is_external() const { return producer.empty(); }
};

int64_t NumElements(const Shape& shape);
int64_t TensorBytes(const TensorEdge& edge);
std::string ShapeToString(const Shape& shape);

using AttrValue = std::variant<int64_t, double, std::vector<int64_t>>;
using Attrs = std::map<std::string, AttrValue>;

struct LoopDim {
  std::string name;
  int64_t extent = 1;

  bool operator==(const LoopDim&) const = default;
};

struct OperatorNode {
  std::string id;
  OpKind kind = OpKind::kAdd;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<LoopDim> loop_dims;
  Attrs attrs;
  Phase phase = Phase::kForward;

  // Product of the loop extents: the analytic multiply-accumulate count.
  int64_t macs() const;

  int64_t AttrInt(const std::string& name, int64_t fallback = 0) const;
  double AttrDouble(const std::string& name, double fallback = 0.0) const;
  std::vector<int64_t> AttrInts(const std::string& name) const;
  bool HasAttr(const std::string& name) const { return attrs.count(name) > 0; }
};

// Directed acyclic operator graph. Nodes and edges are kept in id-sorted maps
// so every traversal is deterministic.
class ComputationGraph {
 public:
  void AddEdge(TensorEdge edge);
  // Nodes may reference edges that do not exist yet; ValidateGraph reports
  // anything left dangling.
  void AddNode(OperatorNode node);
  void RemoveNode(const std::string& id);
  void ReplaceInput(const std::string& node_id, size_t index, const std::string& edge_id);
  void ReplaceOutput(const std::string& node_id, size_t index, const std::string& edge_id);
  void AddGraphInput(const std::string& edge_id);
  void AddGraphOutput(const std::string& edge_id);
  void RemoveGraphOutput(const std::string& edge_id);
  void SetEdgeKind(const std::string& edge_id, EdgeKind kind);

  const std::map<std::string, OperatorNode>& nodes() const { return nodes_; }
  const std::map<std::string, TensorEdge>& edges() const { return edges_; }
  const std::vector<std::string>& graph_inputs() const { return inputs_; }
  const std::vector<std::string>& graph_outputs() const { return outputs_; }

  bool HasNode(const std::string& id) const { return nodes_.count(id) > 0; }
  bool HasEdge(const std::string& id) const { return edges_.count(id) > 0; }
  const OperatorNode& node(const std::string& id) const;
  const TensorEdge& edge(const std::string& id) const;
  OperatorNode& mutable_node(const std::string& id);

  bool IsGraphInput(const std::string& edge_id) const;
  bool IsGraphOutput(const std::string& edge_id) const;

  bool operator==(const ComputationGraph& other) const;

 private:
  void Link(const OperatorNode& node);
  void Unlink(const OperatorNode& node);

  std::map<std::string, OperatorNode> nodes_;
  std::map<std::string, TensorEdge> edges_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::set<std::string> dangling_;  // referenced by a node, not yet declared
};

enum class DiagnosticKind {
  kMissingProducer,
  kDuplicateProducer,
  kUnknownEdge,
  kOrphanEdge,
  kSelfLoop,
  kInvalidShape,
  kArityMismatch,
  kShapeMismatch,
  kLoopDimsMismatch,
  kCycleDetected,
  kProducedGraphInput,
  kUnknownGraphInput,
  kUnknownGraphOutput,
};

std::string_view ToString(DiagnosticKind kind);

struct Diagnostic {
  DiagnosticKind kind;
  std::string subject;  // offending node or edge id
  std::string message;
};

std::vector<Diagnostic> ValidateGraph(const ComputationGraph& graph);

class CycleDetectedError : public Error {
 public:
  explicit CycleDetectedError(std::vector<std::string> cycle);
  const std::vector<std::string>& cycle() const { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

// Kahn's algorithm with the smallest ready node id picked first.
std::vector<std::string> TopologicalOrder(const ComputationGraph& graph);

}  // namespace hdatrain
