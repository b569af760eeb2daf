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

#include "hdatrain/graph.h"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "hdatrain/ops.h"

namespace hdatrain {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig:
      return "InvalidConfig";
    case ErrorCode::kInvalidParam:
      return "InvalidParam";
    case ErrorCode::kParseError:
      return "ParseError";
    case ErrorCode::kSchemaViolation:
      return "SchemaViolation";
    case ErrorCode::kGraphInvalid:
      return "GraphInvalid";
    case ErrorCode::kCycleDetected:
      return "CycleDetected";
    case ErrorCode::kUnsupportedOperator:
      return "UnsupportedOperator";
    case ErrorCode::kShapeMismatch:
      return "ShapeMismatch";
    case ErrorCode::kUnboundInput:
      return "UnboundInput";
    case ErrorCode::kPlanMismatch:
      return "PlanMismatch";
    case ErrorCode::kIncompatibleCore:
      return "IncompatibleCore";
    case ErrorCode::kMemoryExceeded:
      return "MemoryExceeded";
    case ErrorCode::kUnmappableNode:
      return "UnmappableNode";
    case ErrorCode::kIo:
      return "IoError";
  }
  return "Unknown";
}

namespace {

constexpr std::pair<OpKind, std::string_view> kOpNames[] = {
    {OpKind::kConv, "Conv"},
    {OpKind::kConvTranspose, "ConvTranspose"},
    {OpKind::kGemm, "Gemm"},
    {OpKind::kMatMul, "MatMul"},
    {OpKind::kAdd, "Add"},
    {OpKind::kSub, "Sub"},
    {OpKind::kMul, "Mul"},
    {OpKind::kScale, "Scale"},
    {OpKind::kReLU, "ReLU"},
    {OpKind::kReLUGrad, "ReLUGrad"},
    {OpKind::kSoftmax, "Softmax"},
    {OpKind::kTranspose, "Transpose"},
    {OpKind::kReshape, "Reshape"},
    {OpKind::kReduceSum, "ReduceSum"},
    {OpKind::kExpand, "Expand"},
    {OpKind::kRsqrt, "Rsqrt"},
    {OpKind::kPool, "Pool"},
    {OpKind::kLoss, "Loss"},
    {OpKind::kLossGrad, "LossGrad"},
    {OpKind::kSgdUpdate, "SgdUpdate"},
    {OpKind::kAdamUpdate, "AdamUpdate"},
};

constexpr std::pair<EdgeKind, std::string_view> kEdgeNames[] = {
    {EdgeKind::kActivation, "activation"}, {EdgeKind::kWeight, "weight"},
    {EdgeKind::kGradient, "gradient"},     {EdgeKind::kOptimizerState, "optimizer_state"},
    {EdgeKind::kInput, "input"},           {EdgeKind::kLabel, "label"},
};

constexpr std::pair<Phase, std::string_view> kPhaseNames[] = {
    {Phase::kForward, "forward"},
    {Phase::kBackward, "backward"},
    {Phase::kOptimizer, "optimizer"},
};

template <typename E, size_t N>
std::string_view NameOf(const std::pair<E, std::string_view> (&table)[N], E value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "?";
}

template <typename E, size_t N>
std::optional<E> Lookup(const std::pair<E, std::string_view> (&table)[N], std::string_view name) {
  for (const auto& [e, n] : table) {
    if (n == name) return e;
  }
  return std::nullopt;
}

void InsertSorted(std::vector<std::string>& v, const std::string& s) {
  auto it = std::lower_bound(v.begin(), v.end(), s);
  if (it == v.end() || *it != s) v.insert(it, s);
}

}  // namespace

std::string_view ToString(OpKind kind) { return NameOf(kOpNames, kind); }
std::string_view ToString(EdgeKind kind) { return NameOf(kEdgeNames, kind); }
std::string_view ToString(Phase phase) { return NameOf(kPhaseNames, phase); }
std::optional<OpKind> ParseOpKind(std::string_view name) { return Lookup(kOpNames, name); }
std::optional<EdgeKind> ParseEdgeKind(std::string_view name) { return Lookup(kEdgeNames, name); }
std::optional<Phase> ParsePhase(std::string_view name) { return Lookup(kPhaseNames, name); }

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

int64_t TensorBytes(const TensorEdge& edge) { return NumElements(edge.shape) * edge.element_bytes; }

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

int64_t OperatorNode::macs() const {
  int64_t n = 1;
  for (const auto& d : loop_dims) n *= d.extent;
  return n;
}

int64_t OperatorNode::AttrInt(const std::string& name, int64_t fallback) const {
  auto it = attrs.find(name);
  if (it == attrs.end()) return fallback;
  if (auto* v = std::get_if<int64_t>(&it->second)) return *v;
  if (auto* d = std::get_if<double>(&it->second)) return static_cast<int64_t>(*d);
  return fallback;
}

double OperatorNode::AttrDouble(const std::string& name, double fallback) const {
  auto it = attrs.find(name);
  if (it == attrs.end()) return fallback;
  if (auto* d = std::get_if<double>(&it->second)) return *d;
  if (auto* v = std::get_if<int64_t>(&it->second)) return static_cast<double>(*v);
  return fallback;
}

std::vector<int64_t> OperatorNode::AttrInts(const std::string& name) const {
  auto it = attrs.find(name);
  if (it == attrs.end()) return {};
  if (auto* v = std::get_if<std::vector<int64_t>>(&it->second)) return *v;
  return {};
}

void ComputationGraph::AddEdge(TensorEdge edge) {
  if (edges_.count(edge.id)) {
    throw Error(ErrorCode::kGraphInvalid, "duplicate edge id " + edge.id);
  }
  edge.producer.clear();
  edge.consumers.clear();
  std::string id = edge.id;
  edges_.emplace(id, std::move(edge));
  if (!dangling_.erase(id)) return;
  // Re-derive links from nodes that were added before this edge.
  for (const auto& [nid, node] : nodes_) {
    for (const auto& in : node.inputs) {
      if (in == id) InsertSorted(edges_[id].consumers, nid);
    }
    for (const auto& out : node.outputs) {
      if (out == id && edges_[id].producer.empty()) edges_[id].producer = nid;
    }
  }
}

void ComputationGraph::Link(const OperatorNode& node) {
  for (const auto& in : node.inputs) {
    auto it = edges_.find(in);
    if (it != edges_.end()) {
      InsertSorted(it->second.consumers, node.id);
    } else {
      dangling_.insert(in);
    }
  }
  for (const auto& out : node.outputs) {
    auto it = edges_.find(out);
    if (it == edges_.end()) {
      dangling_.insert(out);
    } else if (it->second.producer.empty()) {
      it->second.producer = node.id;
    }
  }
}

void ComputationGraph::Unlink(const OperatorNode& node) {
  for (const auto& in : node.inputs) {
    auto it = edges_.find(in);
    if (it == edges_.end()) continue;
    auto& c = it->second.consumers;
    c.erase(std::remove(c.begin(), c.end(), node.id), c.end());
  }
  for (const auto& out : node.outputs) {
    auto it = edges_.find(out);
    if (it != edges_.end() && it->second.producer == node.id) {
      it->second.producer.clear();
      // Another node may also claim this edge (invalid graph); keep it linked.
      for (const auto& [nid, other] : nodes_) {
        if (nid == node.id) continue;
        if (std::find(other.outputs.begin(), other.outputs.end(), out) != other.outputs.end()) {
          it->second.producer = nid;
          break;
        }
      }
    }
  }
}

void ComputationGraph::AddNode(OperatorNode node) {
  if (nodes_.count(node.id)) {
    throw Error(ErrorCode::kGraphInvalid, "duplicate node id " + node.id);
  }
  std::string id = node.id;
  auto [it, inserted] = nodes_.emplace(id, std::move(node));
  Link(it->second);
}

void ComputationGraph::RemoveNode(const std::string& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) return;
  OperatorNode node = it->second;
  nodes_.erase(it);
  Unlink(node);
}

void ComputationGraph::ReplaceInput(const std::string& node_id, size_t index,
                                    const std::string& edge_id) {
  OperatorNode node = this->node(node_id);
  RemoveNode(node_id);
  node.inputs.at(index) = edge_id;
  AddNode(std::move(node));
}

void ComputationGraph::ReplaceOutput(const std::string& node_id, size_t index,
                                     const std::string& edge_id) {
  OperatorNode node = this->node(node_id);
  RemoveNode(node_id);
  node.outputs.at(index) = edge_id;
  AddNode(std::move(node));
}

void ComputationGraph::AddGraphInput(const std::string& edge_id) {
  if (!IsGraphInput(edge_id)) inputs_.push_back(edge_id);
}

void ComputationGraph::AddGraphOutput(const std::string& edge_id) {
  if (!IsGraphOutput(edge_id)) outputs_.push_back(edge_id);
}

void ComputationGraph::RemoveGraphOutput(const std::string& edge_id) {
  outputs_.erase(std::remove(outputs_.begin(), outputs_.end(), edge_id), outputs_.end());
}

const OperatorNode& ComputationGraph::node(const std::string& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw Error(ErrorCode::kGraphInvalid, "unknown node " + id);
  }
  return it->second;
}

void ComputationGraph::SetEdgeKind(const std::string& edge_id, EdgeKind kind) {
  auto it = edges_.find(edge_id);
  if (it == edges_.end()) throw Error(ErrorCode::kGraphInvalid, "unknown edge " + edge_id);
  it->second.kind = kind;
}

OperatorNode& ComputationGraph::mutable_node(const std::string& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) {
    throw Error(ErrorCode::kGraphInvalid, "unknown node " + id);
  }
  return it->second;
}

const TensorEdge& ComputationGraph::edge(const std::string& id) const {
  auto it = edges_.find(id);
  if (it == edges_.end()) {
    throw Error(ErrorCode::kGraphInvalid, "unknown edge " + id);
  }
  return it->second;
}

bool ComputationGraph::IsGraphInput(const std::string& edge_id) const {
  return std::find(inputs_.begin(), inputs_.end(), edge_id) != inputs_.end();
}

bool ComputationGraph::IsGraphOutput(const std::string& edge_id) const {
  return std::find(outputs_.begin(), outputs_.end(), edge_id) != outputs_.end();
}

bool ComputationGraph::operator==(const ComputationGraph& other) const {
  if (inputs_ != other.inputs_ || outputs_ != other.outputs_) return false;
  if (nodes_.size() != other.nodes_.size()) return false;
  if (edges_.size() != other.edges_.size()) return false;
  for (const auto& [id, n] : nodes_) {
    auto it = other.nodes_.find(id);
    if (it == other.nodes_.end()) return false;
    const auto& m = it->second;
    if (n.kind != m.kind || n.inputs != m.inputs || n.outputs != m.outputs ||
        n.loop_dims != m.loop_dims || n.attrs != m.attrs || n.phase != m.phase) {
      return false;
    }
  }
  for (const auto& [id, e] : edges_) {
    auto it = other.edges_.find(id);
    if (it == other.edges_.end()) return false;
    const auto& f = it->second;
    if (e.shape != f.shape || e.element_bytes != f.element_bytes || e.kind != f.kind ||
        e.producer != f.producer || e.consumers != f.consumers) {
      return false;
    }
  }
  return true;
}

std::string_view ToString(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::kMissingProducer:
      return "MissingProducer";
    case DiagnosticKind::kDuplicateProducer:
      return "DuplicateProducer";
    case DiagnosticKind::kUnknownEdge:
      return "UnknownEdge";
    case DiagnosticKind::kOrphanEdge:
      return "OrphanEdge";
    case DiagnosticKind::kSelfLoop:
      return "SelfLoop";
    case DiagnosticKind::kInvalidShape:
      return "InvalidShape";
    case DiagnosticKind::kArityMismatch:
      return "ArityMismatch";
    case DiagnosticKind::kShapeMismatch:
      return "ShapeMismatch";
    case DiagnosticKind::kLoopDimsMismatch:
      return "LoopDimsMismatch";
    case DiagnosticKind::kCycleDetected:
      return "CycleDetected";
    case DiagnosticKind::kProducedGraphInput:
      return "ProducedGraphInput";
    case DiagnosticKind::kUnknownGraphInput:
      return "UnknownGraphInput";
    case DiagnosticKind::kUnknownGraphOutput:
      return "UnknownGraphOutput";
  }
  return "?";
}

namespace {

// Returns the node ids of one cycle, or empty when the graph is acyclic.
// Edges that are unknown or multiply produced are ignored here; the caller
// reports those separately.
std::vector<std::string> FindCycle(const ComputationGraph& graph) {
  std::map<std::string, std::vector<std::string>> succ;
  for (const auto& [id, node] : graph.nodes()) {
    auto& s = succ[id];
    for (const auto& out : node.outputs) {
      if (!graph.HasEdge(out)) continue;
      for (const auto& c : graph.edge(out).consumers) s.push_back(c);
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  std::map<std::string, int> color;  // 0 white, 1 grey, 2 black
  std::vector<std::string> stack;
  std::vector<std::string> cycle;
  std::function<bool(const std::string&)> dfs = [&](const std::string& u) {
    color[u] = 1;
    stack.push_back(u);
    for (const auto& v : succ[u]) {
      if (color[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        cycle.assign(it, stack.end());
        return true;
      }
      if (color[v] == 0 && dfs(v)) return true;
    }
    stack.pop_back();
    color[u] = 2;
    return false;
  };
  for (const auto& [id, node] : graph.nodes()) {
    if (color[id] == 0 && dfs(id)) break;
  }
  std::sort(cycle.begin(), cycle.end());
  return cycle;
}

}  // namespace

std::vector<Diagnostic> ValidateGraph(const ComputationGraph& graph) {
  std::vector<Diagnostic> out;
  auto report = [&](DiagnosticKind k, const std::string& subject, const std::string& msg) {
    out.push_back({k, subject, msg});
  };

  std::map<std::string, int> producers;
  std::set<std::string> referenced;
  for (const auto& [id, node] : graph.nodes()) {
    for (const auto& e : node.outputs) {
      ++producers[e];
      referenced.insert(e);
    }
    for (const auto& e : node.inputs) referenced.insert(e);
  }

  for (const auto& e : graph.graph_inputs()) {
    if (!graph.HasEdge(e)) {
      report(DiagnosticKind::kUnknownGraphInput, e, "graph input not declared");
    } else if (producers.count(e)) {
      report(DiagnosticKind::kProducedGraphInput, e, "graph input is also produced by a node");
    }
  }
  for (const auto& e : graph.graph_outputs()) {
    if (!graph.HasEdge(e)) {
      report(DiagnosticKind::kUnknownGraphOutput, e, "graph output not declared");
    }
  }

  for (const auto& [id, edge] : graph.edges()) {
    if (edge.shape.empty()) {
      report(DiagnosticKind::kInvalidShape, id, "empty shape");
    }
    for (int64_t d : edge.shape) {
      if (d < 1) {
        report(DiagnosticKind::kInvalidShape, id,
               "non-positive dimension in " + ShapeToString(edge.shape));
        break;
      }
    }
    if (edge.element_bytes < 1) {
      report(DiagnosticKind::kInvalidShape, id, "element_bytes < 1");
    }
    int count = producers.count(id) ? producers[id] : 0;
    if (count > 1) {
      report(DiagnosticKind::kDuplicateProducer, id,
             "produced by " + std::to_string(count) + " nodes");
    }
    if (count == 0 && !graph.IsGraphInput(id)) {
      report(DiagnosticKind::kMissingProducer, id, "no producing node and not a graph input");
    }
    if (!referenced.count(id) && !graph.IsGraphInput(id) && !graph.IsGraphOutput(id)) {
      report(DiagnosticKind::kOrphanEdge, id, "edge is never referenced");
    }
  }

  for (const auto& [id, node] : graph.nodes()) {
    bool all_known = true;
    for (const auto& e : node.inputs) {
      if (!graph.HasEdge(e)) {
        report(DiagnosticKind::kUnknownEdge, id, "unknown input edge " + e);
        all_known = false;
      }
    }
    for (const auto& e : node.outputs) {
      if (!graph.HasEdge(e)) {
        report(DiagnosticKind::kUnknownEdge, id, "unknown output edge " + e);
        all_known = false;
      }
      if (std::find(node.inputs.begin(), node.inputs.end(), e) != node.inputs.end()) {
        report(DiagnosticKind::kSelfLoop, id, "node consumes its own output " + e);
      }
    }
    OpSignature sig = SignatureOf(node.kind);
    const int nin = static_cast<int>(node.inputs.size());
    const int nout = static_cast<int>(node.outputs.size());
    if (nin < sig.min_inputs || nin > sig.max_inputs || nout != sig.num_outputs) {
      report(DiagnosticKind::kArityMismatch, id,
             std::string(ToString(node.kind)) + " arity " + std::to_string(nin) + "->" +
                 std::to_string(nout));
      continue;
    }
    if (!all_known) continue;
    std::vector<Shape> in_shapes, out_shapes;
    for (const auto& e : node.inputs) in_shapes.push_back(graph.edge(e).shape);
    for (const auto& e : node.outputs) out_shapes.push_back(graph.edge(e).shape);
    try {
      auto inferred = InferOutputShapes(node.kind, node.attrs, in_shapes);
      if (inferred != out_shapes) {
        report(DiagnosticKind::kShapeMismatch, id,
               "declared output shape differs from inferred " + ShapeToString(inferred.front()));
        continue;
      }
      if (DeriveLoopDims(node.kind, node.attrs, in_shapes, out_shapes) != node.loop_dims) {
        report(DiagnosticKind::kLoopDimsMismatch, id, "loop_dims do not match operand shapes");
      }
    } catch (const Error& err) {
      report(DiagnosticKind::kShapeMismatch, id, err.what());
    }
  }

  auto cycle = FindCycle(graph);
  if (!cycle.empty()) {
    std::string joined;
    for (const auto& c : cycle) joined += (joined.empty() ? "" : ",") + c;
    report(DiagnosticKind::kCycleDetected, cycle.front(), "cycle {" + joined + "}");
  }
  return out;
}

namespace {
std::string JoinIds(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ",") + id;
  return s;
}
}  // namespace

CycleDetectedError::CycleDetectedError(std::vector<std::string> cycle)
    : Error(ErrorCode::kCycleDetected, "cycle {" + JoinIds(cycle) + "}"),
      cycle_(std::move(cycle)) {}

std::vector<std::string> TopologicalOrder(const ComputationGraph& graph) {
  std::map<std::string, int> indegree;
  for (const auto& [id, node] : graph.nodes()) {
    int deg = 0;
    for (const auto& in : node.inputs) {
      if (!graph.HasEdge(in)) continue;
      const auto& p = graph.edge(in).producer;
      if (!p.empty() && p != id) ++deg;
    }
    indegree[id] = deg;
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [id, deg] : indegree) {
    if (deg == 0) ready.push(id);
  }
  std::vector<std::string> order;
  order.reserve(graph.nodes().size());
  while (!ready.empty()) {
    std::string u = ready.top();
    ready.pop();
    order.push_back(u);
    for (const auto& out : graph.node(u).outputs) {
      if (!graph.HasEdge(out)) continue;
      for (const auto& c : graph.edge(out).consumers) {
        // A consumer reading the same edge twice still has one dependency per
        // input slot, matching the indegree count above.
        const auto& cn = graph.node(c);
        for (const auto& in : cn.inputs) {
          if (in == out && --indegree[c] == 0) ready.push(c);
        }
      }
    }
  }
  if (order.size() != graph.nodes().size()) {
    auto cycle = FindCycle(graph);
    if (cycle.empty()) {
      for (const auto& [id, deg] : indegree) {
        if (deg > 0) cycle.push_back(id);
      }
    }
    throw CycleDetectedError(cycle);
  }
  return order;
}

}  // namespace hdatrain
