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

#include "hdatrain/autodiff.h"

#include <algorithm>
#include <cctype>
#include <functional>

#include "hdatrain/ops.h"

namespace hdatrain {

OptimizerSpec OptimizerSpec::Sgd(double lr, double momentum) {
  OptimizerSpec s;
  s.kind = OptimizerKind::kSgdMomentum;
  s.lr = lr;
  s.momentum = momentum;
  return s;
}

OptimizerSpec OptimizerSpec::Adam(double lr, double beta1, double beta2, double eps) {
  OptimizerSpec s;
  s.kind = OptimizerKind::kAdam;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void OptimizerSpec::Validate() const {
  if (!(lr > 0)) throw Error(ErrorCode::kInvalidParam, "learning rate must be > 0");
  if (kind == OptimizerKind::kSgdMomentum) {
    if (!(momentum >= 0 && momentum < 1)) {
      throw Error(ErrorCode::kInvalidParam, "momentum must be in [0, 1)");
    }
    return;
  }
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
    throw Error(ErrorCode::kInvalidParam, "Adam betas must be in (0, 1)");
  }
  if (!(eps > 0)) throw Error(ErrorCode::kInvalidParam, "Adam eps must be > 0");
  if (step < 1) throw Error(ErrorCode::kInvalidParam, "Adam step must be >= 1");
}

std::string_view ToString(LossKind kind) {
  return kind == LossKind::kCrossEntropyWithSoftmax ? "cross_entropy_with_softmax"
                                                    : "mean_squared_error";
}

std::string_view ToString(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

const ParameterInfo* TrainingGraph::FindParameter(const std::string& weight) const {
  for (const auto& p : parameters) {
    if (p.weight == weight) return &p;
  }
  return nullptr;
}

namespace {

int NextIndex(const ComputationGraph& g, char prefix) {
  int best = 0;
  for (const auto& [id, node] : g.nodes()) {
    if (id.size() < 7 || id[0] != prefix || id[6] != '.') continue;
    bool digits = true;
    for (int i = 1; i <= 5; ++i) digits = digits && std::isdigit(static_cast<unsigned char>(id[i]));
    if (digits) best = std::max(best, std::stoi(id.substr(1, 5)));
  }
  return best + 1;
}

std::string ShortName(const std::string& id) {
  auto dot = id.find('.');
  return dot == std::string::npos ? id : id.substr(dot + 1);
}

class BackwardEmitter {
 public:
  BackwardEmitter(TrainingGraph* tg, std::set<std::string> needs)
      : graph_(tg->graph),
        b_(&tg->graph, "g", Phase::kBackward, tg->graph.edge(tg->logits).element_bytes,
           NextIndex(tg->graph, 'g')),
        needs_(std::move(needs)) {}

  void Contribute(const std::string& edge, const std::string& grad) {
    contrib_[edge].push_back(grad);
  }

  // Sums every contribution to `edge` with explicit Add nodes.
  std::string Accumulate(const std::string& edge) {
    auto it = contrib_.find(edge);
    if (it == contrib_.end() || it->second.empty()) return "";
    const auto& parts = it->second;
    std::string sum = parts[0];
    const std::string base =
        graph_.edge(edge).producer.empty() ? edge : ShortName(graph_.edge(edge).producer);
    for (size_t i = 1; i < parts.size(); ++i) {
      sum = Op(OpKind::kAdd, base + ".gacc", {sum, parts[i]});
    }
    return sum;
  }

  std::string Op(OpKind kind, const std::string& name, const std::vector<std::string>& in,
                 Attrs attrs = {}) {
    return b_.Op(kind, name, in, std::move(attrs), EdgeKind::kGradient);
  }

  const Shape& ShapeOf(const std::string& e) const { return graph_.edge(e).shape; }

  std::string ReduceTo(const std::string& g, const Shape& shape, const std::string& name,
                       bool force = false) {
    if (!force && ShapeOf(g) == shape) return g;
    return Op(OpKind::kReduceSum, name, {g}, {{"shape", shape}});
  }

  bool IsWeight(const std::string& e) const {
    const auto& edge = graph_.edge(e);
    return edge.is_external() && edge.kind == EdgeKind::kWeight;
  }

  void Emit(const OperatorNode& n, const std::string& g);

 private:
  bool Need(const OperatorNode& n, size_t i) const {
    return i < n.inputs.size() && needs_.count(n.inputs[i]) > 0;
  }

  // Broadcast-aware passthrough; weights always get their own reduction node.
  void Pass(const OperatorNode& n, size_t i, const std::string& g, const std::string& name) {
    const auto& e = n.inputs[i];
    Contribute(e, ReduceTo(g, ShapeOf(e), name, IsWeight(e)));
  }

  const ComputationGraph& graph_;
  GraphBuilder b_;
  std::set<std::string> needs_;
  std::map<std::string, std::vector<std::string>> contrib_;
};

Shape Leading(const Shape& s, int64_t last) {
  return {NumElements(Shape(s.begin(), s.end() - 1)), last};
}

std::vector<int64_t> SwapLast(size_t rank) {
  std::vector<int64_t> perm(rank);
  for (size_t i = 0; i < rank; ++i) perm[i] = static_cast<int64_t>(i);
  std::swap(perm[rank - 1], perm[rank - 2]);
  return perm;
}

void BackwardEmitter::Emit(const OperatorNode& n, const std::string& g) {
  const std::string base = ShortName(n.id);
  const auto& in = n.inputs;
  switch (n.kind) {
    case OpKind::kConv: {
      if (n.AttrInt("weight_grad") != 0) break;
      const int64_t stride = n.AttrInt("stride", 1);
      const int64_t pad = n.AttrInt("pad", 0);
      const Shape& xs = ShapeOf(in[0]);
      const Shape& ws = ShapeOf(in[1]);
      if (Need(n, 0)) {
        Contribute(in[0], Op(OpKind::kConvTranspose, base + ".dx", {g, in[1]},
                             {{"stride", stride},
                              {"pad", pad},
                              {"output_hw", std::vector<int64_t>{xs[2], xs[3]}}}));
      }
      if (Need(n, 1)) {
        Contribute(in[1], Op(OpKind::kConv, base + ".dw", {in[0], g},
                             {{"stride", stride},
                              {"pad", pad},
                              {"weight_grad", int64_t{1}},
                              {"kernel", std::vector<int64_t>{ws[2], ws[3]}}}));
      }
      if (Need(n, 2)) Contribute(in[2], ReduceTo(g, ShapeOf(in[2]), base + ".db", true));
      return;
    }
    case OpKind::kGemm: {
      const Shape& as = ShapeOf(in[0]);
      const Shape& bs = ShapeOf(in[1]);
      if (Need(n, 0)) {
        auto bt =
            Op(OpKind::kTranspose, base + ".wt", {in[1]}, {{"perm", std::vector<int64_t>{1, 0}}});
        Contribute(in[0], Op(OpKind::kGemm, base + ".dx", {g, bt}));
      }
      if (Need(n, 1)) {
        std::string a2 = in[0];
        std::string g2 = g;
        if (as.size() != 2) {
          a2 = Op(OpKind::kReshape, base + ".xflat", {in[0]}, {{"shape", Leading(as, as.back())}});
          g2 = Op(OpKind::kReshape, base + ".gflat", {g}, {{"shape", Leading(as, bs[1])}});
        }
        auto at =
            Op(OpKind::kTranspose, base + ".xt", {a2}, {{"perm", std::vector<int64_t>{1, 0}}});
        Contribute(in[1], Op(OpKind::kGemm, base + ".dw", {at, g2}));
      }
      if (Need(n, 2)) Contribute(in[2], ReduceTo(g, ShapeOf(in[2]), base + ".db", true));
      return;
    }
    case OpKind::kMatMul: {
      const auto perm = SwapLast(ShapeOf(in[0]).size());
      if (Need(n, 0)) {
        auto bt = Op(OpKind::kTranspose, base + ".bt", {in[1]}, {{"perm", perm}});
        Contribute(in[0], Op(OpKind::kMatMul, base + ".da", {g, bt}));
      }
      if (Need(n, 1)) {
        auto at = Op(OpKind::kTranspose, base + ".at", {in[0]}, {{"perm", perm}});
        Contribute(in[1], Op(OpKind::kMatMul, base + ".db", {at, g}));
      }
      return;
    }
    case OpKind::kAdd:
      if (Need(n, 0)) Pass(n, 0, g, base + ".da");
      if (Need(n, 1)) Pass(n, 1, g, base + ".db");
      return;
    case OpKind::kSub:
      if (Need(n, 0)) Pass(n, 0, g, base + ".da");
      if (Need(n, 1)) {
        auto r = ReduceTo(g, ShapeOf(in[1]), base + ".dbsum");
        Contribute(in[1], Op(OpKind::kScale, base + ".db", {r}, {{"alpha", -1.0}}));
      }
      return;
    case OpKind::kMul:
      if (Need(n, 0)) Contribute(in[0], Op(OpKind::kMul, base + ".da", {g, in[1]}));
      if (Need(n, 1)) {
        auto prod = Op(OpKind::kMul, base + ".dbprod", {g, in[0]});
        Contribute(in[1], ReduceTo(prod, ShapeOf(in[1]), base + ".db"));
      }
      return;
    case OpKind::kScale:
      if (Need(n, 0)) {
        Contribute(in[0],
                   Op(OpKind::kScale, base + ".dx", {g}, {{"alpha", n.AttrDouble("alpha", 1.0)}}));
      }
      return;
    case OpKind::kReLU:
      if (Need(n, 0)) {
        auto mask = Op(OpKind::kReLUGrad, base + ".mask", {n.outputs[0]});
        Contribute(in[0], Op(OpKind::kMul, base + ".dx", {g, mask}));
      }
      return;
    case OpKind::kSoftmax:
      if (Need(n, 0)) {
        const auto& y = n.outputs[0];
        Shape rows = ShapeOf(y);
        rows.back() = 1;
        auto gy = Op(OpKind::kMul, base + ".gy", {g, y});
        auto dot = Op(OpKind::kReduceSum, base + ".dot", {gy}, {{"shape", rows}});
        auto diff = Op(OpKind::kSub, base + ".diff", {g, dot});
        Contribute(in[0], Op(OpKind::kMul, base + ".dx", {diff, y}));
      }
      return;
    case OpKind::kTranspose:
      if (Need(n, 0)) {
        auto perm = n.AttrInts("perm");
        std::vector<int64_t> inv(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int64_t>(i);
        Contribute(in[0], Op(OpKind::kTranspose, base + ".dx", {g}, {{"perm", inv}}));
      }
      return;
    case OpKind::kReshape:
      if (Need(n, 0)) {
        Contribute(in[0], Op(OpKind::kReshape, base + ".dx", {g}, {{"shape", ShapeOf(in[0])}}));
      }
      return;
    case OpKind::kReduceSum:
      if (Need(n, 0)) {
        Contribute(in[0], Op(OpKind::kExpand, base + ".dx", {g}, {{"shape", ShapeOf(in[0])}}));
      }
      return;
    case OpKind::kExpand:
      if (Need(n, 0)) Pass(n, 0, g, base + ".dx");
      return;
    case OpKind::kRsqrt:
      if (Need(n, 0)) {
        const auto& y = n.outputs[0];
        auto y2 = Op(OpKind::kMul, base + ".y2", {y, y});
        auto y3 = Op(OpKind::kMul, base + ".y3", {y2, y});
        auto slope = Op(OpKind::kScale, base + ".slope", {y3}, {{"alpha", -0.5}});
        Contribute(in[0], Op(OpKind::kMul, base + ".dx", {g, slope}));
      }
      return;
    case OpKind::kPool:
      if (Need(n, 0)) {
        const Shape& xs = ShapeOf(in[0]);
        auto spread = Op(OpKind::kExpand, base + ".spread", {g}, {{"shape", xs}});
        Contribute(in[0], Op(OpKind::kScale, base + ".dx", {spread},
                             {{"alpha", 1.0 / static_cast<double>(xs[2] * xs[3])}}));
      }
      return;
    default:
      break;
  }
  throw Error(ErrorCode::kUnsupportedOperator,
              "no backward rule for " + std::string(ToString(n.kind)) + " (" + n.id + ")");
}

// Edges whose value depends on at least one weight.
std::set<std::string> WeightDependent(const ComputationGraph& g,
                                      const std::vector<std::string>& order) {
  std::set<std::string> dep;
  for (const auto& [id, e] : g.edges()) {
    if (e.is_external() && e.kind == EdgeKind::kWeight) dep.insert(id);
  }
  for (const auto& nid : order) {
    const auto& n = g.node(nid);
    bool any = std::any_of(n.inputs.begin(), n.inputs.end(),
                           [&](const std::string& e) { return dep.count(e) > 0; });
    if (any) dep.insert(n.outputs.begin(), n.outputs.end());
  }
  return dep;
}

void FillActivationMap(TrainingGraph* tg) {
  tg->activation_map.clear();
  for (const auto& a : ActivationSet(tg->graph)) {
    auto& consumers = tg->activation_map[a.edge];
    for (const auto& c : tg->graph.edge(a.edge).consumers) {
      if (tg->graph.node(c).phase == Phase::kBackward) consumers.push_back(c);
    }
  }
}

}  // namespace

ComputationGraph AttachLoss(const ComputationGraph& fwd, const LossSpec& loss,
                            std::string* loss_edge) {
  if (fwd.graph_outputs().size() != 1) {
    throw Error(ErrorCode::kGraphInvalid, "forward graph must have exactly one output");
  }
  ComputationGraph g = fwd;
  const std::string logits = fwd.graph_outputs()[0];
  const Shape out_shape = g.edge(logits).shape;
  const int elem = g.edge(logits).element_bytes;
  if (!g.HasEdge(loss.target)) {
    g.AddEdge({loss.target, out_shape, elem, EdgeKind::kLabel, {}, {}});
    g.AddGraphInput(loss.target);
  } else if (g.edge(loss.target).shape != out_shape) {
    throw Error(ErrorCode::kShapeMismatch, "loss target shape differs from network output");
  }
  const int64_t loss_kind =
      loss.kind == LossKind::kCrossEntropyWithSoftmax ? kLossCrossEntropy : kLossMeanSquared;
  GraphBuilder fb(&g, "f", Phase::kForward, elem, NextIndex(g, 'f'));
  auto out = fb.Op(OpKind::kLoss, "loss", {logits, loss.target}, {{"loss_kind", loss_kind}});
  g.RemoveGraphOutput(logits);
  g.AddGraphOutput(out);
  if (loss_edge) *loss_edge = out;
  return g;
}

TrainingGraph BuildTrainingGraph(const ComputationGraph& fwd, const LossSpec& loss,
                                 const OptimizerSpec& opt, bool with_optimizer) {
  if (with_optimizer) opt.Validate();
  auto diags = ValidateGraph(fwd);
  if (!diags.empty()) {
    throw Error(ErrorCode::kGraphInvalid,
                "forward graph invalid: " + std::string(ToString(diags[0].kind)) + "(" +
                    diags[0].subject + ")");
  }
  for (const auto& [id, n] : fwd.nodes()) {
    if (n.phase != Phase::kForward) {
      throw Error(ErrorCode::kGraphInvalid, "node " + id + " is not a forward node");
    }
  }

  TrainingGraph tg;
  tg.loss = loss;
  tg.logits = fwd.graph_outputs()[0];
  tg.graph = AttachLoss(fwd, loss, &tg.loss_edge);
  ComputationGraph& g = tg.graph;
  const int64_t loss_kind = g.node(g.edge(tg.loss_edge).producer).AttrInt("loss_kind");

  const auto order = TopologicalOrder(g);
  BackwardEmitter em(&tg, WeightDependent(g, order));
  em.Contribute(tg.logits, em.Op(OpKind::kLossGrad, "loss.grad", {tg.logits, loss.target},
                                 {{"loss_kind", loss_kind}}));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& n = g.node(*it);
    if (n.kind == OpKind::kLoss) continue;
    // Fan-out accumulation happens once every consumer has contributed.
    auto grad = em.Accumulate(n.outputs[0]);
    if (grad.empty()) continue;
    em.Emit(n, grad);
  }

  for (const auto& [id, e] : fwd.edges()) {
    if (!e.is_external() || e.kind != EdgeKind::kWeight) continue;
    auto grad = em.Accumulate(id);
    if (grad.empty()) continue;
    ParameterInfo p;
    p.weight = id;
    p.grad = grad;
    p.grad_node = g.edge(grad).producer;
    g.AddGraphOutput(grad);
    tg.parameters.push_back(p);
  }
  if (with_optimizer) InsertOptimizer(&tg, opt);
  FillActivationMap(&tg);
  return tg;
}

void InsertOptimizer(TrainingGraph* tg, const OptimizerSpec& opt) {
  opt.Validate();
  if (tg->has_optimizer) throw Error(ErrorCode::kGraphInvalid, "optimizer already inserted");
  ComputationGraph& g = tg->graph;
  GraphBuilder ob(&g, "o", Phase::kOptimizer, g.edge(tg->logits).element_bytes, NextIndex(g, 'o'));
  const bool adam = opt.kind == OptimizerKind::kAdam;
  for (auto& p : tg->parameters) {
    const TensorEdge& w = g.edge(p.weight);
    std::vector<std::string> states = {p.weight + (adam ? ".m" : ".v")};
    if (adam) states.push_back(p.weight + ".v");
    for (const auto& s : states) {
      g.AddEdge({s, w.shape, w.element_bytes, EdgeKind::kOptimizerState, {}, {}});
      g.AddGraphInput(s);
    }
    std::vector<std::string> in = {p.weight, p.grad};
    in.insert(in.end(), states.begin(), states.end());
    Attrs attrs = {{"lr", opt.lr}};
    if (adam) {
      attrs["beta1"] = opt.beta1;
      attrs["beta2"] = opt.beta2;
      attrs["eps"] = opt.eps;
      attrs["step"] = opt.step;
    } else {
      attrs["momentum"] = opt.momentum;
    }
    auto outs = ob.AddOp(adam ? OpKind::kAdamUpdate : OpKind::kSgdUpdate, "update." + p.weight, in,
                         attrs, EdgeKind::kOptimizerState);
    g.SetEdgeKind(outs[0], EdgeKind::kWeight);
    g.RemoveGraphOutput(p.grad);
    for (const auto& o : outs) g.AddGraphOutput(o);
    p.update_node = g.edge(outs[0]).producer;
    p.states = states;
    p.updated_weight = outs[0];
    p.updated_states.assign(outs.begin() + 1, outs.end());
    tg->state_edges[p.weight] = states;
  }
  tg->optimizer = opt;
  tg->has_optimizer = true;
}

TrainingGraph AnalyzeTrainingGraph(const ComputationGraph& g) {
  TrainingGraph tg;
  tg.graph = g;
  const OperatorNode* loss = nullptr;
  for (const auto& [id, n] : g.nodes()) {
    if (n.kind == OpKind::kLoss && n.phase == Phase::kForward) {
      if (loss) throw Error(ErrorCode::kGraphInvalid, "more than one Loss node");
      loss = &n;
    }
  }
  if (!loss) throw Error(ErrorCode::kGraphInvalid, "not a training graph: no Loss node");
  tg.logits = loss->inputs[0];
  tg.loss.target = loss->inputs[1];
  tg.loss.kind = loss->AttrInt("loss_kind") == kLossMeanSquared
                     ? LossKind::kMeanSquaredError
                     : LossKind::kCrossEntropyWithSoftmax;
  tg.loss_edge = loss->outputs[0];

  std::map<std::string, ParameterInfo> params;
  for (const auto& [id, n] : g.nodes()) {
    if (n.kind != OpKind::kSgdUpdate && n.kind != OpKind::kAdamUpdate) continue;
    ParameterInfo p;
    p.weight = n.inputs[0];
    p.grad = n.inputs[1];
    p.grad_node = g.edge(p.grad).producer;
    p.update_node = id;
    p.states.assign(n.inputs.begin() + 2, n.inputs.end());
    p.updated_weight = n.outputs[0];
    p.updated_states.assign(n.outputs.begin() + 1, n.outputs.end());
    tg.state_edges[p.weight] = p.states;
    OptimizerSpec& o = tg.optimizer;
    o.lr = n.AttrDouble("lr", o.lr);
    if (n.kind == OpKind::kAdamUpdate) {
      o.kind = OptimizerKind::kAdam;
      o.beta1 = n.AttrDouble("beta1", o.beta1);
      o.beta2 = n.AttrDouble("beta2", o.beta2);
      o.eps = n.AttrDouble("eps", o.eps);
      o.step = n.AttrInt("step", o.step);
    } else {
      o.kind = OptimizerKind::kSgdMomentum;
      o.momentum = n.AttrDouble("momentum", o.momentum);
    }
    tg.has_optimizer = true;
    params[p.weight] = p;
  }
  for (auto& [w, p] : params) tg.parameters.push_back(std::move(p));
  FillActivationMap(&tg);
  return tg;
}

std::vector<std::string> RecomputeSubgraph(const ComputationGraph& g, const std::string& edge,
                                           const std::set<std::string>& available) {
  std::set<std::string> nodes;
  std::vector<std::string> stack = {edge};
  std::set<std::string> seen = {edge};
  while (!stack.empty()) {
    auto e = stack.back();
    stack.pop_back();
    const auto& te = g.edge(e);
    if (te.is_external()) continue;
    if (e != edge && available.count(e)) continue;
    const auto& n = g.node(te.producer);
    if (n.phase != Phase::kForward || !nodes.insert(n.id).second) continue;
    for (const auto& in : n.inputs) {
      if (seen.insert(in).second) stack.push_back(in);
    }
  }
  return {nodes.begin(), nodes.end()};
}

std::vector<ActivationInfo> ActivationSet(const ComputationGraph& g) {
  std::set<std::string> members;
  for (const auto& [id, e] : g.edges()) {
    if (e.is_external() || g.node(e.producer).phase != Phase::kForward) continue;
    for (const auto& c : e.consumers) {
      if (g.node(c).phase == Phase::kBackward) {
        members.insert(id);
        break;
      }
    }
  }
  std::vector<ActivationInfo> out;
  for (const auto& id : members) {
    ActivationInfo a;
    a.edge = id;
    a.bytes = TensorBytes(g.edge(id));
    for (const auto& n : RecomputeSubgraph(g, id, members)) a.recompute_macs += g.node(n).macs();
    out.push_back(a);
  }
  return out;
}

MemoryBreakdown TrainingMemoryBreakdown(const TrainingGraph& tg) {
  MemoryBreakdown m;
  const auto& g = tg.graph;
  for (const auto& p : tg.parameters) {
    m.parameters += TensorBytes(g.edge(p.weight));
    m.gradients += TensorBytes(g.edge(p.grad));
    if (tg.has_optimizer) {
      for (const auto& s : p.states) m.optimizer_states += TensorBytes(g.edge(s));
    } else {
      m.optimizer_states += tg.optimizer.num_states() * TensorBytes(g.edge(p.weight));
    }
  }
  for (const auto& a : ActivationSet(g)) m.activations += a.bytes;
  return m;
}

}  // namespace hdatrain
