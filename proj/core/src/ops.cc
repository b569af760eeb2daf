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

#include "hdatrain/ops.h"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace hdatrain {

OpSignature SignatureOf(OpKind kind) {
  switch (kind) {
    case OpKind::kConv:
      return {2, 3, 1};
    case OpKind::kGemm:
      return {2, 3, 1};
    case OpKind::kConvTranspose:
    case OpKind::kMatMul:
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kLoss:
    case OpKind::kLossGrad:
      return {2, 2, 1};
    case OpKind::kSgdUpdate:
      return {3, 3, 2};
    case OpKind::kAdamUpdate:
      return {4, 4, 3};
    default:
      return {1, 1, 1};
  }
}

bool IsConvolutional(OpKind kind) {
  return kind == OpKind::kConv || kind == OpKind::kConvTranspose;
}

bool IsGemmLike(OpKind kind) { return kind == OpKind::kGemm || kind == OpKind::kMatMul; }

bool RequiresArrayCore(OpKind kind) { return IsConvolutional(kind) || IsGemmLike(kind); }

bool BroadcastsTo(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) return false;
  const size_t off = to.size() - from.size();
  for (size_t i = 0; i < from.size(); ++i) {
    if (from[i] != 1 && from[i] != to[off + i]) return false;
  }
  return true;
}

namespace {

[[noreturn]] void Mismatch(OpKind kind, const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, std::string(ToString(kind)) + ": " + what);
}

std::vector<int64_t> Ints(const Attrs& attrs, const char* name) {
  auto it = attrs.find(name);
  if (it == attrs.end()) return {};
  if (auto* v = std::get_if<std::vector<int64_t>>(&it->second)) return *v;
  return {};
}

int64_t Int(const Attrs& attrs, const char* name, int64_t fallback) {
  auto it = attrs.find(name);
  if (it == attrs.end()) return fallback;
  if (auto* v = std::get_if<int64_t>(&it->second)) return *v;
  if (auto* d = std::get_if<double>(&it->second)) return static_cast<int64_t>(*d);
  return fallback;
}

int64_t ConvOut(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

std::vector<LoopDim> NamedDims(const Shape& s) {
  std::vector<LoopDim> d;
  for (size_t i = 0; i < s.size(); ++i) d.push_back({"d" + std::to_string(i), s[i]});
  return d;
}

}  // namespace

std::vector<Shape> InferOutputShapes(OpKind kind, const Attrs& attrs,
                                     const std::vector<Shape>& in) {
  OpSignature sig = SignatureOf(kind);
  if (static_cast<int>(in.size()) < sig.min_inputs ||
      static_cast<int>(in.size()) > sig.max_inputs) {
    Mismatch(kind, "wrong number of inputs");
  }
  switch (kind) {
    case OpKind::kConv: {
      const int64_t stride = Int(attrs, "stride", 1);
      const int64_t pad = Int(attrs, "pad", 0);
      if (in[0].size() != 4 || in[1].size() != 4 || stride < 1 || pad < 0) {
        Mismatch(kind, "expects rank-4 operands");
      }
      if (Int(attrs, "weight_grad", 0) != 0) {
        auto kernel = Ints(attrs, "kernel");
        if (kernel.size() != 2) Mismatch(kind, "weight_grad needs kernel=[FY,FX]");
        const auto& x = in[0];
        const auto& dy = in[1];
        if (x[0] != dy[0] || ConvOut(x[2], kernel[0], stride, pad) != dy[2] ||
            ConvOut(x[3], kernel[1], stride, pad) != dy[3]) {
          Mismatch(kind, "dY geometry does not match X");
        }
        return {{dy[1], x[1], kernel[0], kernel[1]}};
      }
      const auto& x = in[0];
      const auto& w = in[1];
      if (x[1] != w[1]) Mismatch(kind, "channel mismatch");
      const int64_t oy = ConvOut(x[2], w[2], stride, pad);
      const int64_t ox = ConvOut(x[3], w[3], stride, pad);
      if (oy < 1 || ox < 1) Mismatch(kind, "kernel larger than input");
      if (in.size() == 3 && in[2] != Shape{w[0], 1, 1}) {
        Mismatch(kind, "bias must be (K,1,1)");
      }
      return {{x[0], w[0], oy, ox}};
    }
    case OpKind::kConvTranspose: {
      const int64_t stride = Int(attrs, "stride", 1);
      const int64_t pad = Int(attrs, "pad", 0);
      auto hw = Ints(attrs, "output_hw");
      const auto& dy = in[0];
      const auto& w = in[1];
      if (dy.size() != 4 || w.size() != 4 || hw.size() != 2) {
        Mismatch(kind, "expects rank-4 operands and output_hw");
      }
      if (dy[1] != w[0] || ConvOut(hw[0], w[2], stride, pad) != dy[2] ||
          ConvOut(hw[1], w[3], stride, pad) != dy[3]) {
        Mismatch(kind, "output_hw inconsistent with dY");
      }
      return {{dy[0], w[1], hw[0], hw[1]}};
    }
    case OpKind::kGemm: {
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.size() < 2 || b.size() != 2 || a.back() != b[0]) {
        Mismatch(kind, "A(...,K) x B(K,N) required");
      }
      if (in.size() == 3 && in[2] != Shape{b[1]}) Mismatch(kind, "bias must be (N)");
      Shape out(a.begin(), a.end() - 1);
      out.push_back(b[1]);
      return {out};
    }
    case OpKind::kMatMul: {
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.size() < 2 || a.size() != b.size() || !std::equal(a.begin(), a.end() - 2, b.begin()) ||
          a[a.size() - 1] != b[b.size() - 2]) {
        Mismatch(kind, "batched (...,M,K) x (...,K,N) required");
      }
      Shape out(a.begin(), a.end() - 1);
      out.push_back(b.back());
      return {out};
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
      if (!BroadcastsTo(in[1], in[0])) Mismatch(kind, "second operand not broadcastable");
      return {in[0]};
    case OpKind::kScale:
    case OpKind::kReLU:
    case OpKind::kReLUGrad:
    case OpKind::kRsqrt:
      return {in[0]};
    case OpKind::kSoftmax:
      if (Int(attrs, "causal", 0) != 0 &&
          (in[0].size() < 2 || in[0][in[0].size() - 1] != in[0][in[0].size() - 2])) {
        Mismatch(kind, "causal softmax needs square trailing dims");
      }
      return {in[0]};
    case OpKind::kTranspose: {
      auto perm = Ints(attrs, "perm");
      if (perm.size() != in[0].size()) Mismatch(kind, "perm rank mismatch");
      std::vector<int64_t> sorted = perm;
      std::sort(sorted.begin(), sorted.end());
      for (size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != static_cast<int64_t>(i)) Mismatch(kind, "perm is not a permutation");
      }
      Shape out(perm.size());
      for (size_t i = 0; i < perm.size(); ++i) out[i] = in[0][perm[i]];
      return {out};
    }
    case OpKind::kReshape: {
      auto shape = Ints(attrs, "shape");
      if (shape.empty() || NumElements(shape) != NumElements(in[0])) {
        Mismatch(kind, "element count changes");
      }
      return {shape};
    }
    case OpKind::kReduceSum: {
      auto shape = Ints(attrs, "shape");
      if (shape.empty() || !BroadcastsTo(shape, in[0])) {
        Mismatch(kind, "target shape does not broadcast to input");
      }
      return {shape};
    }
    case OpKind::kExpand: {
      auto shape = Ints(attrs, "shape");
      if (shape.empty() || !BroadcastsTo(in[0], shape)) {
        Mismatch(kind, "input does not broadcast to target shape");
      }
      return {shape};
    }
    case OpKind::kPool:
      if (in[0].size() != 4) Mismatch(kind, "expects (N,C,H,W)");
      return {{in[0][0], in[0][1], 1, 1}};
    case OpKind::kLoss:
      if (in[0] != in[1]) Mismatch(kind, "prediction and target shapes differ");
      return {{1}};
    case OpKind::kLossGrad:
      if (in[0] != in[1]) Mismatch(kind, "prediction and target shapes differ");
      return {in[0]};
    case OpKind::kSgdUpdate:
      if (in[1] != in[0] || in[2] != in[0]) Mismatch(kind, "state shapes differ");
      return {in[0], in[0]};
    case OpKind::kAdamUpdate:
      if (in[1] != in[0] || in[2] != in[0] || in[3] != in[0]) {
        Mismatch(kind, "state shapes differ");
      }
      return {in[0], in[0], in[0]};
  }
  Mismatch(kind, "unknown kind");
}

std::vector<LoopDim> DeriveLoopDims(OpKind kind, const Attrs& attrs, const std::vector<Shape>& in,
                                    const std::vector<Shape>& out) {
  switch (kind) {
    case OpKind::kConv: {
      if (Int(attrs, "weight_grad", 0) != 0) {
        const auto& x = in[0];
        const auto& dy = in[1];
        return {{"B", x[0]},   {"K", dy[1]},      {"C", x[1]},      {"OY", dy[2]},
                {"OX", dy[3]}, {"FY", out[0][2]}, {"FX", out[0][3]}};
      }
      const auto& x = in[0];
      const auto& w = in[1];
      return {{"B", x[0]},       {"K", w[0]},  {"C", w[1]}, {"OY", out[0][2]},
              {"OX", out[0][3]}, {"FY", w[2]}, {"FX", w[3]}};
    }
    case OpKind::kConvTranspose: {
      const auto& dy = in[0];
      const auto& w = in[1];
      return {{"B", dy[0]},  {"K", dy[1]}, {"C", w[1]}, {"OY", dy[2]},
              {"OX", dy[3]}, {"FY", w[2]}, {"FX", w[3]}};
    }
    case OpKind::kGemm: {
      const auto& a = in[0];
      int64_t m = NumElements(Shape(a.begin(), a.end() - 1));
      return {{"M", m}, {"N", in[1][1]}, {"K", a.back()}};
    }
    case OpKind::kMatMul: {
      const auto& a = in[0];
      int64_t batch = NumElements(Shape(a.begin(), a.end() - 2));
      return {{"B", batch}, {"M", a[a.size() - 2]}, {"N", in[1].back()}, {"K", a.back()}};
    }
    case OpKind::kReduceSum:
    case OpKind::kPool:
    case OpKind::kLoss:
    case OpKind::kLossGrad:
      return NamedDims(in[0]);
    default:
      return NamedDims(out[0]);
  }
}

int64_t OuterLoopExtent(const OperatorNode& node) {
  for (const auto& d : node.loop_dims) {
    if (IsConvolutional(node.kind) && d.name == "OY") return d.extent;
    if (IsGemmLike(node.kind) && d.name == "M") return d.extent;
  }
  if (node.loop_dims.size() <= 1) return 1;
  int64_t n = 1;
  for (size_t i = 0; i + 1 < node.loop_dims.size(); ++i) n *= node.loop_dims[i].extent;
  return n;
}

GraphBuilder::GraphBuilder(ComputationGraph* graph, std::string prefix, Phase phase,
                           int element_bytes, int first_index)
    : graph_(graph),
      prefix_(std::move(prefix)),
      phase_(phase),
      element_bytes_(element_bytes),
      counter_(first_index) {}

std::string GraphBuilder::Input(const std::string& id, const Shape& shape, EdgeKind kind) {
  graph_->AddEdge({id, shape, element_bytes_, kind, {}, {}});
  graph_->AddGraphInput(id);
  return id;
}

std::string GraphBuilder::Weight(const std::string& id, const Shape& shape) {
  return Input(id, shape, EdgeKind::kWeight);
}

std::vector<std::string> GraphBuilder::AddOp(OpKind kind, const std::string& name,
                                             const std::vector<std::string>& inputs, Attrs attrs,
                                             EdgeKind out_kind) {
  std::vector<Shape> in_shapes;
  for (const auto& e : inputs) in_shapes.push_back(ShapeOf(e));
  auto out_shapes = InferOutputShapes(kind, attrs, in_shapes);

  char idx[16];
  std::snprintf(idx, sizeof(idx), "%05d", counter_++);
  OperatorNode node;
  node.id = prefix_ + idx + "." + name;
  node.kind = kind;
  node.inputs = inputs;
  node.phase = phase_;
  node.loop_dims = DeriveLoopDims(kind, attrs, in_shapes, out_shapes);
  node.attrs = std::move(attrs);
  for (size_t k = 0; k < out_shapes.size(); ++k) {
    std::string eid = node.id + ":" + std::to_string(k);
    graph_->AddEdge({eid, out_shapes[k], element_bytes_, out_kind, {}, {}});
    node.outputs.push_back(eid);
  }
  auto outputs = node.outputs;
  graph_->AddNode(std::move(node));
  return outputs;
}

std::string GraphBuilder::Conv(const std::string& x, const std::string& w, int64_t stride,
                               int64_t pad, const std::string& name) {
  return Op(OpKind::kConv, name, {x, w}, {{"stride", stride}, {"pad", pad}});
}

std::string GraphBuilder::Gemm(const std::string& a, const std::string& b, const std::string& name,
                               const std::string& bias) {
  std::vector<std::string> in = {a, b};
  if (!bias.empty()) in.push_back(bias);
  return Op(OpKind::kGemm, name, in);
}

std::string GraphBuilder::Reshape(const std::string& x, const Shape& shape,
                                  const std::string& name) {
  return Op(OpKind::kReshape, name, {x}, {{"shape", shape}});
}

std::string GraphBuilder::Transpose(const std::string& x, const std::vector<int64_t>& perm,
                                    const std::string& name) {
  return Op(OpKind::kTranspose, name, {x}, {{"perm", perm}});
}

std::string GraphBuilder::ReduceTo(const std::string& x, const Shape& shape,
                                   const std::string& name) {
  return Op(OpKind::kReduceSum, name, {x}, {{"shape", shape}});
}

std::string GraphBuilder::Scale(const std::string& x, double alpha, const std::string& name) {
  return Op(OpKind::kScale, name, {x}, {{"alpha", alpha}});
}

const Shape& GraphBuilder::ShapeOf(const std::string& edge) const {
  return graph_->edge(edge).shape;
}

}  // namespace hdatrain
