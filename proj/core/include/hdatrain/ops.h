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

#include <string>
#include <vector>

#include "hdatrain/graph.h"

namespace hdatrain {

// Attribute conventions (all optional unless noted):
//   Conv           stride, pad; weight_grad=1 turns it into the dW kernel
//                  (inputs X, dY) and then requires kernel=[FY,FX].
//   ConvTranspose  stride, pad, output_hw=[H,W] (required).
//   Transpose      perm (required).
//   Reshape/ReduceSum/Expand  shape (required): target shape.
//   Softmax        causal=1 masks columns beyond the row index.
//   Scale          alpha.   Rsqrt  eps.
//   Loss/LossGrad  loss_kind: 0 = cross entropy with softmax, 1 = MSE.
//   SgdUpdate      lr, momentum.   AdamUpdate  lr, beta1, beta2, eps, step.
struct OpSignature {
  int min_inputs;
  int max_inputs;
  int num_outputs;
};

OpSignature SignatureOf(OpKind kind);

bool IsConvolutional(OpKind kind);  // Conv, ConvTranspose
bool IsGemmLike(OpKind kind);       // Gemm, MatMul
// Contraction kernels that only run on PE/MAC array cores.
bool RequiresArrayCore(OpKind kind);

constexpr int kLossCrossEntropy = 0;
constexpr int kLossMeanSquared = 1;

// Right-aligned broadcast of `from` onto `to` (each dim equal or 1).
bool BroadcastsTo(const Shape& from, const Shape& to);

// Throws Error(kShapeMismatch) when inputs are inconsistent with the kind.
std::vector<Shape> InferOutputShapes(OpKind kind, const Attrs& attrs,
                                     const std::vector<Shape>& inputs);

std::vector<LoopDim> DeriveLoopDims(OpKind kind, const Attrs& attrs,
                                    const std::vector<Shape>& inputs,
                                    const std::vector<Shape>& outputs);

// Extent of the loop that intra-core tiling splits: OY for convolutions, M for
// Gemm/MatMul, the flattened leading dims for everything else.
int64_t OuterLoopExtent(const OperatorNode& node);

// Appends operators to a graph with inferred shapes and loop dims. Node ids are
// "<prefix><5-digit counter>.<name>" so id order follows creation order.
class GraphBuilder {
 public:
  GraphBuilder(ComputationGraph* graph, std::string prefix, Phase phase, int element_bytes = 2,
               int first_index = 1);

  std::string Input(const std::string& id, const Shape& shape, EdgeKind kind = EdgeKind::kInput);
  std::string Weight(const std::string& id, const Shape& shape);

  std::vector<std::string> AddOp(OpKind kind, const std::string& name,
                                 const std::vector<std::string>& inputs, Attrs attrs = {},
                                 EdgeKind out_kind = EdgeKind::kActivation);
  std::string Op(OpKind kind, const std::string& name, const std::vector<std::string>& inputs,
                 Attrs attrs = {}, EdgeKind out_kind = EdgeKind::kActivation) {
    return AddOp(kind, name, inputs, std::move(attrs), out_kind).front();
  }

  std::string Conv(const std::string& x, const std::string& w, int64_t stride, int64_t pad,
                   const std::string& name);
  std::string Gemm(const std::string& a, const std::string& b, const std::string& name,
                   const std::string& bias = "");
  std::string Reshape(const std::string& x, const Shape& shape, const std::string& name);
  std::string Transpose(const std::string& x, const std::vector<int64_t>& perm,
                        const std::string& name);
  std::string ReduceTo(const std::string& x, const Shape& shape, const std::string& name);
  std::string Scale(const std::string& x, double alpha, const std::string& name);

  const Shape& ShapeOf(const std::string& edge) const;
  int next_index() const { return counter_; }
  void set_phase(Phase phase) { phase_ = phase; }
  ComputationGraph& graph() { return *graph_; }

 private:
  ComputationGraph* graph_;
  std::string prefix_;
  Phase phase_;
  int element_bytes_;
  int counter_;
};

}  // namespace hdatrain
