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
#include <random>
#include <string>
#include <vector>

#include "hdatrain/autodiff.h"
#include "hdatrain/graph.h"

namespace hdatrain {

struct TensorValue {
  Shape shape;
  std::vector<double> data;  // row-major, length NumElements(shape)

  static TensorValue Zeros(const Shape& shape);
  static TensorValue Of(const Shape& shape, std::vector<double> data);
};

using Bindings = std::map<std::string, TensorValue>;

// Evaluates every node in topological order with naive FP64 kernels and
// returns the values of all edges (bindings included). Throws
// Error(kUnboundInput) for a missing external edge and Error(kShapeMismatch)
// for a binding of the wrong shape.
Bindings Execute(const ComputationGraph& g, const Bindings& bindings);

// ReLU node id -> mask. A masked ReLU computes x * mask instead of max(x, 0),
// which makes the loss smooth around the point where the mask was taken.
using ReluMasks = std::map<std::string, std::vector<bool>>;
Bindings Execute(const ComputationGraph& g, const Bindings& bindings, const ReluMasks& masks);

// Scalar value of the first graph output.
double EvaluateLoss(const ComputationGraph& loss_graph, const Bindings& bindings);

// Central differences of the loss w.r.t. every element of `theta`.
TensorValue FiniteDifferenceGrad(const ComputationGraph& fwd, const LossSpec& loss,
                                 const std::string& theta, const Bindings& bindings,
                                 double h = 1e-5);

// Random values for every graph input: weights ~ N(0, 1/fan_in), data
// inputs ~ N(0, 1) with |x| > 1e-3, one-hot labels for cross entropy,
// non-negative Adam second moments.
Bindings RandomBindings(const ComputationGraph& g, std::mt19937_64& rng);

struct ParameterCheck {
  std::string weight;
  double max_rel_error = 0.0;
  bool gradient_ok = true;
  bool update_exact = true;
};

struct GradientReport {
  std::vector<ParameterCheck> parameters;
  double max_rel_error = 0.0;
  bool passed = true;
  std::vector<std::string> failures;
};

struct GradientCheckOptions {
  int trials = 3;
  uint64_t seed = 1;
  double step = 1e-5;
  double tolerance = 1e-4;
};

// Compares the training graph's weight gradients with central differences of
// the forward loss along random directions (one per parameter and trial), and
// checks every optimizer output bit-for-bit against a scalar re-evaluation of
// the update recurrences.
GradientReport CheckTrainingGraph(const ComputationGraph& fwd, const TrainingGraph& tg,
                                  const GradientCheckOptions& opts = {});

}  // namespace hdatrain
