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

#include <iosfwd>
#include <string>

#include "hdatrain/graph.h"

namespace hdatrain {

struct ResnetConfig {
  int num_blocks = 8;
  int64_t base_channels = 16;
  Shape input_shape = {1, 3, 32, 32};  // N, C, H, W
  // Every second block (after the first stage) halves the resolution and
  // doubles the channels, with a 1x1 projection on the skip path.
  bool include_downsample = true;
  int64_t num_classes = 10;
  int element_bytes = 2;
};

struct GptConfig {
  int num_layers = 2;
  int64_t d_model = 128;
  int64_t n_heads = 4;
  int64_t seq_len = 64;
  bool causal = true;
  int64_t vocab_size = 128;
  int64_t ffn_multiplier = 4;
  int64_t batch = 1;
  int element_bytes = 2;
};

// Both builders throw Error(kInvalidConfig) for out-of-range configs. The
// returned forward graph ends at the logits edge (its only graph output).
ComputationGraph BuildResnet(const ResnetConfig& cfg);
ComputationGraph BuildGpt(const GptConfig& cfg);

// Chain of `length` 1x1 conv + ReLU stages followed by a small classifier.
ComputationGraph BuildFusionChain(int length = 3, int64_t channels = 8, int64_t spatial = 16);

// op1 -> op2 -> op3 chain of 3x3 conv + ReLU with a skip from op1 into op3.
// The first activation feeds both the next op and the skip, so discarding
// both probed activations unlocks a fusion neither discard unlocks alone.
ComputationGraph BuildCheckpointBlock(int64_t channels = 16, int64_t spatial = 16);

// Resolves names such as "resnet-desk", "gpt-desk", "resnet-tiny",
// "fusion-chain", "checkpoint-block". Throws Error(kInvalidConfig) for unknown names.
ComputationGraph BuildBuiltinWorkload(const std::string& name);
bool IsBuiltinWorkload(const std::string& name);

// Workload file (JSON):
//   { "nodes": [{id, kind, inputs, outputs, loop_dims, attrs, phase}],
//     "edges": [{id, shape, element_bytes, kind}],
//     "graph_inputs": [...], "graph_outputs": [...] }
// loop_dims is a list of [name, extent] pairs; unknown fields are rejected.
// Import errors: kParseError, kSchemaViolation, kGraphInvalid / kCycleDetected.
ComputationGraph ImportWorkload(std::istream& in);
ComputationGraph ImportWorkloadString(const std::string& text);
ComputationGraph LoadWorkloadFile(const std::string& path);
std::string ExportWorkload(const ComputationGraph& graph);
void SaveWorkloadFile(const ComputationGraph& graph, const std::string& path);

}  // namespace hdatrain
