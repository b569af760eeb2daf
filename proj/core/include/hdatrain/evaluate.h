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

#include <array>
#include <string>

#include "hdatrain/autodiff.h"
#include "hdatrain/checkpointing.h"
#include "hdatrain/fusion.h"
#include "hdatrain/hda.h"
#include "hdatrain/scheduler.h"

namespace hdatrain {

struct FusionSetting {
  enum class Mode { kOff, kAuto, kManual };
  Mode mode = Mode::kOff;
  FusionLimits limits;  // kAuto
  Partition manual;     // kManual; completed with singletons per graph
  PartitionOptions options;

  static FusionSetting Off() { return {}; }
  static FusionSetting Auto(int max_len);
  static FusionSetting Manual(Partition groups);
  // "off", "auto" (max_len 6), "auto:N" or "manual:FILE".
  // Throws Error(kInvalidParam) for anything else.
  static FusionSetting Parse(const std::string& text);
};

struct Evaluation {
  ScheduleResult schedule;
  Partition partition;
  std::string fusion_method;  // "off", "manual", "exact" or "greedy"
  size_t node_count = 0;
};

// Optional fusion solve followed by the schedule.
Evaluation Evaluate(const ComputationGraph& g, const HdaSpec& hda, const MappingConfig& mapping,
                    const FusionSetting& fusion);

// Checkpoint rewrite, then Evaluate.
Evaluation EvaluatePlan(const TrainingGraph& tg, const CheckpointPlan& plan, const HdaSpec& hda,
                        const MappingConfig& mapping, const FusionSetting& fusion);

// Activation edges ordered by their producer's topological position.
std::vector<std::string> ActivationsInTopologicalOrder(const ComputationGraph& g);

struct NonadditivityReport {
  std::string first, second;  // the probed activation edges
  double base_latency = 0;
  double base_energy = 0;
  // Deltas against the all-saved plan for AC10 (first recomputed), AC01
  // (second recomputed) and AC11 (both).
  std::array<double, 3> delta_latency{};
  std::array<double, 3> delta_energy{};

  double latency_interaction() const {
    return delta_latency[2] - delta_latency[0] - delta_latency[1];
  }
  double energy_interaction() const { return delta_energy[2] - delta_energy[0] - delta_energy[1]; }
};

// Empty ids default to the first two activations in topological order.
// Throws Error(kInvalidParam) when fewer than two activations exist or an id
// is not an activation.
NonadditivityReport ProbeNonadditivity(const TrainingGraph& tg, const HdaSpec& hda,
                                       const MappingConfig& mapping, const FusionSetting& fusion,
                                       std::string first = "", std::string second = "");

}  // namespace hdatrain
