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
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hdatrain/autodiff.h"
#include "hdatrain/checkpointing.h"
#include "hdatrain/evaluate.h"
#include "hdatrain/hda.h"
#include "hdatrain/scheduler.h"

namespace hdatrain {

// All objectives are minimized.
using Objectives = std::array<double, 3>;
using Genome = std::vector<uint8_t>;  // one 0/1 entry per bit

bool Dominates(const Objectives& a, const Objectives& b);

// Fronts of indices into objs, front 0 first; indices ascending in each front.
std::vector<std::vector<int>> FastNondominatedSort(const std::vector<Objectives>& objs);

// Distances for the members of one front, in the order of `front`.
std::vector<double> CrowdingDistance(const std::vector<Objectives>& objs,
                                     const std::vector<int>& front);

// Volume dominated by the points and bounded by ref. Points not strictly
// better than ref on every axis contribute nothing.
double Hypervolume(std::vector<Objectives> points, const Objectives& ref);

// Bit i lives in hex digit i / 4 at weight 1 << (i % 4).
std::string GenomeHex(const Genome& genome);
Genome GenomeFromHex(const std::string& hex, size_t bits);

struct Individual {
  Genome genome;
  Objectives objectives{};
  int rank = 0;
  double crowding = 0;
};

struct GaSnapshot {
  int generation = 0;
  std::vector<Individual> population;
  double hypervolume = 0;  // of the archive so far, against GaResult::reference
};

struct GaParams {
  int population = 32;
  int generations = 4;  // variation rounds after generation 0
  double crossover = 0.9;
  double mutation = -1;  // per bit; negative means 1 / genome length
  uint64_t seed = 1;
  int jobs = 1;
  std::function<void(const GaSnapshot&)> on_generation;
};

struct GaResult {
  std::vector<Individual> archive;  // non-dominated among everything evaluated
  std::vector<GaSnapshot> snapshots;
  Objectives reference{};
  size_t evaluations = 0;
};

using ObjectiveFn = std::function<Objectives(const Genome&)>;

// Generation 0 is `seeds` topped up with uniform random genomes. Throws
// Error(kInvalidParam) for bad params; objective errors propagate after the
// snapshots taken so far were reported through on_generation.
GaResult Nsga2(size_t bits, const std::vector<Genome>& seeds, const ObjectiveFn& objective,
               const GaParams& params);

struct CheckpointSearch {
  std::vector<ActivationInfo> activations;  // bit i decides activations[i]
  GaResult result;

  CheckpointPlan PlanFor(const Genome& genome) const;
};

// Objectives are (latency cycles, energy pJ, saved activation bytes), each
// genome evaluated as rewrite, fusion solve, schedule. The all-save and
// all-recompute genomes are always in generation 0.
CheckpointSearch Nsga2CheckpointSearch(const TrainingGraph& tg, const HdaSpec& hda,
                                       const MappingConfig& mapping, const FusionSetting& fusion,
                                       const GaParams& params);

// generation,genome_hex,latency,energy,saved_bytes,rank
std::string SnapshotCsvHeader();
std::string SnapshotCsvRows(const GaSnapshot& snapshot);

}  // namespace hdatrain
