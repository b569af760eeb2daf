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
#include <iosfwd>
#include <string>
#include <vector>

#include "hdatrain/error.h"

namespace hdatrain {

enum class Dataflow { kWeightStationary, kOutputStationary, kSimdVector };

std::string_view ToString(Dataflow d);

struct MemoryLevel {
  std::string name;
  int64_t capacity_bytes = 0;
  double read_bw_bytes_per_cycle = 1.0;
  double write_bw_bytes_per_cycle = 1.0;
  double read_energy_pJ_per_byte = 0.0;
  double write_energy_pJ_per_byte = 0.0;
  // Subset of {"weights", "inputs", "outputs"}.
  std::vector<std::string> operands = {"weights", "inputs", "outputs"};

  bool Serves(const std::string& operand) const;
  bool operator==(const MemoryLevel&) const = default;
};

struct CoreSpec {
  std::string id;
  Dataflow dataflow = Dataflow::kWeightStationary;
  std::vector<int64_t> pe_dims = {1};
  int64_t simd_ways = 1;  // per-unit vector width multiplier
  double mac_energy_pJ = 1.0;
  std::vector<MemoryLevel> memory_levels;  // innermost first

  // MACs retired per cycle at full utilisation.
  int64_t parallelism() const;
  // Largest on-chip capacity; the bound used by memory feasibility checks.
  int64_t capacity_bytes() const;
  bool is_array() const { return dataflow != Dataflow::kSimdVector; }
  bool operator==(const CoreSpec&) const = default;
};

// A link joins two or more endpoints (core ids or "offchip"); more than two
// endpoints model a shared bus.
struct LinkSpec {
  std::string id;
  std::vector<std::string> endpoints;
  double bandwidth_bytes_per_cycle = 1.0;
  double energy_pJ_per_byte = 0.0;

  bool Connects(const std::string& a, const std::string& b) const;
  bool operator==(const LinkSpec&) const = default;
};

inline constexpr const char* kOffchip = "offchip";

struct HdaSpec {
  std::string name;
  std::vector<CoreSpec> cores;
  std::vector<LinkSpec> links;
  MemoryLevel offchip;

  const CoreSpec& core(const std::string& id) const;
  int core_index(const std::string& id) const;  // -1 when absent
  int64_t total_parallelism() const;
  bool operator==(const HdaSpec&) const = default;
};

// Problems with an HdaSpec, one message each; empty when valid.
std::vector<std::string> ValidateHda(const HdaSpec& spec);

// Default energy constants (pJ).
struct EnergyDefaults {
  static constexpr double kMac = 1.0;
  static constexpr double kRegisterFile = 0.1;
  static constexpr double kLocalMemory = 1.0;
  static constexpr double kSharedBuffer = 2.0;
  static constexpr double kOffchip = 20.0;
  static constexpr double kLink = 1.0;
};

struct EdgeTpuParams {
  int64_t x_pes = 4;
  int64_t y_pes = 4;
  int64_t simd_units = 64;  // U
  int64_t lanes = 4;        // L
  double local_mem_mb = 2.0;
  int64_t rf_kb = 64;
};

struct FuseMaxParams {
  int64_t x_pes = 256;
  int64_t y_pes = 256;
  int64_t vector_pes = 128;
  double buffer_bw = 16384;  // bytes per cycle
  int64_t buffer_mb = 16;
  double offchip_bw = 4096;  // bytes per cycle
};

// x_pes * y_pes weight-stationary PE cores (U x L units, 4-way SIMD, register
// file + local memory) plus one SIMD vector core, all on a shared bus to
// off-chip memory; PEs also share a PE-array interconnect. Throws
// Error(kInvalidParam) for non-positive values.
HdaSpec EdgeTpuConfig(const EdgeTpuParams& p);
// One output-stationary MAC array and one vector core sharing an on-chip
// buffer; a direct array<->vector link and a link to off-chip memory.
HdaSpec FuseMaxConfig(const FuseMaxParams& p);

// "edge-tpu" / "fusemax" with default parameters.
HdaSpec HdaTemplate(const std::string& name);
bool IsHdaTemplate(const std::string& name);

// Hardware file (JSON). Load errors: kParseError, kSchemaViolation.
HdaSpec ImportHda(const std::string& text);
HdaSpec LoadHdaFile(const std::string& path);
std::string ExportHda(const HdaSpec& spec);
void SaveHdaFile(const HdaSpec& spec, const std::string& path);

}  // namespace hdatrain
