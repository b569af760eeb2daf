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

#include <optional>
#include <string>
#include <vector>

#include "hdatrain/autodiff.h"
#include "hdatrain/evaluate.h"
#include "hdatrain/hda.h"

namespace hdatrain {

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

// Axes are in the template's column order; the first axis varies slowest.
struct SweepGrid {
  std::string hardware;  // "edge-tpu" or "fusemax"
  std::vector<GridAxis> axes;

  size_t size() const;
  std::vector<std::vector<double>> Points() const;
  // "axis=value" for every value outside the published search space.
  std::vector<std::string> Extensions() const;
};

// Column names, in order, for a template.
std::vector<std::string> GridColumns(const std::string& hardware);

// table1-sub (64 points), table1-full, table2-sub (64 points), table2-full.
// Throws Error(kInvalidParam) for other names.
SweepGrid BuiltinGrid(const std::string& name);
bool IsBuiltinGrid(const std::string& name);

// {"hardware": "edge-tpu", "axes": {"U": [16, 64], ...}}; missing axes keep
// the template default. Errors: kParseError, kSchemaViolation, kIo.
SweepGrid ImportGrid(const std::string& text);
SweepGrid LoadGridFile(const std::string& path);

// Throws Error(kInvalidParam) when a value is out of range for the template.
HdaSpec HdaForPoint(const std::string& hardware, const std::vector<double>& point);

enum class SweepMode { kInference, kTraining, kBoth };
SweepMode ParseSweepMode(const std::string& text);

struct SweepOptions {
  SweepMode mode = SweepMode::kBoth;
  FusionSetting fusion = FusionSetting::Auto(6);
  LossSpec loss;
  OptimizerSpec optimizer;
  std::optional<MappingConfig> mapping;  // empty: MappingConfig::Auto per point
  int jobs = 1;
};

struct SweepRow {
  std::vector<double> point;
  std::optional<int64_t> f_latency, fb_latency;
  std::optional<double> f_energy, fb_energy;
  int64_t peak_mem_bytes = 0;
  size_t fused_subgraph_count = 0;
  std::string status = "ok";  // "ok" or "failed"
  std::string reason;
};

// One row per grid point, in grid order. Per-point library errors become
// failed rows; anything else propagates.
std::vector<SweepRow> RunSweep(const ComputationGraph& forward, const SweepGrid& grid,
                               const SweepOptions& options);

std::string SweepCsv(const SweepGrid& grid, const std::vector<SweepRow>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int Column(const std::string& name) const;  // -1 when absent
};

// Plain comma separated values, no quoting. Throws Error(kParseError) on
// ragged rows.
CsvTable ParseCsv(const std::string& text);

struct ScatterSpec {
  std::string x, y;   // column names, plotted on log10 axes
  std::string color;  // optional column mapped to a blue-red ramp
  std::string title;
};

// Rows whose x or y is empty, non-numeric or non-positive are skipped.
// Throws Error(kInvalidParam) when a named column is missing.
std::string ScatterSvg(const CsvTable& table, const ScatterSpec& spec);

}  // namespace hdatrain
