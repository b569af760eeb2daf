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

#include "hdatrain/hda.h"

#include <algorithm>
#include <set>

#include "json_util.h"

namespace hdatrain {
namespace {

using namespace json_util;

constexpr int64_t kUnboundedBytes = int64_t{1} << 50;
const std::set<std::string> kOperands = {"weights", "inputs", "outputs"};

void RequirePositive(double v, const char* name) {
  if (!(v > 0)) {
    throw Error(ErrorCode::kInvalidParam, std::string(name) + " must be positive");
  }
}

MemoryLevel Level(const std::string& name, int64_t capacity, double bw, double energy) {
  MemoryLevel l;
  l.name = name;
  l.capacity_bytes = capacity;
  l.read_bw_bytes_per_cycle = bw;
  l.write_bw_bytes_per_cycle = bw;
  l.read_energy_pJ_per_byte = energy;
  l.write_energy_pJ_per_byte = energy;
  return l;
}

void CheckLevel(const MemoryLevel& l, const std::string& where, std::vector<std::string>& out) {
  if (l.capacity_bytes <= 0) out.push_back(where + ": capacity_bytes must be > 0");
  if (!(l.read_bw_bytes_per_cycle > 0) || !(l.write_bw_bytes_per_cycle > 0)) {
    out.push_back(where + ": bandwidths must be > 0");
  }
  if (!(l.read_energy_pJ_per_byte >= 0) || !(l.write_energy_pJ_per_byte >= 0)) {
    out.push_back(where + ": energies must be >= 0");
  }
  if (l.operands.empty()) out.push_back(where + ": operands must not be empty");
  for (const auto& op : l.operands) {
    if (!kOperands.count(op)) out.push_back(where + ": unknown operand \"" + op + "\"");
  }
}

json LevelToJson(const MemoryLevel& l) {
  return {{"name", l.name},
          {"capacity_bytes", l.capacity_bytes},
          {"read_bw_bytes_per_cycle", l.read_bw_bytes_per_cycle},
          {"write_bw_bytes_per_cycle", l.write_bw_bytes_per_cycle},
          {"read_energy_pJ_per_byte", l.read_energy_pJ_per_byte},
          {"write_energy_pJ_per_byte", l.write_energy_pJ_per_byte},
          {"operands", l.operands}};
}

MemoryLevel LevelFromJson(const json& obj, const std::string& where) {
  CheckKeys(obj, where,
            {"name", "capacity_bytes", "read_bw_bytes_per_cycle", "write_bw_bytes_per_cycle",
             "read_energy_pJ_per_byte", "write_energy_pJ_per_byte", "operands"});
  MemoryLevel l;
  l.name = GetString(obj, "name", where);
  l.capacity_bytes = AsInt(obj["capacity_bytes"], where, "capacity_bytes");
  l.read_bw_bytes_per_cycle =
      AsDouble(obj["read_bw_bytes_per_cycle"], where, "read_bw_bytes_per_cycle");
  l.write_bw_bytes_per_cycle =
      AsDouble(obj["write_bw_bytes_per_cycle"], where, "write_bw_bytes_per_cycle");
  l.read_energy_pJ_per_byte =
      AsDouble(obj["read_energy_pJ_per_byte"], where, "read_energy_pJ_per_byte");
  l.write_energy_pJ_per_byte =
      AsDouble(obj["write_energy_pJ_per_byte"], where, "write_energy_pJ_per_byte");
  l.operands = GetStrings(obj, "operands", where);
  return l;
}

}  // namespace

std::string_view ToString(Dataflow d) {
  switch (d) {
    case Dataflow::kWeightStationary:
      return "weight_stationary";
    case Dataflow::kOutputStationary:
      return "output_stationary";
    case Dataflow::kSimdVector:
      return "simd_vector";
  }
  return "?";
}

bool MemoryLevel::Serves(const std::string& operand) const {
  return std::find(operands.begin(), operands.end(), operand) != operands.end();
}

int64_t CoreSpec::parallelism() const {
  int64_t p = simd_ways;
  for (int64_t d : pe_dims) p *= d;
  return p;
}

int64_t CoreSpec::capacity_bytes() const {
  int64_t cap = 0;
  for (const auto& l : memory_levels) cap = std::max(cap, l.capacity_bytes);
  return cap;
}

bool LinkSpec::Connects(const std::string& a, const std::string& b) const {
  auto has = [&](const std::string& x) {
    return std::find(endpoints.begin(), endpoints.end(), x) != endpoints.end();
  };
  return has(a) && has(b);
}

const CoreSpec& HdaSpec::core(const std::string& id) const {
  int i = core_index(id);
  if (i < 0) throw Error(ErrorCode::kInvalidParam, "unknown core " + id);
  return cores[i];
}

int HdaSpec::core_index(const std::string& id) const {
  for (size_t i = 0; i < cores.size(); ++i) {
    if (cores[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

int64_t HdaSpec::total_parallelism() const {
  int64_t p = 0;
  for (const auto& c : cores) p += c.parallelism();
  return p;
}

std::vector<std::string> ValidateHda(const HdaSpec& spec) {
  std::vector<std::string> out;
  if (spec.cores.empty()) out.push_back("no cores");
  std::set<std::string> ids;
  for (const auto& c : spec.cores) {
    const std::string where = "core " + c.id;
    if (c.id.empty()) out.push_back("core with empty id");
    if (c.id == kOffchip) out.push_back(where + ": id is reserved");
    if (!ids.insert(c.id).second) out.push_back(where + ": duplicate id");
    if (c.pe_dims.empty()) out.push_back(where + ": pe_dims must not be empty");
    for (int64_t d : c.pe_dims) {
      if (d < 1) out.push_back(where + ": pe_dims entries must be >= 1");
    }
    if (c.simd_ways < 1) out.push_back(where + ": simd_ways must be >= 1");
    if (!(c.mac_energy_pJ >= 0)) out.push_back(where + ": mac_energy_pJ must be >= 0");
    if (c.memory_levels.empty()) out.push_back(where + ": no memory levels");
    for (size_t i = 0; i < c.memory_levels.size(); ++i) {
      const auto& l = c.memory_levels[i];
      CheckLevel(l, where + " level " + l.name, out);
      if (i > 0 && l.capacity_bytes < c.memory_levels[i - 1].capacity_bytes) {
        out.push_back(where + ": memory levels must be ordered by increasing capacity");
      }
    }
  }
  CheckLevel(spec.offchip, "offchip", out);

  std::set<std::string> link_ids;
  for (const auto& l : spec.links) {
    const std::string where = "link " + l.id;
    if (!link_ids.insert(l.id).second) out.push_back(where + ": duplicate id");
    if (l.endpoints.size() < 2) out.push_back(where + ": needs at least two endpoints");
    for (const auto& e : l.endpoints) {
      if (e != kOffchip && !ids.count(e)) out.push_back(where + ": unknown endpoint " + e);
    }
    if (!(l.bandwidth_bytes_per_cycle > 0)) out.push_back(where + ": bandwidth must be > 0");
    if (!(l.energy_pJ_per_byte >= 0)) out.push_back(where + ": energy must be >= 0");
  }

  // Every core must reach offchip through links.
  std::set<std::string> reached = {kOffchip};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& l : spec.links) {
      bool touches = std::any_of(l.endpoints.begin(), l.endpoints.end(),
                                 [&](const std::string& e) { return reached.count(e) > 0; });
      if (!touches) continue;
      for (const auto& e : l.endpoints) grew |= reached.insert(e).second;
    }
  }
  for (const auto& c : spec.cores) {
    if (!reached.count(c.id)) out.push_back("core " + c.id + ": not connected to offchip");
  }
  return out;
}

HdaSpec EdgeTpuConfig(const EdgeTpuParams& p) {
  RequirePositive(static_cast<double>(p.x_pes), "xPEs");
  RequirePositive(static_cast<double>(p.y_pes), "yPEs");
  RequirePositive(static_cast<double>(p.simd_units), "U");
  RequirePositive(static_cast<double>(p.lanes), "L");
  RequirePositive(p.local_mem_mb, "local_mem_MB");
  RequirePositive(static_cast<double>(p.rf_kb), "rf_KB");

  const int64_t units = p.simd_units * p.lanes;
  const int64_t local_bytes = static_cast<int64_t>(p.local_mem_mb * 1024 * 1024);
  if (local_bytes < p.rf_kb * 1024) {
    throw Error(ErrorCode::kInvalidParam, "local memory smaller than the register file");
  }
  auto make_core = [&](const std::string& id, Dataflow df) {
    CoreSpec c;
    c.id = id;
    c.dataflow = df;
    c.pe_dims = {p.simd_units, p.lanes};
    c.simd_ways = 4;
    c.mac_energy_pJ = EnergyDefaults::kMac;
    c.memory_levels = {Level("rf", p.rf_kb * 1024, 8.0 * units, EnergyDefaults::kRegisterFile),
                       Level("local", local_bytes, 2.0 * units, EnergyDefaults::kLocalMemory)};
    return c;
  };

  HdaSpec spec;
  spec.name = "edge-tpu";
  LinkSpec bus;
  bus.id = "bus";
  LinkSpec mesh;
  mesh.id = "pe_array";
  for (int64_t x = 0; x < p.x_pes; ++x) {
    for (int64_t y = 0; y < p.y_pes; ++y) {
      std::string id = "pe_" + std::to_string(x) + "_" + std::to_string(y);
      spec.cores.push_back(make_core(id, Dataflow::kWeightStationary));
      bus.endpoints.push_back(id);
      mesh.endpoints.push_back(id);
    }
  }
  // PE-to-PE interconnect; its aggregate bandwidth grows with the array.
  if (mesh.endpoints.size() > 1) {
    mesh.bandwidth_bytes_per_cycle = 32.0 * static_cast<double>(mesh.endpoints.size());
    mesh.energy_pJ_per_byte = EnergyDefaults::kLink;
    spec.links.push_back(std::move(mesh));
  }
  spec.cores.push_back(make_core("simd", Dataflow::kSimdVector));
  bus.endpoints.push_back("simd");
  bus.endpoints.push_back(kOffchip);
  bus.bandwidth_bytes_per_cycle = 64;
  bus.energy_pJ_per_byte = EnergyDefaults::kLink;
  spec.links.push_back(std::move(bus));
  spec.offchip = Level("dram", kUnboundedBytes, 64, EnergyDefaults::kOffchip);
  return spec;
}

HdaSpec FuseMaxConfig(const FuseMaxParams& p) {
  RequirePositive(static_cast<double>(p.x_pes), "xPEs");
  RequirePositive(static_cast<double>(p.y_pes), "yPEs");
  RequirePositive(static_cast<double>(p.vector_pes), "vectorPEs");
  RequirePositive(p.buffer_bw, "buf_bw");
  RequirePositive(static_cast<double>(p.buffer_mb), "buf_MB");
  RequirePositive(p.offchip_bw, "offchip_bw");

  const MemoryLevel buffer =
      Level("buffer", p.buffer_mb * 1024 * 1024, p.buffer_bw, EnergyDefaults::kSharedBuffer);
  HdaSpec spec;
  spec.name = "fusemax";

  CoreSpec array;
  array.id = "array";
  array.dataflow = Dataflow::kOutputStationary;
  array.pe_dims = {p.x_pes, p.y_pes};
  array.mac_energy_pJ = EnergyDefaults::kMac;
  array.memory_levels = {buffer};
  spec.cores.push_back(array);

  CoreSpec vec;
  vec.id = "vector";
  vec.dataflow = Dataflow::kSimdVector;
  vec.pe_dims = {p.vector_pes};
  vec.mac_energy_pJ = EnergyDefaults::kMac;
  vec.memory_levels = {buffer};
  spec.cores.push_back(vec);

  spec.links.push_back({"array_vector", {"array", "vector"}, p.buffer_bw, EnergyDefaults::kLink});
  spec.links.push_back(
      {"offchip_link", {"array", "vector", kOffchip}, p.offchip_bw, EnergyDefaults::kLink});
  spec.offchip = Level("dram", kUnboundedBytes, p.offchip_bw, EnergyDefaults::kOffchip);
  return spec;
}

bool IsHdaTemplate(const std::string& name) { return name == "edge-tpu" || name == "fusemax"; }

HdaSpec HdaTemplate(const std::string& name) {
  if (name == "edge-tpu") return EdgeTpuConfig({});
  if (name == "fusemax") return FuseMaxConfig({});
  throw Error(ErrorCode::kInvalidParam, "unknown hardware template " + name);
}

HdaSpec ImportHda(const std::string& text) {
  json doc = Parse(text);
  CheckKeys(doc, "hardware", {"name", "cores", "links", "offchip"});
  HdaSpec spec;
  spec.name = GetString(doc, "name", "hardware");
  if (!doc["cores"].is_array()) Schema("hardware", "\"cores\" must be a list");
  if (!doc["links"].is_array()) Schema("hardware", "\"links\" must be a list");
  for (size_t i = 0; i < doc["cores"].size(); ++i) {
    const json& obj = doc["cores"][i];
    const std::string where = "cores[" + std::to_string(i) + "]";
    CheckKeys(obj, where,
              {"id", "dataflow", "pe_dims", "simd_ways", "mac_energy_pJ", "memory_levels"});
    CoreSpec c;
    c.id = GetString(obj, "id", where);
    const std::string df = GetString(obj, "dataflow", where);
    if (df == "weight_stationary") {
      c.dataflow = Dataflow::kWeightStationary;
    } else if (df == "output_stationary") {
      c.dataflow = Dataflow::kOutputStationary;
    } else if (df == "simd_vector") {
      c.dataflow = Dataflow::kSimdVector;
    } else {
      Schema(where, "unknown dataflow \"" + df + "\"");
    }
    if (!obj["pe_dims"].is_array()) Schema(where, "\"pe_dims\" must be a list of integers");
    c.pe_dims.clear();
    for (const auto& d : obj["pe_dims"]) c.pe_dims.push_back(AsInt(d, where, "pe_dims"));
    c.simd_ways = AsInt(obj["simd_ways"], where, "simd_ways");
    c.mac_energy_pJ = AsDouble(obj["mac_energy_pJ"], where, "mac_energy_pJ");
    if (!obj["memory_levels"].is_array()) Schema(where, "\"memory_levels\" must be a list");
    for (size_t j = 0; j < obj["memory_levels"].size(); ++j) {
      c.memory_levels.push_back(LevelFromJson(obj["memory_levels"][j],
                                              where + ".memory_levels[" + std::to_string(j) + "]"));
    }
    spec.cores.push_back(std::move(c));
  }
  for (size_t i = 0; i < doc["links"].size(); ++i) {
    const json& obj = doc["links"][i];
    const std::string where = "links[" + std::to_string(i) + "]";
    CheckKeys(obj, where, {"id", "endpoints", "bandwidth_bytes_per_cycle", "energy_pJ_per_byte"});
    LinkSpec l;
    l.id = GetString(obj, "id", where);
    l.endpoints = GetStrings(obj, "endpoints", where);
    l.bandwidth_bytes_per_cycle =
        AsDouble(obj["bandwidth_bytes_per_cycle"], where, "bandwidth_bytes_per_cycle");
    l.energy_pJ_per_byte = AsDouble(obj["energy_pJ_per_byte"], where, "energy_pJ_per_byte");
    spec.links.push_back(std::move(l));
  }
  spec.offchip = LevelFromJson(doc["offchip"], "offchip");

  auto problems = ValidateHda(spec);
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw Error(ErrorCode::kSchemaViolation, msg);
  }
  return spec;
}

HdaSpec LoadHdaFile(const std::string& path) { return ImportHda(ReadFile(path)); }

std::string ExportHda(const HdaSpec& spec) {
  json cores = json::array();
  for (const auto& c : spec.cores) {
    json levels = json::array();
    for (const auto& l : c.memory_levels) levels.push_back(LevelToJson(l));
    cores.push_back({{"id", c.id},
                     {"dataflow", std::string(ToString(c.dataflow))},
                     {"pe_dims", c.pe_dims},
                     {"simd_ways", c.simd_ways},
                     {"mac_energy_pJ", c.mac_energy_pJ},
                     {"memory_levels", levels}});
  }
  json links = json::array();
  for (const auto& l : spec.links) {
    links.push_back({{"id", l.id},
                     {"endpoints", l.endpoints},
                     {"bandwidth_bytes_per_cycle", l.bandwidth_bytes_per_cycle},
                     {"energy_pJ_per_byte", l.energy_pJ_per_byte}});
  }
  json doc = {{"name", spec.name},
              {"cores", cores},
              {"links", links},
              {"offchip", LevelToJson(spec.offchip)}};
  return doc.dump(1) + "\n";
}

void SaveHdaFile(const HdaSpec& spec, const std::string& path) { WriteFile(path, ExportHda(spec)); }

}  // namespace hdatrain
