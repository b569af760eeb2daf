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

#include "hdatrain/scheduler.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <set>
#include <sstream>

#include "hdatrain/ops.h"
#include "json_util.h"

namespace hdatrain {
namespace {

using namespace json_util;

int64_t CeilDiv(double num, double den) {
  if (num <= 0) return 0;
  return static_cast<int64_t>(std::ceil(num / den - 1e-9));
}

bool IsParameterEdge(const TensorEdge& e) {
  return e.kind == EdgeKind::kWeight || e.kind == EdgeKind::kOptimizerState;
}

// Loop dimension divided by tensor parallelism.
std::string ChannelDim(const OperatorNode& node) {
  switch (node.kind) {
    case OpKind::kConv:
      return "K";
    case OpKind::kConvTranspose:
      return "C";
    case OpKind::kGemm:
    case OpKind::kMatMul:
      return "N";
    default:
      return "";
  }
}

int64_t DimExtent(const OperatorNode& node, const std::string& name) {
  for (const auto& d : node.loop_dims) {
    if (d.name == name) return d.extent;
  }
  return 1;
}

int64_t LargestDivisorAtMost(int64_t n, int64_t cap) {
  for (int64_t d = std::min(n, cap); d > 1; --d) {
    if (n % d == 0) return d;
  }
  return 1;
}

struct Fractions {
  double macs = 1, inputs = 1, weights = 1, outputs = 1;
};

Fractions FractionsOf(const Placement& p) {
  Fractions f;
  if (p.split <= 1) return f;
  const double s = static_cast<double>(p.split);
  f.macs = 1.0 / s;
  f.outputs = 1.0 / s;
  if (p.kind == Parallelism::kDataParallel) {
    f.inputs = 1.0 / s;
  } else {
    f.weights = 1.0 / s;
  }
  return f;
}

std::optional<Parallelism> ParseParallelism(const std::string& s) {
  for (auto p : {Parallelism::kNone, Parallelism::kDataParallel, Parallelism::kPipeline,
                 Parallelism::kTensorParallel}) {
    if (ToString(p) == s) return p;
  }
  return std::nullopt;
}

// Fewest-hop routes over the link hypergraph; endpoint n is off-chip.
class Router {
 public:
  explicit Router(const HdaSpec& hda) : hda_(hda), n_(static_cast<int>(hda.cores.size())) {
    routes_.assign((n_ + 1) * (n_ + 1), {});
    for (int src = 0; src <= n_; ++src) Bfs(src);
  }
  const std::vector<int>& route(int a, int b) const { return routes_[a * (n_ + 1) + b]; }

 private:
  int Index(const std::string& endpoint) const {
    return endpoint == kOffchip ? n_ : hda_.core_index(endpoint);
  }
  void Bfs(int src) {
    std::vector<int> prev_node(n_ + 1, -2), prev_link(n_ + 1, -1);
    prev_node[src] = -1;
    std::deque<int> queue = {src};
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (size_t l = 0; l < hda_.links.size(); ++l) {
        const auto& link = hda_.links[l];
        bool touches = false;
        for (const auto& e : link.endpoints) touches |= Index(e) == u;
        if (!touches) continue;
        for (const auto& e : link.endpoints) {
          int v = Index(e);
          if (v < 0 || prev_node[v] != -2) continue;
          prev_node[v] = u;
          prev_link[v] = static_cast<int>(l);
          queue.push_back(v);
        }
      }
    }
    for (int dst = 0; dst <= n_; ++dst) {
      if (dst == src || prev_node[dst] == -2) continue;
      std::vector<int> path;
      for (int v = dst; v != src; v = prev_node[v]) path.push_back(prev_link[v]);
      std::reverse(path.begin(), path.end());
      routes_[src * (n_ + 1) + dst] = std::move(path);
    }
  }

  const HdaSpec& hda_;
  int n_;
  std::vector<std::vector<int>> routes_;
};

}  // namespace

std::string_view ToString(Parallelism p) {
  switch (p) {
    case Parallelism::kNone:
      return "none";
    case Parallelism::kDataParallel:
      return "data_parallel";
    case Parallelism::kPipeline:
      return "pipeline";
    case Parallelism::kTensorParallel:
      return "tensor_parallel";
  }
  return "?";
}

MappingConfig MappingConfig::Auto(const HdaSpec& hda) {
  MappingConfig m;
  int64_t arrays = 0;
  for (const auto& c : hda.cores) arrays += c.is_array();
  if (arrays >= 2) {
    m.parallelism = Parallelism::kTensorParallel;
    m.split = arrays;
  } else {
    m.parallelism = Parallelism::kPipeline;
  }
  return m;
}

int64_t TilingFactor(const MappingConfig& mapping, const OperatorNode& node) {
  auto it = mapping.tiling.find(node.id);
  if (it != mapping.tiling.end()) return it->second;
  const int64_t extent = OuterLoopExtent(node);
  int64_t t = 1;
  while (t * 2 <= mapping.default_tiling && extent % (t * 2) == 0) t *= 2;
  return t;
}

void ValidateMapping(const ComputationGraph& g, const MappingConfig& mapping) {
  if (mapping.split < 1) throw Error(ErrorCode::kInvalidParam, "split must be >= 1");
  if (mapping.default_tiling < 1) {
    throw Error(ErrorCode::kInvalidParam, "default_tiling must be >= 1");
  }
  for (const auto& [id, t] : mapping.tiling) {
    if (!g.HasNode(id)) continue;  // mappings may be shared across graphs
    const int64_t extent = OuterLoopExtent(g.node(id));
    if (t < 1 || extent % t != 0) {
      throw Error(ErrorCode::kInvalidParam, "tiling " + std::to_string(t) + " for " + id +
                                                " does not divide outer extent " +
                                                std::to_string(extent));
    }
  }
  for (const auto& id : mapping.stage_boundaries) {
    if (!g.HasNode(id)) throw Error(ErrorCode::kInvalidParam, "unknown stage boundary " + id);
  }
}

MappingConfig ImportMapping(const std::string& text) {
  json doc = Parse(text);
  CheckKeys(doc, "mapping", {},
            {"assignment", "parallelism", "split", "stage_boundaries", "tiling", "default_tiling"});
  MappingConfig m;
  if (doc.contains("assignment")) {
    if (!doc["assignment"].is_object()) Schema("mapping", "\"assignment\" must be an object");
    for (auto it = doc["assignment"].begin(); it != doc["assignment"].end(); ++it) {
      if (!it->is_string()) Schema("mapping", "assignment values must be core ids");
      m.assignment[it.key()] = it->get<std::string>();
    }
  }
  if (doc.contains("parallelism")) {
    auto p = ParseParallelism(GetString(doc, "parallelism", "mapping"));
    if (!p) Schema("mapping", "unknown parallelism");
    m.parallelism = *p;
  }
  if (doc.contains("split")) m.split = AsInt(doc["split"], "mapping", "split");
  if (doc.contains("stage_boundaries")) {
    m.stage_boundaries = GetStrings(doc, "stage_boundaries", "mapping");
  }
  if (doc.contains("tiling")) {
    if (!doc["tiling"].is_object()) Schema("mapping", "\"tiling\" must be an object");
    for (auto it = doc["tiling"].begin(); it != doc["tiling"].end(); ++it) {
      m.tiling[it.key()] = AsInt(*it, "mapping", "tiling");
    }
  }
  if (doc.contains("default_tiling")) {
    m.default_tiling = AsInt(doc["default_tiling"], "mapping", "default_tiling");
  }
  if (m.split < 1 || m.default_tiling < 1) Schema("mapping", "counts must be >= 1");
  return m;
}

MappingConfig LoadMappingFile(const std::string& path) { return ImportMapping(ReadFile(path)); }

std::string ExportMapping(const MappingConfig& m) {
  json doc = {{"assignment", m.assignment}, {"parallelism", std::string(ToString(m.parallelism))},
              {"split", m.split},           {"stage_boundaries", m.stage_boundaries},
              {"tiling", m.tiling},         {"default_tiling", m.default_tiling}};
  return doc.dump(1) + "\n";
}

Assignment AssignCores(const ComputationGraph& g, const HdaSpec& hda,
                       const MappingConfig& mapping) {
  std::vector<int> arrays, vectors;
  for (size_t i = 0; i < hda.cores.size(); ++i) {
    (hda.cores[i].is_array() ? arrays : vectors).push_back(static_cast<int>(i));
  }
  std::vector<double> load(hda.cores.size(), 0.0);
  auto least_loaded = [&](const std::vector<int>& pool, size_t count) {
    std::vector<int> sorted = pool;
    std::stable_sort(sorted.begin(), sorted.end(), [&](int a, int b) { return load[a] < load[b]; });
    sorted.resize(count);
    std::sort(sorted.begin(), sorted.end());
    return sorted;
  };

  const auto order = TopologicalOrder(g);
  std::set<std::string> boundaries(mapping.stage_boundaries.begin(),
                                   mapping.stage_boundaries.end());
  size_t stage = 0;
  Assignment out;
  for (size_t pos = 0; pos < order.size(); ++pos) {
    const auto& node = g.node(order[pos]);
    if (pos > 0 && boundaries.count(node.id)) ++stage;
    const bool needs_array = RequiresArrayCore(node.kind);
    Placement p;

    auto explicit_it = mapping.assignment.find(node.id);
    if (explicit_it != mapping.assignment.end() && explicit_it->second != "auto") {
      int idx = hda.core_index(explicit_it->second);
      if (idx < 0) {
        throw Error(ErrorCode::kUnmappableNode,
                    node.id + " assigned to unknown core " + explicit_it->second);
      }
      if (needs_array && !hda.cores[idx].is_array()) {
        throw Error(ErrorCode::kIncompatibleCore, node.id + " (" +
                                                      std::string(ToString(node.kind)) +
                                                      ") cannot run on " + explicit_it->second);
      }
      p.cores = {idx};
    } else if (needs_array) {
      if (arrays.empty()) {
        throw Error(ErrorCode::kUnmappableNode, node.id + " needs an array core");
      }
      const int64_t cap = std::min<int64_t>(mapping.split, static_cast<int64_t>(arrays.size()));
      if (mapping.parallelism == Parallelism::kTensorParallel) {
        p.split = LargestDivisorAtMost(DimExtent(node, ChannelDim(node)), cap);
      } else if (mapping.parallelism == Parallelism::kDataParallel) {
        p.split = LargestDivisorAtMost(node.loop_dims.empty() ? 1 : node.loop_dims[0].extent, cap);
      }
      if (p.split > 1) {
        p.kind = mapping.parallelism;
        p.cores = least_loaded(arrays, static_cast<size_t>(p.split));
      } else if (mapping.parallelism == Parallelism::kPipeline && !boundaries.empty()) {
        p.cores = {arrays[stage % arrays.size()]};
      } else {
        p.cores = least_loaded(arrays, 1);
      }
    } else {
      p.cores = least_loaded(vectors.empty() ? arrays : vectors, 1);
    }
    for (int c : p.cores) {
      load[c] += static_cast<double>(node.macs()) / static_cast<double>(p.split) /
                 static_cast<double>(hda.cores[c].parallelism());
    }
    out[node.id] = std::move(p);
  }
  return out;
}

NodeCost ComputeNodeCost(const ComputationGraph& g, const OperatorNode& node, const CoreSpec& core,
                         int64_t tiles, const Placement& placement,
                         const std::vector<std::string>& on_chip) {
  if (RequiresArrayCore(node.kind) && !core.is_array()) {
    throw Error(ErrorCode::kIncompatibleCore,
                node.id + " (" + std::string(ToString(node.kind)) + ") cannot run on " + core.id);
  }
  const Fractions f = FractionsOf(placement);
  auto is_on_chip = [&](const std::string& e) {
    return std::find(on_chip.begin(), on_chip.end(), e) != on_chip.end();
  };
  // Innermost level serving an operand; on-chip tiles stop there.
  auto innermost = [&](const std::string& operand) -> int {
    for (size_t i = 0; i < core.memory_levels.size(); ++i) {
      if (core.memory_levels[i].Serves(operand)) return static_cast<int>(i);
    }
    return -1;
  };

  const size_t nlev = core.memory_levels.size();
  std::vector<double> reads(nlev, 0.0), writes(nlev, 0.0);
  for (const auto& id : node.inputs) {
    const auto& e = g.edge(id);
    const bool weight = IsParameterEdge(e);
    const std::string operand = weight ? "weights" : "inputs";
    double bytes = static_cast<double>(TensorBytes(e)) * (weight ? f.weights : f.inputs);
    if (weight && core.dataflow != Dataflow::kWeightStationary) bytes *= tiles;
    const int inner = innermost(operand);
    for (size_t i = 0; i < nlev; ++i) {
      if (!core.memory_levels[i].Serves(operand)) continue;
      if (is_on_chip(id) && static_cast<int>(i) != inner) continue;
      reads[i] += bytes;
    }
  }
  for (const auto& id : node.outputs) {
    const double bytes = static_cast<double>(TensorBytes(g.edge(id))) * f.outputs;
    const int inner = innermost("outputs");
    for (size_t i = 0; i < nlev; ++i) {
      if (!core.memory_levels[i].Serves("outputs")) continue;
      if (is_on_chip(id) && static_cast<int>(i) != inner) continue;
      writes[i] += bytes;
    }
  }

  NodeCost cost;
  const double macs = std::ceil(static_cast<double>(node.macs()) * f.macs);
  cost.compute_cycles = CeilDiv(macs, static_cast<double>(core.parallelism()));
  cost.compute_energy_pJ = macs * core.mac_energy_pJ;
  cost.level_bytes.resize(nlev);
  for (size_t i = 0; i < nlev; ++i) {
    const auto& l = core.memory_levels[i];
    cost.level_bytes[i] = reads[i] + writes[i];
    cost.memory_cycles = std::max({cost.memory_cycles, CeilDiv(reads[i], l.read_bw_bytes_per_cycle),
                                   CeilDiv(writes[i], l.write_bw_bytes_per_cycle)});
    cost.memory_energy_pJ +=
        reads[i] * l.read_energy_pJ_per_byte + writes[i] * l.write_energy_pJ_per_byte;
  }
  cost.cycles = std::max(cost.compute_cycles, cost.memory_cycles);
  return cost;
}

Partition SingletonPartition(const ComputationGraph& g) {
  Partition p;
  for (const auto& id : TopologicalOrder(g)) p.push_back({id});
  return p;
}

int64_t SubgraphWorkingSet(const ComputationGraph& g, const std::vector<std::string>& nodes,
                           const MappingConfig& mapping) {
  int64_t tiles = 1;
  std::set<std::string> touched;
  for (const auto& id : nodes) {
    const auto& n = g.node(id);
    tiles = std::max(tiles, TilingFactor(mapping, n));
    touched.insert(n.inputs.begin(), n.inputs.end());
    touched.insert(n.outputs.begin(), n.outputs.end());
  }
  int64_t tiled = 0, weights = 0;
  for (const auto& id : touched) {
    const auto& e = g.edge(id);
    (IsParameterEdge(e) ? weights : tiled) += TensorBytes(e);
  }
  return CeilDiv(static_cast<double>(tiled), static_cast<double>(tiles)) + weights;
}

ScheduleResult Schedule(const ComputationGraph& g, const Partition& partition, const HdaSpec& hda,
                        const MappingConfig& mapping) {
  if (auto problems = ValidateHda(hda); !problems.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "hardware: " + problems.front());
  }
  ValidateMapping(g, mapping);
  const auto order = TopologicalOrder(g);
  std::map<std::string, size_t> topo_pos;
  for (size_t i = 0; i < order.size(); ++i) topo_pos[order[i]] = i;

  std::map<std::string, size_t> group_of;
  for (size_t gi = 0; gi < partition.size(); ++gi) {
    if (partition[gi].empty()) throw Error(ErrorCode::kGraphInvalid, "empty subgraph");
    for (const auto& id : partition[gi]) {
      if (!g.HasNode(id)) throw Error(ErrorCode::kGraphInvalid, "partition names unknown " + id);
      if (!group_of.emplace(id, gi).second) {
        throw Error(ErrorCode::kGraphInvalid, id + " covered more than once");
      }
    }
  }
  if (group_of.size() != g.nodes().size()) {
    throw Error(ErrorCode::kGraphInvalid, "partition does not cover every node");
  }

  // Quotient DAG, ordered by each subgraph's earliest member.
  const size_t ng = partition.size();
  std::vector<std::set<size_t>> succ(ng);
  std::vector<int> indeg(ng, 0);
  std::vector<size_t> first_pos(ng, order.size());
  for (const auto& [id, gi] : group_of) first_pos[gi] = std::min(first_pos[gi], topo_pos[id]);
  for (const auto& [eid, e] : g.edges()) {
    if (e.is_external()) continue;
    const size_t from = group_of.at(e.producer);
    for (const auto& c : e.consumers) {
      const size_t to = group_of.at(c);
      if (to != from && succ[from].insert(to).second) ++indeg[to];
    }
  }
  using Entry = std::pair<size_t, size_t>;  // (first_pos, group)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (size_t gi = 0; gi < ng; ++gi) {
    if (indeg[gi] == 0) ready.push({first_pos[gi], gi});
  }
  std::vector<size_t> group_order;
  while (!ready.empty()) {
    const size_t gi = ready.top().second;
    ready.pop();
    group_order.push_back(gi);
    for (size_t s : succ[gi]) {
      if (--indeg[s] == 0) ready.push({first_pos[s], s});
    }
  }
  if (group_order.size() != ng) {
    throw Error(ErrorCode::kGraphInvalid, "partition has a cycle between subgraphs");
  }

  const Assignment assignment = AssignCores(g, hda, mapping);
  const Router router(hda);
  const int offchip = static_cast<int>(hda.cores.size());
  const bool pipelined = mapping.parallelism == Parallelism::kPipeline;

  ScheduleResult result;
  result.subgraph_count = ng;
  std::vector<int64_t> core_free(hda.cores.size(), 0), link_free(hda.links.size(), 0);
  // Fractional so transfers shorter than a cycle share it instead of each
  // claiming a whole one.
  double dram_free = 0;
  std::vector<int64_t> group_start(ng, 0), group_end(ng, 0), group_first_tile(ng, 0);
  double offchip_bytes = 0, link_bytes_total = 0;

  for (size_t gi : group_order) {
    std::vector<std::string> members = partition[gi];
    std::sort(members.begin(), members.end(), [&](const std::string& a, const std::string& b) {
      return topo_pos[a] < topo_pos[b];
    });
    const std::set<std::string> member_set(members.begin(), members.end());
    auto inside = [&](const std::string& node_id) { return member_set.count(node_id) > 0; };

    int64_t tiles = 1;
    for (const auto& id : members) tiles = std::max(tiles, TilingFactor(mapping, g.node(id)));

    std::vector<std::string> on_chip;
    for (const auto& id : members) {
      for (const auto& out : g.node(id).outputs) {
        const auto& cons = g.edge(out).consumers;
        if (std::any_of(cons.begin(), cons.end(), inside)) on_chip.push_back(out);
      }
    }

    // Compute side.
    std::map<int, int64_t> per_core;  // S_k
    int64_t tile_sum = 0;
    std::map<int, std::map<std::string, double>> ws;  // core -> edge -> bytes
    std::vector<std::pair<std::string, double>> node_energy;
    for (const auto& id : members) {
      const auto& node = g.node(id);
      const Placement& pl = assignment.at(id);
      const CoreSpec& core = hda.cores[pl.cores.front()];
      const NodeCost cost = ComputeNodeCost(g, node, core, tiles, pl, on_chip);
      const double shares = static_cast<double>(pl.cores.size());
      for (int c : pl.cores) per_core[c] += cost.cycles;
      tile_sum += CeilDiv(static_cast<double>(cost.cycles), static_cast<double>(tiles));
      result.energy.compute += cost.compute_energy_pJ * shares;
      result.energy.on_chip += cost.memory_energy_pJ * shares;
      node_energy.push_back({id, cost.energy_pJ() * shares});

      const Fractions f = FractionsOf(pl);
      for (int c : pl.cores) {
        auto& m = ws[c];
        for (const auto& in : node.inputs) {
          const auto& e = g.edge(in);
          const double b = static_cast<double>(TensorBytes(e));
          const double v = IsParameterEdge(e) ? b * f.weights : b * f.inputs / tiles;
          m[in] = std::max(m[in], v);
        }
        for (const auto& out : node.outputs) {
          const double v = static_cast<double>(TensorBytes(g.edge(out))) * f.outputs / tiles;
          m[out] = std::max(m[out], v);
        }
      }
    }
    int64_t max_s = 0;
    for (const auto& [c, s] : per_core) max_s = std::max(max_s, s);
    const int64_t compute_latency =
        max_s + tile_sum - CeilDiv(static_cast<double>(max_s), static_cast<double>(tiles));

    for (const auto& [c, edges] : ws) {
      double total = 0;
      for (const auto& [e, b] : edges) total += b;
      const int64_t bytes = CeilDiv(total, 1.0);
      const auto& core = hda.cores[c];
      if (bytes > core.capacity_bytes()) {
        throw Error(ErrorCode::kMemoryExceeded, "core " + core.id + ": subgraph starting at " +
                                                    members.front() + " needs " +
                                                    std::to_string(bytes) + " bytes, capacity " +
                                                    std::to_string(core.capacity_bytes()));
      }
      int64_t& peak = result.peak_core_memory[core.id];
      peak = std::max(peak, bytes);
    }

    // Transfer side.
    std::vector<double> link_bytes(hda.links.size(), 0.0);
    double dram_read = 0, dram_write = 0;
    auto charge = [&](int a, int b, double bytes) {
      if (a == b || bytes <= 0) return;
      for (int l : router.route(a, b)) link_bytes[l] += bytes;
    };
    std::set<std::string> read_external;
    std::set<std::pair<std::string, int>> moved;
    int64_t ready_time = 0;
    for (const auto& id : members) {
      const Placement& pl = assignment.at(id);
      for (const auto& in : g.node(id).inputs) {
        const auto& e = g.edge(in);
        const double bytes = static_cast<double>(TensorBytes(e));
        if (e.is_external() || !inside(e.producer)) {
          if (!e.is_external()) {
            const size_t h = group_of.at(e.producer);
            ready_time = std::max(ready_time, pipelined ? group_first_tile[h] : group_end[h]);
          }
          if (read_external.insert(in).second) {
            dram_read += bytes;
            charge(offchip, pl.cores.front(), bytes);
          }
        } else {
          const Placement& src = assignment.at(e.producer);
          const int from = src.cores.front();
          const bool local = std::find(pl.cores.begin(), pl.cores.end(), from) != pl.cores.end();
          if (!local && moved.insert({in, pl.cores.front()}).second) {
            charge(from, pl.cores.front(), bytes);
          }
        }
      }
      for (const auto& out : g.node(id).outputs) {
        const auto& e = g.edge(out);
        const double bytes = static_cast<double>(TensorBytes(e));
        const bool escapes =
            g.IsGraphOutput(out) || std::any_of(e.consumers.begin(), e.consumers.end(),
                                                [&](const std::string& c) { return !inside(c); });
        if (escapes) {
          dram_write += bytes;
          charge(pl.cores.front(), offchip, bytes);
        }
        if (pl.split > 1 && pl.kind == Parallelism::kTensorParallel) {
          const double s = static_cast<double>(pl.split);
          charge(pl.cores[0], pl.cores[1], bytes * (s - 1) / s);
        }
      }
      if (pl.split > 1 && pl.kind == Parallelism::kDataParallel) {
        const double s = static_cast<double>(pl.split);
        for (const auto& in : g.node(id).inputs) {
          const auto& e = g.edge(in);
          if (IsParameterEdge(e)) {
            charge(pl.cores[0], pl.cores[1], static_cast<double>(TensorBytes(e)) * (s - 1) / s);
          }
        }
      }
    }

    int64_t duration = compute_latency;
    std::vector<int64_t> link_time(hda.links.size(), 0);
    for (size_t l = 0; l < hda.links.size(); ++l) {
      if (link_bytes[l] <= 0) continue;
      link_time[l] = CeilDiv(link_bytes[l], hda.links[l].bandwidth_bytes_per_cycle);
      duration = std::max(duration, link_time[l]);
      result.energy.link += link_bytes[l] * hda.links[l].energy_pJ_per_byte;
      link_bytes_total += link_bytes[l];
    }
    const double dram_exact = dram_read / hda.offchip.read_bw_bytes_per_cycle +
                              dram_write / hda.offchip.write_bw_bytes_per_cycle;
    const int64_t dram_time = CeilDiv(dram_exact, 1.0);
    duration = std::max(duration, dram_time);
    result.energy.off_chip += dram_read * hda.offchip.read_energy_pJ_per_byte +
                              dram_write * hda.offchip.write_energy_pJ_per_byte;
    offchip_bytes += dram_read + dram_write;

    int64_t start = ready_time;
    for (const auto& [c, s] : per_core) start = std::max(start, core_free[c]);
    for (size_t l = 0; l < hda.links.size(); ++l) {
      if (link_time[l] > 0) start = std::max(start, link_free[l]);
    }
    if (dram_time > 0) start = std::max(start, static_cast<int64_t>(std::floor(dram_free + 1e-9)));
    int64_t end = start + duration;
    if (pipelined) {
      const int64_t tail = CeilDiv(static_cast<double>(duration), static_cast<double>(tiles));
      for (const auto& id : members) {
        for (const auto& in : g.node(id).inputs) {
          const auto& e = g.edge(in);
          if (!e.is_external() && !inside(e.producer)) {
            end = std::max(end, group_end[group_of.at(e.producer)] + tail);
          }
        }
      }
    }
    for (const auto& [c, s] : per_core) core_free[c] = end;
    for (size_t l = 0; l < hda.links.size(); ++l) {
      if (link_time[l] > 0) link_free[l] = start + link_time[l];
    }
    if (dram_time > 0) dram_free = std::max(dram_free, static_cast<double>(start)) + dram_exact;
    group_start[gi] = start;
    group_end[gi] = end;
    group_first_tile[gi] =
        start + CeilDiv(static_cast<double>(duration), static_cast<double>(tiles));
    result.latency_cycles = std::max(result.latency_cycles, end);

    for (const auto& [id, energy] : node_energy) {
      NodeTiming t;
      t.node = id;
      for (int c : assignment.at(id).cores) t.cores.push_back(hda.cores[c].id);
      t.start = start;
      t.end = end;
      t.energy_pJ = energy;
      result.timeline.push_back(std::move(t));
    }
  }
  result.offchip_bytes = CeilDiv(offchip_bytes, 1.0);
  result.link_bytes = CeilDiv(link_bytes_total, 1.0);

  // Live non-parameter tensors over time.
  std::vector<std::pair<int64_t, int64_t>> events;  // (time, +/- bytes)
  for (const auto& [eid, e] : g.edges()) {
    if (IsParameterEdge(e)) continue;
    const int64_t bytes = TensorBytes(e);
    int64_t born = e.is_external() ? 0 : group_start[group_of.at(e.producer)];
    int64_t dies = e.is_external() ? 0 : group_end[group_of.at(e.producer)];
    for (const auto& c : e.consumers) dies = std::max(dies, group_end[group_of.at(c)]);
    if (g.IsGraphOutput(eid)) dies = result.latency_cycles;
    if (dies <= born) dies = born + 1;
    events.push_back({born, bytes});
    events.push_back({dies, -bytes});
  }
  std::sort(events.begin(), events.end());  // releases sort before allocations
  int64_t live = 0;
  for (const auto& [t, delta] : events) {
    live += delta;
    result.peak_activation_memory = std::max(result.peak_activation_memory, live);
  }
  return result;
}

std::string TimelineCsv(const ScheduleResult& result) {
  std::ostringstream out;
  out << "node_id,core,start,end,energy_pJ\n";
  out.precision(17);
  for (const auto& t : result.timeline) {
    std::string cores;
    for (const auto& c : t.cores) cores += (cores.empty() ? "" : "+") + c;
    out << t.node << ',' << cores << ',' << t.start << ',' << t.end << ',' << t.energy_pJ << '\n';
  }
  return out.str();
}

}  // namespace hdatrain
