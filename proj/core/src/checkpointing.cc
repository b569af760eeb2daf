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

#include "hdatrain/checkpointing.h"

#include <algorithm>
#include <numeric>
#include <set>

#include "json_util.h"

namespace hdatrain {

CheckpointPlan CheckpointPlan::AllSaved(const std::vector<ActivationInfo>& acts) {
  CheckpointPlan p;
  for (const auto& a : acts) p.decisions[a.edge] = 1;
  return p;
}

CheckpointPlan CheckpointPlan::AllRecomputed(const std::vector<ActivationInfo>& acts) {
  CheckpointPlan p;
  for (const auto& a : acts) p.decisions[a.edge] = 0;
  return p;
}

int64_t CheckpointPlan::SavedBytes(const std::vector<ActivationInfo>& acts) const {
  int64_t total = 0;
  for (const auto& a : acts) {
    auto it = decisions.find(a.edge);
    if (it != decisions.end() && it->second != 0) total += a.bytes;
  }
  return total;
}

MilpInstance MilpInstance::FromActivations(const std::vector<ActivationInfo>& acts,
                                           int64_t budget) {
  MilpInstance inst;
  inst.budget = budget;
  for (const auto& a : acts) inst.items.push_back({a.edge, a.bytes, a.recompute_macs});
  return inst;
}

namespace {

class BranchAndBound {
 public:
  explicit BranchAndBound(const std::vector<MilpItem>& items) : items_(items) {
    by_density_.resize(items.size());
    std::iota(by_density_.begin(), by_density_.end(), size_t{0});
    std::stable_sort(by_density_.begin(), by_density_.end(), [&](size_t a, size_t b) {
      // r_a / m_a descending without division.
      return static_cast<__int128>(items_[a].recompute) * items_[b].memory >
             static_cast<__int128>(items_[b].recompute) * items_[a].memory;
    });
  }

  // Largest total recompute cost that fits in `cap` using items[from..].
  int64_t MaxValue(size_t from, int64_t cap) {
    best_ = 0;
    Search(from, cap, 0);
    return best_;
  }

 private:
  double Bound(size_t i, int64_t cap) const {
    double value = 0.0;
    double room = static_cast<double>(cap);
    for (size_t idx : by_density_) {
      if (idx < i) continue;
      const auto& it = items_[idx];
      if (it.memory <= room) {
        room -= static_cast<double>(it.memory);
        value += static_cast<double>(it.recompute);
      } else {
        value += static_cast<double>(it.recompute) * room / static_cast<double>(it.memory);
        break;
      }
    }
    return value;
  }

  void Search(size_t i, int64_t cap, int64_t value) {
    if (value > best_) best_ = value;
    if (i == items_.size()) return;
    if (static_cast<double>(value) + Bound(i, cap) < static_cast<double>(best_) + 0.5) return;
    if (items_[i].memory <= cap) {
      Search(i + 1, cap - items_[i].memory, value + items_[i].recompute);
    }
    Search(i + 1, cap, value);
  }

  const std::vector<MilpItem>& items_;
  std::vector<size_t> by_density_;
  int64_t best_ = 0;
};

}  // namespace

MilpSolution SolveCheckpointMilp(const MilpInstance& inst) {
  if (inst.budget < 0) throw Error(ErrorCode::kInvalidParam, "memory budget must be >= 0");
  std::vector<MilpItem> items = inst.items;
  std::sort(items.begin(), items.end(),
            [](const MilpItem& a, const MilpItem& b) { return a.id < b.id; });
  int64_t total_m = 0, total_r = 0, g = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (it.memory < 0 || it.recompute < 0) {
      throw Error(ErrorCode::kInvalidParam, "negative size or cost for " + it.id);
    }
    if (i > 0 && items[i - 1].id == it.id) {
      throw Error(ErrorCode::kInvalidParam, "duplicate item " + it.id);
    }
    total_m += it.memory;
    total_r += it.recompute;
    g = std::gcd(g, it.memory);
  }
  if (g == 0) g = 1;
  const size_t n = items.size();
  const int64_t cap = std::min(inst.budget, total_m) / g;
  const bool use_dp =
      total_m / g <= kMilpMaxGrid && static_cast<__int128>(n) * (cap + 1) <= kMilpMaxTableBits;

  // Walk items in id order, taking an item whenever an optimal completion
  // still exists with it, and stopping as soon as the optimum is reached.
  std::vector<bool> take(n, false);
  int64_t best = 0;
  MilpSolution sol;
  if (use_dp) {
    sol.method = "dp";
    const size_t width = static_cast<size_t>(cap) + 1;
    std::vector<int64_t> f(width, 0);
    std::vector<bool> bits(n * width, false);
    for (size_t i = n; i-- > 0;) {
      const int64_t w = items[i].memory / g;
      const int64_t r = items[i].recompute;
      for (int64_t c = cap; c >= w; --c) {
        const int64_t with = r + f[c - w];
        if (with >= f[c]) {
          bits[i * width + c] = true;
          f[c] = with;
        }
      }
    }
    best = f[cap];
    int64_t c = cap, acc = 0;
    for (size_t i = 0; i < n && acc < best; ++i) {
      if (bits[i * width + c]) {
        take[i] = true;
        acc += items[i].recompute;
        c -= items[i].memory / g;
      }
    }
  } else {
    sol.method = "branch_and_bound";
    BranchAndBound bnb(items);
    const int64_t budget = std::min(inst.budget, total_m);
    best = bnb.MaxValue(0, budget);
    int64_t c = budget, acc = 0;
    for (size_t i = 0; i < n && acc < best; ++i) {
      if (items[i].memory > c) continue;
      const int64_t rest = bnb.MaxValue(i + 1, c - items[i].memory);
      if (acc + items[i].recompute + rest == best) {
        take[i] = true;
        acc += items[i].recompute;
        c -= items[i].memory;
      }
    }
  }

  for (size_t i = 0; i < n; ++i) {
    sol.plan.decisions[items[i].id] = take[i] ? 1 : 0;
    if (take[i]) sol.saved_memory += items[i].memory;
  }
  sol.objective = total_r - best;
  return sol;
}

ComputationGraph ApplyCheckpointPlan(const TrainingGraph& tg, const CheckpointPlan& plan) {
  const ComputationGraph& src = tg.graph;
  const auto acts = ActivationSet(src);
  std::set<std::string> keys;
  for (const auto& [k, v] : plan.decisions) keys.insert(k);
  std::set<std::string> members;
  for (const auto& a : acts) members.insert(a.edge);
  if (keys != members) {
    throw Error(ErrorCode::kPlanMismatch, "plan keys do not match the activation set (" +
                                              std::to_string(keys.size()) + " vs " +
                                              std::to_string(members.size()) + ")");
  }
  std::set<std::string> saved;
  for (const auto& [k, v] : plan.decisions) {
    if (v != 0) saved.insert(k);
  }
  if (saved.size() == members.size()) return src;

  ComputationGraph g = src;
  // Original forward node -> earliest backward consumer it has to precede.
  std::map<std::string, std::string> anchor;
  std::map<std::string, std::string> first_consumer;
  for (const auto& a : acts) {
    if (saved.count(a.edge)) continue;
    std::string first;
    for (const auto& c : src.edge(a.edge).consumers) {
      if (src.node(c).phase != Phase::kBackward) continue;
      if (first.empty() || c < first) first = c;
    }
    first_consumer[a.edge] = first;
    for (const auto& nid : RecomputeSubgraph(src, a.edge, saved)) {
      auto it = anchor.find(nid);
      if (it == anchor.end() || first < it->second) anchor[nid] = first;
    }
  }

  std::set<std::string> recomputed_edges;
  for (const auto& [nid, first] : anchor) {
    for (const auto& e : src.node(nid).outputs) recomputed_edges.insert(e);
  }
  auto renamed = [&](const std::string& e) { return recomputed_edges.count(e) ? e + "~rc" : e; };
  for (const auto& [nid, first] : anchor) {
    const auto& orig = src.node(nid);
    for (const auto& e : orig.outputs) {
      TensorEdge copy = src.edge(e);
      copy.id = e + "~rc";
      copy.producer.clear();
      copy.consumers.clear();
      g.AddEdge(copy);
    }
    OperatorNode clone = orig;
    clone.id = first + "#rc." + nid;
    clone.phase = Phase::kBackward;
    for (auto& e : clone.inputs) e = renamed(e);
    for (auto& e : clone.outputs) e = renamed(e);
    g.AddNode(std::move(clone));
  }
  for (const auto& [edge, first] : first_consumer) {
    for (const auto& c : src.edge(edge).consumers) {
      const auto& node = src.node(c);
      if (node.phase != Phase::kBackward) continue;
      for (size_t i = 0; i < node.inputs.size(); ++i) {
        if (node.inputs[i] == edge) g.ReplaceInput(c, i, edge + "~rc");
      }
    }
  }
  return g;
}

std::string ExportPlan(const CheckpointPlan& plan) {
  json_util::json doc = json_util::json::array();
  for (const auto& [edge, x] : plan.decisions) doc.push_back({edge, x});
  return doc.dump(1) + "\n";
}

CheckpointPlan ImportPlan(const std::string& text) {
  auto doc = json_util::Parse(text);
  if (!doc.is_array()) json_util::Schema("plan", "expected a list of [edge, 0|1]");
  CheckpointPlan plan;
  for (const auto& rec : doc) {
    if (!rec.is_array() || rec.size() != 2 || !rec[0].is_string() || !rec[1].is_number_integer() ||
        (rec[1].get<int>() != 0 && rec[1].get<int>() != 1)) {
      json_util::Schema("plan", "records must be [edge, 0|1]");
    }
    if (!plan.decisions.emplace(rec[0].get<std::string>(), rec[1].get<int>()).second) {
      json_util::Schema("plan", "duplicate edge " + rec[0].get<std::string>());
    }
  }
  return plan;
}

CheckpointPlan LoadPlanFile(const std::string& path) {
  return ImportPlan(json_util::ReadFile(path));
}

}  // namespace hdatrain
