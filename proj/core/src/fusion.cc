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

#include "hdatrain/fusion.h"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "hdatrain/ops.h"
#include "json_util.h"

namespace hdatrain {
namespace {

using Bits = std::vector<uint64_t>;

struct BitsHash {
  size_t operator()(const Bits& b) const {
    uint64_t h = 0x9e3779b97f4a7c15ull;
    for (uint64_t w : b) h = (h ^ w) * 0x100000001b3ull + (h >> 29);
    return static_cast<size_t>(h);
  }
};

struct VecHash {
  size_t operator()(const std::vector<int>& v) const {
    uint64_t h = 1469598103934665603ull;
    for (int x : v) h = (h ^ static_cast<uint64_t>(x)) * 1099511628211ull;
    return static_cast<size_t>(h);
  }
};

void SetBit(Bits& b, int i) { b[i >> 6] |= uint64_t{1} << (i & 63); }
bool TestBit(const Bits& b, int i) { return (b[i >> 6] >> (i & 63)) & 1; }

bool Intersects(const Bits& a, const Bits& b) {
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] & b[i]) return true;
  }
  return false;
}

bool SubsetOf(const Bits& a, const Bits& b) {
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] & ~b[i]) return false;
  }
  return true;
}

bool Divides(int64_t a, int64_t b) { return b % a == 0 || a % b == 0; }

bool IsParameter(const TensorEdge& e) {
  return e.kind == EdgeKind::kWeight || e.kind == EdgeKind::kOptimizerState;
}

// Index-based view of the graph shared by enumeration and the solver.
struct GraphIndex {
  std::vector<std::string> ids;  // id order
  std::map<std::string, int> index;
  std::vector<std::vector<int>> succ, pred, neighbors;
  std::vector<int> topo_pos;
  std::vector<std::vector<int>> touched;  // edge indices per node
  std::vector<std::vector<int>> outputs;  // output edge indices per node
  std::vector<int64_t> edge_bytes;
  std::vector<bool> edge_param, edge_graph_output;
  std::vector<std::vector<int>> edge_consumers;

  explicit GraphIndex(const ComputationGraph& g) {
    for (const auto& [id, n] : g.nodes()) {
      index[id] = static_cast<int>(ids.size());
      ids.push_back(id);
    }
    const int n = static_cast<int>(ids.size());
    succ.resize(n);
    pred.resize(n);
    neighbors.resize(n);
    touched.resize(n);
    outputs.resize(n);
    std::map<std::string, int> edge_index;
    for (const auto& [eid, e] : g.edges()) {
      edge_index[eid] = static_cast<int>(edge_bytes.size());
      edge_bytes.push_back(TensorBytes(e));
      edge_param.push_back(IsParameter(e));
      edge_graph_output.push_back(g.IsGraphOutput(eid));
      std::vector<int> cons;
      for (const auto& c : e.consumers) cons.push_back(index.at(c));
      edge_consumers.push_back(std::move(cons));
      if (e.is_external()) continue;
      const int p = index.at(e.producer);
      for (const auto& c : e.consumers) {
        const int ci = index.at(c);
        succ[p].push_back(ci);
        pred[ci].push_back(p);
      }
    }
    for (int i = 0; i < n; ++i) {
      const auto& node = g.node(ids[i]);
      for (const auto& e : node.inputs) touched[i].push_back(edge_index.at(e));
      for (const auto& e : node.outputs) {
        touched[i].push_back(edge_index.at(e));
        outputs[i].push_back(edge_index.at(e));
      }
      auto uniq = [](std::vector<int>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
      };
      uniq(succ[i]);
      uniq(pred[i]);
      uniq(touched[i]);
      neighbors[i] = succ[i];
      neighbors[i].insert(neighbors[i].end(), pred[i].begin(), pred[i].end());
      uniq(neighbors[i]);
    }
    topo_pos.assign(n, 0);
    const auto order = TopologicalOrder(g);
    for (size_t p = 0; p < order.size(); ++p) topo_pos[index.at(order[p])] = static_cast<int>(p);
  }

  int size() const { return static_cast<int>(ids.size()); }

  int64_t Cut(const std::vector<int>& members) const {
    std::vector<bool> in(ids.size(), false);
    for (int m : members) in[m] = true;
    int64_t cut = 0;
    for (int m : members) {
      for (int e : outputs[m]) {
        bool leaves = edge_graph_output[e];
        for (int c : edge_consumers[e]) leaves = leaves || !in[c];
        if (leaves) cut += edge_bytes[e];
      }
    }
    return cut;
  }

  int MultiOutput(const std::vector<int>& members) const {
    std::vector<bool> in(ids.size(), false);
    for (int m : members) in[m] = true;
    int count = 0;
    for (int m : members) {
      bool leaves = false;
      for (int e : outputs[m]) {
        leaves = leaves || edge_graph_output[e];
        for (int c : edge_consumers[e]) leaves = leaves || !in[c];
      }
      count += leaves;
    }
    return count;
  }
};

}  // namespace

int64_t CutBytes(const ComputationGraph& g, const std::vector<std::string>& nodes) {
  int64_t cut = 0;
  std::set<std::string> in(nodes.begin(), nodes.end());
  for (const auto& id : nodes) {
    for (const auto& out : g.node(id).outputs) {
      const auto& e = g.edge(out);
      bool leaves = g.IsGraphOutput(out);
      for (const auto& c : e.consumers) leaves = leaves || !in.count(c);
      if (leaves) cut += TensorBytes(e);
    }
  }
  return cut;
}

std::vector<CandidateSubgraph> EnumerateCandidates(const ComputationGraph& g, const HdaSpec& hda,
                                                   const MappingConfig& mapping,
                                                   const FusionLimits& limits) {
  if (limits.max_len < 1 || limits.max_conv < 0 || limits.max_gemm < 0) {
    throw Error(ErrorCode::kInvalidParam, "fusion limits must be positive");
  }
  const GraphIndex gi(g);
  const int n = gi.size();
  const size_t words = (static_cast<size_t>(n) + 63) / 64;

  std::vector<int64_t> tiling(n);
  std::vector<bool> is_conv(n), is_gemm(n), needs_array(n);
  for (int i = 0; i < n; ++i) {
    const auto& node = g.node(gi.ids[i]);
    tiling[i] = TilingFactor(mapping, node);
    is_conv[i] = IsConvolutional(node.kind);
    is_gemm[i] = IsGemmLike(node.kind);
    needs_array[i] = RequiresArrayCore(node.kind);
  }

  // Strict ancestor / descendant sets, for convexity.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[gi.topo_pos[i]] = i;
  std::vector<Bits> anc(n, Bits(words, 0)), desc(n, Bits(words, 0));
  for (int v : order) {
    for (int p : gi.pred[v]) {
      for (size_t w = 0; w < words; ++w) anc[v][w] |= anc[p][w];
      SetBit(anc[v], p);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    for (int s : gi.succ[v]) {
      for (size_t w = 0; w < words; ++w) desc[v][w] |= desc[s][w];
      SetBit(desc[v], s);
    }
  }
  auto convex = [&](const std::vector<int>& set) {
    Bits d(words, 0), a(words, 0), in(words, 0);
    for (int v : set) {
      SetBit(in, v);
      for (size_t w = 0; w < words; ++w) {
        d[w] |= desc[v][w];
        a[w] |= anc[v][w];
      }
    }
    for (size_t w = 0; w < words; ++w) {
      if (d[w] & a[w] & ~in[w]) return false;
    }
    return true;
  };

  auto working_set = [&](const std::vector<int>& set) {
    std::vector<int> edges;
    int64_t t = 1;
    for (int v : set) {
      edges.insert(edges.end(), gi.touched[v].begin(), gi.touched[v].end());
      t = std::max(t, tiling[v]);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    int64_t tiled = 0, weights = 0;
    for (int e : edges) (gi.edge_param[e] ? weights : tiled) += gi.edge_bytes[e];
    return (tiled + t - 1) / t + weights;
  };

  auto describe = [&](const std::vector<int>& set) {
    CandidateSubgraph c;
    bool array = false;
    std::set<int64_t> ts;
    for (int v : set) {
      c.nodes.push_back(gi.ids[v]);
      c.conv_count += is_conv[v];
      c.gemm_count += is_gemm[v];
      array = array || needs_array[v];
      ts.insert(tiling[v]);
    }
    c.tiling_set.assign(ts.begin(), ts.end());
    c.working_set = working_set(set);
    for (const auto& core : hda.cores) {
      if ((!array || core.is_array()) && c.working_set <= core.capacity_bytes()) {
        c.feasible_cores.push_back(core.id);
      }
    }
    c.multi_output_nodes = gi.MultiOutput(set);
    return c;
  };

  std::vector<CandidateSubgraph> out;
  std::unordered_set<std::vector<int>, VecHash> visited;
  for (int seed = 0; seed < n; ++seed) {
    std::vector<int> single = {seed};
    CandidateSubgraph sc = describe(single);
    const bool seed_ok = !sc.feasible_cores.empty() && (is_conv[seed] ? 1 : 0) <= limits.max_conv &&
                         (is_gemm[seed] ? 1 : 0) <= limits.max_gemm;
    if (visited.insert(single).second) out.push_back(std::move(sc));
    if (!seed_ok) continue;

    std::deque<std::vector<int>> queue = {single};
    while (!queue.empty()) {
      std::vector<int> set = std::move(queue.front());
      queue.pop_front();
      if (static_cast<int>(set.size()) >= limits.max_len) continue;
      std::vector<int> cand;
      for (int v : set) cand.insert(cand.end(), gi.neighbors[v].begin(), gi.neighbors[v].end());
      std::sort(cand.begin(), cand.end());
      cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
      int convs = 0, gemms = 0;
      for (int v : set) {
        convs += is_conv[v];
        gemms += is_gemm[v];
      }
      for (int v : cand) {
        if (std::binary_search(set.begin(), set.end(), v)) continue;
        std::vector<int> grown = set;
        grown.insert(std::upper_bound(grown.begin(), grown.end(), v), v);
        if (!visited.insert(grown).second) continue;
        if (convs + is_conv[v] > limits.max_conv || gemms + is_gemm[v] > limits.max_gemm) continue;
        bool divisible = true;
        for (int u : set) divisible = divisible && Divides(tiling[u], tiling[v]);
        if (!divisible) continue;
        CandidateSubgraph c = describe(grown);
        if (c.feasible_cores.empty()) continue;
        if (convex(grown)) out.push_back(std::move(c));
        queue.push_back(std::move(grown));
      }
    }
  }
  return out;
}

std::vector<CandidateSubgraph> FilterSingleOutput(const std::vector<CandidateSubgraph>& cands) {
  std::vector<CandidateSubgraph> out;
  for (const auto& c : cands) {
    if (c.nodes.size() == 1 || c.multi_output_nodes <= 1) out.push_back(c);
  }
  return out;
}

namespace {

struct SearchBudgetExceeded {};

struct Value {
  int count = std::numeric_limits<int>::max();
  int64_t cut = 0;
  int choice = -1;
};

class PartitionSolver {
 public:
  PartitionSolver(const std::vector<CandidateSubgraph>& cands, const ComputationGraph& g,
                  const PartitionOptions& options)
      : gi_(g), options_(options) {
    n_ = gi_.size();
    words_ = (static_cast<size_t>(n_) + 63) / 64;
    ComputeOrder();
    by_pos_.resize(n_);
    pred_bits_.assign(n_, Bits(words_, 0));
    for (int i = 0; i < n_; ++i) {
      for (int p : gi_.pred[i]) SetBit(pred_bits_[pos_[i]], pos_[p]);
    }
    for (size_t c = 0; c < cands.size(); ++c) {
      Bits b(words_, 0), ext(words_, 0);
      std::vector<int> members;
      int first_topo = n_;
      for (const auto& id : cands[c].nodes) {
        auto it = gi_.index.find(id);
        if (it == gi_.index.end()) {
          throw Error(ErrorCode::kGraphInvalid, "candidate names unknown node " + id);
        }
        members.push_back(it->second);
        SetBit(b, pos_[it->second]);
        first_topo = std::min(first_topo, gi_.topo_pos[it->second]);
      }
      for (int m : members) {
        for (size_t w = 0; w < words_; ++w) ext[w] |= pred_bits_[pos_[m]][w];
      }
      for (size_t w = 0; w < words_; ++w) ext[w] &= ~b[w];
      bits_.push_back(std::move(b));
      ext_pred_.push_back(std::move(ext));
      size_.push_back(static_cast<int>(members.size()));
      first_topo_.push_back(first_topo);
      cut_.push_back(options_.minimize_cut_bytes ? gi_.Cut(members) : 0);
      for (int m : members) by_pos_[pos_[m]].push_back(static_cast<int>(c));
      lookup_.emplace(bits_.back(), static_cast<int>(c));
    }
    for (auto& list : by_pos_) {
      std::stable_sort(list.begin(), list.end(), [&](int a, int b) {
        if (size_[a] != size_[b]) return size_[a] > size_[b];
        return cut_[a] < cut_[b];
      });
    }
    for (int i = 0; i < n_; ++i) {
      if (by_pos_[pos_[i]].empty()) {
        throw Error(ErrorCode::kGraphInvalid, "no candidate covers " + gi_.ids[i]);
      }
    }
  }

  FusedPartition Run(size_t candidate_count) {
    if (candidate_count <= options_.max_candidates) {
      try {
        states_ = 0;
        memo_.clear();
        Bits empty(words_, 0);
        RelaxedSolve(empty);
        auto chosen = Reconstruct();
        if (Acyclic(chosen)) return Finish(chosen, true);
        states_ = 0;
        memo_.clear();
        ReadySolve(empty);
        return Finish(Reconstruct(), true);
      } catch (const SearchBudgetExceeded&) {
      }
    }
    return Finish(Greedy(), false);
  }

 private:
  // Bit positions follow a breadth-first order (from a pseudo-peripheral
  // node, low-degree neighbours first) over the undirected graph so that
  // connected candidates occupy nearby positions; this keeps the set of
  // partially covered states small. Any order is exact.
  void ComputeOrder() {
    std::vector<int> by_topo(n_);
    for (int i = 0; i < n_; ++i) by_topo[gi_.topo_pos[i]] = i;
    // Breadth-first levels from `root` within its component; returns the
    // farthest node (lowest topological position on ties).
    auto farthest = [&](int root, std::vector<int>& comp) {
      comp.clear();
      std::vector<int> d(n_, -1);
      std::deque<int> queue = {root};
      d[root] = 0;
      int best = root;
      while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        comp.push_back(u);
        if (d[u] > d[best] || (d[u] == d[best] && gi_.topo_pos[u] < gi_.topo_pos[best])) best = u;
        for (int v : gi_.neighbors[u]) {
          if (d[v] < 0) {
            d[v] = d[u] + 1;
            queue.push_back(v);
          }
        }
      }
      return best;
    };
    pos_.assign(n_, -1);
    node_at_.clear();
    std::vector<int> comp;
    for (int seed : by_topo) {
      if (pos_[seed] >= 0) continue;
      int root = farthest(seed, comp);
      for (int k = 0; k < 4; ++k) {
        int next = farthest(root, comp);
        if (next == root) break;
        root = next;
      }
      std::deque<int> queue = {root};
      pos_[root] = static_cast<int>(node_at_.size());
      node_at_.push_back(root);
      while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        std::vector<int> next;
        for (int v : gi_.neighbors[u]) {
          if (pos_[v] < 0) next.push_back(v);
        }
        std::sort(next.begin(), next.end(), [&](int a, int b) {
          if (gi_.neighbors[a].size() != gi_.neighbors[b].size()) {
            return gi_.neighbors[a].size() < gi_.neighbors[b].size();
          }
          return gi_.topo_pos[a] < gi_.topo_pos[b];
        });
        for (int v : next) {
          pos_[v] = static_cast<int>(node_at_.size());
          node_at_.push_back(v);
          queue.push_back(v);
        }
      }
    }
    topo_seq_.resize(n_);
    for (int i = 0; i < n_; ++i) topo_seq_[gi_.topo_pos[i]] = pos_[i];
  }

  int FirstUncoveredTopo(const Bits& covered) const {
    for (int p : topo_seq_) {
      if (!TestBit(covered, p)) return p;
    }
    return n_;
  }

  bool Better(const Value& a, const Value& b) const {
    if (a.count != b.count) return a.count < b.count;
    return options_.minimize_cut_bytes && a.cut < b.cut;
  }

  int FirstUncovered(const Bits& covered) const {
    for (size_t w = 0; w < words_; ++w) {
      if (~covered[w]) {
        int bit = __builtin_ctzll(~covered[w]);
        int pos = static_cast<int>(w * 64) + bit;
        return pos < n_ ? pos : n_;
      }
    }
    return n_;
  }

  void Count() {
    if (++states_ > options_.max_states) throw SearchBudgetExceeded{};
  }

  Value Combine(int c, const Value& sub) const {
    Value v;
    v.count = sub.count + 1;
    v.cut = sub.cut + cut_[c];
    v.choice = c;
    return v;
  }

  // Exact cover without the ordering constraint: always cover the first
  // uncovered bit.
  Value RelaxedSolve(const Bits& covered) {
    const int v = FirstUncovered(covered);
    if (v >= n_) return {0, 0, -1};
    if (auto it = memo_.find(covered); it != memo_.end()) return it->second;
    Count();
    Value best;
    for (int c : by_pos_[v]) {
      if (Intersects(bits_[c], covered)) continue;
      Bits next = covered;
      for (size_t w = 0; w < words_; ++w) next[w] |= bits_[c][w];
      Value sub = RelaxedSolve(next);
      if (sub.count == std::numeric_limits<int>::max()) continue;
      Value cand = Combine(c, sub);
      if (best.choice < 0 || Better(cand, best)) best = cand;
    }
    memo_[covered] = best;
    return best;
  }

  // Exact search over orders in which every chosen group is ready.
  Value ReadySolve(const Bits& covered) {
    if (FirstUncovered(covered) >= n_) return {0, 0, -1};
    if (auto it = memo_.find(covered); it != memo_.end()) return it->second;
    Count();
    Value best;
    std::vector<bool> seen(bits_.size(), false);
    for (int p = 0; p < n_; ++p) {
      if (TestBit(covered, p) || !SubsetOf(pred_bits_[p], covered)) continue;
      for (int c : by_pos_[p]) {
        if (seen[c]) continue;
        seen[c] = true;
        if (Intersects(bits_[c], covered) || !SubsetOf(ext_pred_[c], covered)) continue;
        Bits next = covered;
        for (size_t w = 0; w < words_; ++w) next[w] |= bits_[c][w];
        Value sub = ReadySolve(next);
        if (sub.count == std::numeric_limits<int>::max()) continue;
        Value cand = Combine(c, sub);
        if (best.choice < 0 || Better(cand, best)) best = cand;
      }
    }
    memo_[covered] = best;
    return best;
  }

  std::vector<int> Reconstruct() const {
    std::vector<int> chosen;
    Bits covered(words_, 0);
    while (FirstUncovered(covered) < n_) {
      auto it = memo_.find(covered);
      if (it == memo_.end() || it->second.choice < 0) {
        throw Error(ErrorCode::kGraphInvalid, "no exact cover exists");
      }
      const int c = it->second.choice;
      chosen.push_back(c);
      for (size_t w = 0; w < words_; ++w) covered[w] |= bits_[c][w];
    }
    return chosen;
  }

  bool Acyclic(const std::vector<int>& chosen) const {
    std::vector<int> group(n_, -1);
    for (size_t k = 0; k < chosen.size(); ++k) {
      for (int p = 0; p < n_; ++p) {
        if (TestBit(bits_[chosen[k]], p)) group[p] = static_cast<int>(k);
      }
    }
    std::vector<std::set<int>> out(chosen.size());
    std::vector<int> indeg(chosen.size(), 0);
    for (int i = 0; i < n_; ++i) {
      const int gp = group[pos_[i]];
      for (int s : gi_.succ[i]) {
        const int gs = group[pos_[s]];
        if (gs != gp && out[gp].insert(gs).second) ++indeg[gs];
      }
    }
    std::vector<int> stack;
    for (size_t k = 0; k < chosen.size(); ++k) {
      if (indeg[k] == 0) stack.push_back(static_cast<int>(k));
    }
    size_t seen = 0;
    while (!stack.empty()) {
      int k = stack.back();
      stack.pop_back();
      ++seen;
      for (int s : out[k]) {
        if (--indeg[s] == 0) stack.push_back(s);
      }
    }
    return seen == chosen.size();
  }

  // Largest ready candidate covering the first uncovered node, then merge
  // adjacent pairs whose union is itself a candidate.
  std::vector<int> Greedy() const {
    std::vector<int> chosen;
    Bits covered(words_, 0);
    for (int v = FirstUncoveredTopo(covered); v < n_; v = FirstUncoveredTopo(covered)) {
      int pick = -1;
      for (int c : by_pos_[v]) {
        if (Intersects(bits_[c], covered) || !SubsetOf(ext_pred_[c], covered)) continue;
        pick = c;
        break;
      }
      if (pick < 0) {
        throw Error(ErrorCode::kGraphInvalid, "no candidate covers " + gi_.ids[node_at_[v]]);
      }
      chosen.push_back(pick);
      for (size_t w = 0; w < words_; ++w) covered[w] |= bits_[pick][w];
    }
    bool improved = true;
    while (improved) {
      improved = false;
      for (size_t a = 0; a < chosen.size() && !improved; ++a) {
        for (size_t b = a + 1; b < chosen.size() && !improved; ++b) {
          Bits uni = bits_[chosen[a]];
          for (size_t w = 0; w < words_; ++w) uni[w] |= bits_[chosen[b]][w];
          auto it = lookup_.find(uni);
          if (it == lookup_.end()) continue;
          std::vector<int> trial;
          for (size_t k = 0; k < chosen.size(); ++k) {
            if (k != a && k != b) trial.push_back(chosen[k]);
          }
          trial.push_back(it->second);
          if (!Acyclic(trial)) continue;
          chosen = std::move(trial);
          improved = true;
        }
      }
    }
    return chosen;
  }

  FusedPartition Finish(const std::vector<int>& chosen, bool exact) const {
    // Schedule order: by earliest member in topological order.
    std::vector<std::pair<int, int>> keyed;
    for (int c : chosen) keyed.push_back({first_topo_[c], c});
    std::sort(keyed.begin(), keyed.end());
    FusedPartition out;
    out.exact = exact;
    out.method = exact ? "exact" : "greedy";
    for (const auto& [first, c] : keyed) {
      std::vector<std::string> group;
      std::vector<int> members;
      for (int p = 0; p < n_; ++p) {
        if (TestBit(bits_[c], p)) {
          members.push_back(node_at_[p]);
          group.push_back(gi_.ids[node_at_[p]]);
        }
      }
      std::sort(group.begin(), group.end());
      out.cut_bytes += gi_.Cut(members);
      out.groups.push_back(std::move(group));
      out.selected.push_back(static_cast<size_t>(c));
    }
    return out;
  }

  GraphIndex gi_;
  PartitionOptions options_;
  int n_ = 0;
  size_t words_ = 0;
  std::vector<Bits> bits_, ext_pred_, pred_bits_;
  std::vector<int> size_, first_topo_;
  std::vector<int> pos_, node_at_, topo_seq_;  // node -> bit, bit -> node
  std::vector<int64_t> cut_;
  std::vector<std::vector<int>> by_pos_;
  std::unordered_map<Bits, int, BitsHash> lookup_;
  std::unordered_map<Bits, Value, BitsHash> memo_;
  size_t states_ = 0;
};

}  // namespace

FusedPartition SolvePartition(const std::vector<CandidateSubgraph>& cands,
                              const ComputationGraph& g, const PartitionOptions& options) {
  PartitionSolver solver(cands, g, options);
  return solver.Run(cands.size());
}

FusedPartition FuseGraph(const ComputationGraph& g, const HdaSpec& hda,
                         const MappingConfig& mapping, const FusionLimits& limits,
                         const PartitionOptions& options) {
  return SolvePartition(FilterSingleOutput(EnumerateCandidates(g, hda, mapping, limits)), g,
                        options);
}

bool IsExactCover(const ComputationGraph& g, const Partition& partition) {
  std::set<std::string> seen;
  for (const auto& group : partition) {
    if (group.empty()) return false;
    for (const auto& id : group) {
      if (!g.HasNode(id) || !seen.insert(id).second) return false;
    }
  }
  return seen.size() == g.nodes().size();
}

bool IsAcyclicPartition(const ComputationGraph& g, const Partition& partition) {
  std::map<std::string, size_t> group_of;
  for (size_t k = 0; k < partition.size(); ++k) {
    for (const auto& id : partition[k]) group_of[id] = k;
  }
  std::vector<std::set<size_t>> out(partition.size());
  std::vector<int> indeg(partition.size(), 0);
  for (const auto& [eid, e] : g.edges()) {
    if (e.is_external() || !group_of.count(e.producer)) continue;
    const size_t from = group_of.at(e.producer);
    for (const auto& c : e.consumers) {
      auto it = group_of.find(c);
      if (it == group_of.end() || it->second == from) continue;
      if (out[from].insert(it->second).second) ++indeg[it->second];
    }
  }
  std::vector<size_t> stack;
  for (size_t k = 0; k < partition.size(); ++k) {
    if (indeg[k] == 0) stack.push_back(k);
  }
  size_t seen = 0;
  while (!stack.empty()) {
    const size_t k = stack.back();
    stack.pop_back();
    ++seen;
    for (size_t s : out[k]) {
      if (--indeg[s] == 0) stack.push_back(s);
    }
  }
  return seen == partition.size();
}

std::vector<std::string> VerifySubgraph(const ComputationGraph& g,
                                        const std::vector<std::string>& nodes, const HdaSpec& hda,
                                        const MappingConfig& mapping, const FusionLimits& limits) {
  std::vector<std::string> problems;
  const std::set<std::string> in(nodes.begin(), nodes.end());
  if (nodes.empty()) return {"empty subgraph"};
  for (const auto& id : nodes) {
    if (!g.HasNode(id)) return {"unknown node " + id};
  }
  if (nodes.size() == 1) return problems;
  if (static_cast<int>(nodes.size()) > limits.max_len) problems.push_back("longer than max_len");

  // Connectivity in the undirected induced subgraph.
  auto neighbours = [&](const std::string& id) {
    std::vector<std::string> out;
    const auto& node = g.node(id);
    for (const auto& e : node.inputs) {
      if (!g.edge(e).is_external()) out.push_back(g.edge(e).producer);
    }
    for (const auto& e : node.outputs) {
      for (const auto& c : g.edge(e).consumers) out.push_back(c);
    }
    return out;
  };
  std::set<std::string> reached = {nodes.front()};
  std::vector<std::string> stack = {nodes.front()};
  while (!stack.empty()) {
    auto id = stack.back();
    stack.pop_back();
    for (const auto& nb : neighbours(id)) {
      if (in.count(nb) && reached.insert(nb).second) stack.push_back(nb);
    }
  }
  if (reached.size() != in.size()) problems.push_back("not connected");

  // Convexity: no path leaves the subgraph and re-enters it.
  std::set<std::string> outside_reach;
  std::vector<std::string> work;
  for (const auto& id : nodes) {
    for (const auto& e : g.node(id).outputs) {
      for (const auto& c : g.edge(e).consumers) {
        if (!in.count(c) && outside_reach.insert(c).second) work.push_back(c);
      }
    }
  }
  bool reenters = false;
  while (!work.empty() && !reenters) {
    auto id = work.back();
    work.pop_back();
    for (const auto& e : g.node(id).outputs) {
      for (const auto& c : g.edge(e).consumers) {
        if (in.count(c)) reenters = true;
        if (!in.count(c) && outside_reach.insert(c).second) work.push_back(c);
      }
    }
  }
  if (reenters) problems.push_back("not convex");

  const int64_t ws = SubgraphWorkingSet(g, nodes, mapping);
  bool array = false, fits = false;
  int convs = 0, gemms = 0;
  std::vector<int64_t> ts;
  for (const auto& id : nodes) {
    const auto& node = g.node(id);
    array = array || RequiresArrayCore(node.kind);
    convs += IsConvolutional(node.kind);
    gemms += IsGemmLike(node.kind);
    ts.push_back(TilingFactor(mapping, node));
  }
  for (const auto& core : hda.cores) {
    fits = fits || ((!array || core.is_array()) && ws <= core.capacity_bytes());
  }
  if (!fits) problems.push_back("working set exceeds every compatible core");
  for (size_t i = 0; i < ts.size(); ++i) {
    for (size_t j = i + 1; j < ts.size(); ++j) {
      if (!Divides(ts[i], ts[j])) {
        problems.push_back("tiling factors not mutually divisible");
        i = ts.size();
        break;
      }
    }
  }
  if (convs > limits.max_conv) problems.push_back("too many convolutions");
  if (gemms > limits.max_gemm) problems.push_back("too many GEMMs");

  int exits = 0;
  for (const auto& id : nodes) {
    bool leaves = false;
    for (const auto& e : g.node(id).outputs) {
      leaves = leaves || g.IsGraphOutput(e);
      for (const auto& c : g.edge(e).consumers) leaves = leaves || !in.count(c);
    }
    exits += leaves;
  }
  if (exits > 1) problems.push_back("more than one member with outputs leaving the subgraph");
  return problems;
}

std::string ExportPartition(const Partition& partition) {
  json_util::json doc = partition;
  return doc.dump(1) + "\n";
}

Partition ImportPartition(const std::string& text) {
  auto doc = json_util::Parse(text);
  if (!doc.is_array()) json_util::Schema("partition", "expected a list of node-id lists");
  Partition p;
  for (const auto& group : doc) {
    if (!group.is_array()) json_util::Schema("partition", "groups must be lists of node ids");
    std::vector<std::string> ids;
    for (const auto& id : group) {
      if (!id.is_string()) json_util::Schema("partition", "node ids must be strings");
      ids.push_back(id.get<std::string>());
    }
    p.push_back(std::move(ids));
  }
  return p;
}

Partition LoadPartitionFile(const std::string& path) {
  return ImportPartition(json_util::ReadFile(path));
}

Partition CompletePartition(const ComputationGraph& g, const Partition& partial) {
  Partition out;
  std::set<std::string> seen;
  for (const auto& group : partial) {
    std::vector<std::string> kept;
    for (const auto& id : group) {
      if (!g.HasNode(id)) continue;
      if (!seen.insert(id).second) {
        throw Error(ErrorCode::kGraphInvalid, id + " appears in two fusion groups");
      }
      kept.push_back(id);
    }
    if (!kept.empty()) out.push_back(std::move(kept));
  }
  for (const auto& id : TopologicalOrder(g)) {
    if (!seen.count(id)) out.push_back({id});
  }
  return out;
}

}  // namespace hdatrain
