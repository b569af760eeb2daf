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

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <set>

#include "hdatrain/autodiff.h"
#include "hdatrain/ops.h"
#include "hdatrain/workloads.h"

namespace hdatrain {
namespace {

using NodeSet = std::set<std::string>;

std::set<NodeSet> NodeSets(const std::vector<CandidateSubgraph>& cands) {
  std::set<NodeSet> out;
  for (const auto& c : cands) out.insert(NodeSet(c.nodes.begin(), c.nodes.end()));
  return out;
}

ComputationGraph ReluChain(int length, const Shape& shape = {1, 4, 8, 8}) {
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  auto x = b.Input("x", shape);
  for (int i = 0; i < length; ++i) x = b.Op(OpKind::kReLU, std::string(1, 'A' + i), {x});
  g.AddGraphOutput(x);
  return g;
}

std::vector<std::string> Ids(const ComputationGraph& g) { return TopologicalOrder(g); }

const HdaSpec& Hw() {
  static const HdaSpec hw = EdgeTpuConfig({});
  return hw;
}

TEST(Enumerate, ThreeNodeChain) {
  const auto g = ReluChain(3);
  const auto ids = Ids(g);
  const auto sets = NodeSets(EnumerateCandidates(g, Hw(), MappingConfig{}, {3, 3, 2}));
  const std::set<NodeSet> expected = {{ids[0]},         {ids[1]},         {ids[2]},
                                      {ids[0], ids[1]}, {ids[1], ids[2]}, {ids[0], ids[1], ids[2]}};
  EXPECT_EQ(sets, expected);
}

TEST(Enumerate, IncompatibleTilingPrunes) {
  const auto g = ReluChain(3, {12, 4});
  const auto ids = Ids(g);
  MappingConfig m;
  m.tiling = {{ids[0], 2}, {ids[1], 3}};
  const auto sets = NodeSets(EnumerateCandidates(g, Hw(), m, {3, 3, 2}));
  EXPECT_FALSE(sets.count({ids[0], ids[1]}));
  EXPECT_FALSE(sets.count({ids[0], ids[1], ids[2]}));
  EXPECT_TRUE(sets.count({ids[1], ids[2]}));
}

TEST(Enumerate, AtMostThreeConvs) {
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  auto x = b.Input("x", {1, 4, 8, 8});
  for (int i = 0; i < 4; ++i) {
    x = b.Conv(x, b.Weight("w" + std::to_string(i), {4, 4, 3, 3}), 1, 1,
               "conv" + std::to_string(i));
  }
  g.AddGraphOutput(x);
  const auto cands = EnumerateCandidates(g, Hw(), MappingConfig{}, {8, 3, 2});
  size_t largest = 0;
  for (const auto& c : cands) {
    EXPECT_LE(c.conv_count, 3);
    largest = std::max(largest, c.nodes.size());
  }
  EXPECT_EQ(largest, 3u);
}

TEST(Enumerate, AtMostTwoGemms) {
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  auto x = b.Input("x", {4, 8});
  for (int i = 0; i < 3; ++i) x = b.Gemm(x, b.Weight("w" + std::to_string(i), {8, 8}), "fc");
  g.AddGraphOutput(x);
  for (const auto& c : EnumerateCandidates(g, Hw(), MappingConfig{}, {8, 3, 2})) {
    EXPECT_LE(c.gemm_count, 2);
  }
}

TEST(Enumerate, MemoryPrunes) {
  auto small = EdgeTpuConfig({1, 1, 16, 1, 0.5, 8});
  // Each 1x64x32x32 tensor is 128 KiB; three of them fill 0.5 MiB with room
  // for one more, so no two-node chain (three tensors) plus padding fits once
  // the chain grows.
  const auto g = ReluChain(4, {1, 64, 32, 32});
  for (const auto& c : EnumerateCandidates(g, small, MappingConfig{}, {8, 3, 2})) {
    EXPECT_LE(c.working_set, small.cores[0].capacity_bytes());
    EXPECT_LE(c.nodes.size(), 3u);
  }
}

// Every candidate is connected, convex and consistent with its counters.
TEST(Enumerate, CandidatesAreConvexOnDeskGraphs) {
  for (const char* name : {"resnet-desk", "gpt-tiny"}) {
    const auto tg =
        BuildTrainingGraph(BuildBuiltinWorkload(name), LossSpec{}, OptimizerSpec::Sgd(0.1, 0.9));
    const auto& g = tg.graph;
    const auto cands = EnumerateCandidates(g, Hw(), MappingConfig{}, {});
    EXPECT_GE(cands.size(), g.nodes().size());
    std::set<NodeSet> seen;
    for (const auto& c : cands) {
      EXPECT_TRUE(seen.insert(NodeSet(c.nodes.begin(), c.nodes.end())).second);
      // Unfiltered candidates may still have several exiting members.
      const auto problems = VerifySubgraph(g, c.nodes, Hw(), MappingConfig{}, {});
      if (c.multi_output_nodes > 1) {
        ASSERT_EQ(problems.size(), 1u);
        EXPECT_NE(problems[0].find("more than one member"), std::string::npos);
      } else {
        EXPECT_TRUE(problems.empty()) << problems.front();
      }
      int convs = 0, gemms = 0;
      for (const auto& id : c.nodes) {
        convs += IsConvolutional(g.node(id).kind);
        gemms += IsGemmLike(g.node(id).kind);
      }
      EXPECT_EQ(c.conv_count, convs);
      EXPECT_EQ(c.gemm_count, gemms);
    }
  }
}

// A -> {B, C} -> D (Add).
ComputationGraph Diamond() {
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  auto a = b.Op(OpKind::kReLU, "A", {b.Input("x", {16})});
  auto l = b.Op(OpKind::kReLU, "B", {a});
  auto r = b.Op(OpKind::kScale, "C", {a}, {{"alpha", 2.0}});
  g.AddGraphOutput(b.Op(OpKind::kAdd, "D", {l, r}));
  return g;
}

std::string Named(const ComputationGraph& g, const std::string& suffix) {
  for (const auto& [id, n] : g.nodes()) {
    if (id.size() > suffix.size() &&
        id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0)
      return id;
  }
  throw std::logic_error(suffix);
}

TEST(FilterSingleOutput, Diamond) {
  const auto g = Diamond();
  const auto all = EnumerateCandidates(g, Hw(), MappingConfig{}, {4, 3, 2});
  const auto kept = NodeSets(FilterSingleOutput(all));
  const auto a = Named(g, ".A"), b = Named(g, ".B"), c = Named(g, ".C"), d = Named(g, ".D");
  EXPECT_TRUE(NodeSets(all).count({a, b}));
  EXPECT_FALSE(kept.count({a, b}));  // A also feeds C outside
  EXPECT_TRUE(kept.count({b, d}) || !NodeSets(all).count({b, d}));
  EXPECT_TRUE(kept.count({a, b, c, d}));
  for (const auto& id : {a, b, c, d}) EXPECT_TRUE(kept.count({id}));
}

TEST(FilterSingleOutput, ChainPair) {
  const auto g = ReluChain(3);
  const auto ids = Ids(g);
  const auto kept = NodeSets(FilterSingleOutput(EnumerateCandidates(g, Hw(), MappingConfig{}, {})));
  EXPECT_TRUE(kept.count({ids[0], ids[1]}));
}

// s = relu(x); body = conv(relu(conv(s))); out = relu(s + body).
TEST(FilterSingleOutput, ResidualBodyNeedsTheAdd) {
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  auto s = b.Op(OpKind::kReLU, "S", {b.Input("x", {1, 4, 8, 8})});
  auto c1 = b.Conv(s, b.Weight("w1", {4, 4, 3, 3}), 1, 1, "C1");
  auto r1 = b.Op(OpKind::kReLU, "R1", {c1});
  auto c2 = b.Conv(r1, b.Weight("w2", {4, 4, 3, 3}), 1, 1, "C2");
  auto add = b.Op(OpKind::kAdd, "ADD", {s, c2});
  g.AddGraphOutput(b.Op(OpKind::kReLU, "OUT", {add}));
  const auto all = NodeSets(EnumerateCandidates(g, Hw(), MappingConfig{}, {6, 3, 2}));
  const auto kept =
      NodeSets(FilterSingleOutput(EnumerateCandidates(g, Hw(), MappingConfig{}, {6, 3, 2})));
  const NodeSet body = {Named(g, ".S"), Named(g, ".C1"), Named(g, ".R1"), Named(g, ".C2")};
  NodeSet with_add = body;
  with_add.insert(Named(g, ".ADD"));
  ASSERT_TRUE(all.count(body));
  EXPECT_FALSE(kept.count(body));
  EXPECT_TRUE(kept.count(with_add));
}

TEST(SolvePartition, ChainCollapsesToOne) {
  const auto g = ReluChain(3);
  const auto p = FuseGraph(g, Hw(), MappingConfig{}, {3, 3, 2});
  EXPECT_EQ(p.groups.size(), 1u);
  EXPECT_TRUE(p.exact);
}

TEST(SolvePartition, SingletonsOnly) {
  const auto g = ReluChain(5);
  std::vector<CandidateSubgraph> singles;
  for (const auto& c : EnumerateCandidates(g, Hw(), MappingConfig{}, {})) {
    if (c.nodes.size() == 1) singles.push_back(c);
  }
  const auto p = SolvePartition(singles, g);
  EXPECT_EQ(p.groups.size(), 5u);
  EXPECT_TRUE(IsExactCover(g, p.groups));
}

// Acyclicity of the subgraph quotient, checked by repeated source removal.
bool QuotientAcyclic(const ComputationGraph& g, const std::vector<NodeSet>& groups) {
  std::map<std::string, size_t> owner;
  for (size_t i = 0; i < groups.size(); ++i)
    for (const auto& id : groups[i]) owner[id] = i;
  std::set<std::pair<size_t, size_t>> arcs;
  for (const auto& [id, n] : g.nodes()) {
    for (const auto& out : n.outputs) {
      for (const auto& c : g.edge(out).consumers) {
        if (owner[c] != owner[id]) arcs.insert({owner[id], owner[c]});
      }
    }
  }
  std::set<size_t> left;
  for (size_t i = 0; i < groups.size(); ++i) left.insert(i);
  while (!left.empty()) {
    bool removed = false;
    for (size_t v : left) {
      bool has_pred = false;
      for (const auto& [a, b] : arcs) has_pred |= b == v && left.count(a) && a != v;
      if (!has_pred) {
        left.erase(v);
        removed = true;
        break;
      }
    }
    if (!removed) return false;
  }
  return true;
}

// Exhaustive exact-cover search for the fewest subgraphs.
size_t OracleCount(const ComputationGraph& g, const std::vector<CandidateSubgraph>& cands) {
  std::vector<std::string> nodes;
  for (const auto& [id, n] : g.nodes()) nodes.push_back(id);
  std::vector<NodeSet> sets;
  for (const auto& c : cands) sets.emplace_back(c.nodes.begin(), c.nodes.end());
  size_t best = nodes.size() + 1;
  std::vector<NodeSet> chosen;
  NodeSet covered;
  std::function<void()> search = [&] {
    if (chosen.size() >= best) return;
    std::string first;
    for (const auto& id : nodes) {
      if (!covered.count(id)) {
        first = id;
        break;
      }
    }
    if (first.empty()) {
      if (QuotientAcyclic(g, chosen)) best = chosen.size();
      return;
    }
    for (const auto& s : sets) {
      if (!s.count(first)) continue;
      if (std::any_of(s.begin(), s.end(), [&](const std::string& id) { return covered.count(id); }))
        continue;
      chosen.push_back(s);
      covered.insert(s.begin(), s.end());
      search();
      for (const auto& id : s) covered.erase(id);
      chosen.pop_back();
    }
  };
  search();
  return best;
}

ComputationGraph RandomDag(std::mt19937_64& rng, int n) {
  ComputationGraph g;
  GraphBuilder b(&g, "f", Phase::kForward);
  std::vector<std::string> avail = {b.Input("x", {2, 8})};
  for (int i = 0; i < n; ++i) {
    // Mostly local wiring keeps the candidate count small.
    const size_t lo = avail.size() > 3 ? avail.size() - 3 : 0;
    auto pick = [&] { return avail[lo + rng() % (avail.size() - lo)]; };
    std::string out;
    if (rng() % 3 == 0 && avail.size() > 1) {
      out = b.Op(OpKind::kAdd, "n" + std::to_string(i), {pick(), pick()});
    } else {
      out = b.Op(OpKind::kReLU, "n" + std::to_string(i), {pick()});
    }
    avail.push_back(out);
  }
  for (const auto& [id, e] : g.edges()) {
    if (!e.is_external() && e.consumers.empty()) g.AddGraphOutput(id);
  }
  return g;
}

TEST(SolvePartition, MatchesExhaustiveOptimum) {
  std::mt19937_64 rng(41);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 40; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 17);
    const auto g = RandomDag(rng, n);
    const FusionLimits limits{2 + static_cast<int>(rng() % 4), 3, 2};
    const auto all = EnumerateCandidates(g, Hw(), MappingConfig{}, limits);
    if (all.size() > 200) continue;
    ++checked;
    for (const auto& cands : {all, FilterSingleOutput(all)}) {
      const auto p = SolvePartition(cands, g);
      EXPECT_TRUE(p.exact);
      EXPECT_TRUE(IsExactCover(g, p.groups));
      EXPECT_TRUE(IsAcyclicPartition(g, p.groups));
      EXPECT_EQ(p.groups.size(), OracleCount(g, cands)) << "trial " << trial;
    }
  }
  EXPECT_GE(checked, 20);
}

TEST(SolvePartition, GreedyFallbackStillCovers) {
  const auto g = BuildBuiltinWorkload("resnet-desk");
  PartitionOptions opts;
  opts.max_candidates = 1;
  const auto p = FuseGraph(g, Hw(), MappingConfig{}, {}, opts);
  EXPECT_FALSE(p.exact);
  EXPECT_EQ(p.method, "greedy");
  EXPECT_TRUE(IsExactCover(g, p.groups));
  EXPECT_TRUE(IsAcyclicPartition(g, p.groups));
  EXPECT_GE(p.groups.size(), FuseGraph(g, Hw(), MappingConfig{}, {}).groups.size());
}

TEST(SolvePartition, MonotoneInMaxLen) {
  for (const char* name : {"resnet-desk", "gpt-tiny"}) {
    const auto fwd = BuildBuiltinWorkload(name);
    const auto tg = BuildTrainingGraph(fwd, LossSpec{}, OptimizerSpec::Sgd(0.1, 0.9));
    for (const auto* g : {&fwd, &tg.graph}) {
      size_t prev = g->nodes().size();
      for (int len : {1, 2, 4, 6, 8}) {
        const auto p = FuseGraph(*g, Hw(), MappingConfig::Auto(Hw()), {len, 3, 2});
        EXPECT_TRUE(IsExactCover(*g, p.groups));
        EXPECT_TRUE(IsAcyclicPartition(*g, p.groups));
        for (const auto& group : p.groups) {
          EXPECT_TRUE(
              VerifySubgraph(*g, group, Hw(), MappingConfig::Auto(Hw()), {len, 3, 2}).empty());
        }
        EXPECT_LE(p.groups.size(), prev) << name << " len " << len;
        prev = p.groups.size();
      }
    }
  }
}

TEST(SolvePartition, DeskResnetInferenceBeatsLayerByLayer) {
  const auto g = BuildBuiltinWorkload("resnet-desk");
  const auto& hw = Hw();
  const auto m = MappingConfig::Auto(hw);
  const auto base = Schedule(g, SingletonPartition(g), hw, m);
  for (int len : {4, 6, 8}) {
    const auto p = FuseGraph(g, hw, m, {len, 3, 2});
    EXPECT_TRUE(p.exact);
    const auto r = Schedule(g, p.groups, hw, m);
    EXPECT_LE(r.latency_cycles, base.latency_cycles) << len;
    EXPECT_LT(r.energy.total(), base.energy.total()) << len;
  }
}

TEST(Partition, FileRoundTripAndCompletion) {
  const auto g = ReluChain(4);
  const auto ids = Ids(g);
  const Partition p = {{ids[0], ids[1]}, {ids[2]}, {ids[3]}};
  EXPECT_EQ(ImportPartition(ExportPartition(p)), p);
  const auto full = CompletePartition(g, {{ids[1], ids[2]}});
  EXPECT_TRUE(IsExactCover(g, full));
  EXPECT_EQ(full.size(), 3u);
  EXPECT_FALSE(IsExactCover(g, {{ids[0]}, {ids[0], ids[1]}, {ids[2], ids[3]}}));
}

TEST(Partition, CutBytes) {
  const auto g = ReluChain(3, {16});
  const auto ids = Ids(g);
  EXPECT_EQ(CutBytes(g, {ids[0], ids[1]}), 32);  // only B's output leaves
  EXPECT_EQ(CutBytes(g, {ids[2]}), 32);          // graph output
}

}  // namespace
}  // namespace hdatrain
