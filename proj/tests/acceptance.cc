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
// Acceptance driver: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. argv[1] is the hdatrain CLI binary.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hdatrain/autodiff.h"
#include "hdatrain/checkpointing.h"
#include "hdatrain/evaluate.h"
#include "hdatrain/fusion.h"
#include "hdatrain/interpreter.h"
#include "hdatrain/moo.h"
#include "hdatrain/ops.h"
#include "hdatrain/scheduler.h"
#include "hdatrain/sweep.h"
#include "hdatrain/workloads.h"

namespace {

using namespace hdatrain;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void Check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

uint64_t Seed() {
  const char* env = std::getenv("MONET_SEED");
  return env ? std::stoull(env) : 1;
}

// AC1 ------------------------------------------------------------------------

void GradientOracle(Outcome& o) {
  struct Case {
    const char* workload;
    OptimizerSpec optimizer;
  };
  for (const Case& c : {Case{"resnet-desk", OptimizerSpec::Sgd(0.1, 0.9)},
                        Case{"gpt-desk", OptimizerSpec::Adam(1e-3)}}) {
    const auto start = Clock::now();
    const auto fwd = BuildBuiltinWorkload(c.workload);
    const auto tg = BuildTrainingGraph(fwd, LossSpec{}, c.optimizer);
    GradientCheckOptions opts;
    opts.seed = Seed();
    opts.tolerance = 1e-4;
    const auto report = CheckTrainingGraph(fwd, tg, opts);
    const double secs = Seconds(start);
    o.detail << " " << c.workload << ": " << report.parameters.size() << " params, max rel err "
             << report.max_rel_error << ", " << secs << "s;";
    o.Check(report.passed && report.max_rel_error < 1e-4,
            std::string(c.workload) + " gradients" +
                (report.failures.empty() ? "" : " (" + report.failures[0] + ")"));
    o.Check(secs < 60, std::string(c.workload) + " runtime >= 60 s");
  }
}

// AC2 ------------------------------------------------------------------------

int64_t BruteForceObjective(const MilpInstance& inst) {
  const size_t n = inst.items.size();
  int64_t best = -1;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    int64_t mem = 0, obj = 0;
    for (size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) {
        mem += inst.items[i].memory;
      } else {
        obj += inst.items[i].recompute;
      }
    }
    if (mem <= inst.budget && (best < 0 || obj < best)) best = obj;
  }
  return best;
}

void MilpExactness(Outcome& o) {
  std::mt19937_64 rng(Seed() * 1000 + 2);
  double solve_secs = 0;
  int mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    MilpInstance inst;
    const int n = static_cast<int>(rng() % 16);
    int64_t total = 0;
    for (int i = 0; i < n; ++i) {
      // Alternate wide and narrow ranges so both solver paths are exercised.
      const int64_t m = trial % 2 ? 1 + static_cast<int64_t>(rng() % 5000)
                                  : 1 + static_cast<int64_t>(rng() % 4'000'000'000LL);
      inst.items.push_back({"a" + std::to_string(i), m, static_cast<int64_t>(rng() % 1000)});
      total += m;
    }
    inst.budget = total == 0 ? 0 : static_cast<int64_t>(rng() % (total + 1));
    const auto start = Clock::now();
    const auto sol = SolveCheckpointMilp(inst);
    solve_secs += Seconds(start);
    mismatches += sol.objective != BruteForceObjective(inst);
  }
  o.detail << " 500 instances, " << mismatches << " mismatches, solver " << solve_secs << "s;";
  o.Check(mismatches == 0, "objective differs from brute force");
  o.Check(solve_secs < 5, "runtime >= 5 s");

  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("resnet-desk"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  const auto acts = ActivationSet(tg);
  int64_t total = 0;
  for (const auto& a : acts) total += a.bytes;
  const auto none = SolveCheckpointMilp(MilpInstance::FromActivations(acts, 0));
  const auto all = SolveCheckpointMilp(MilpInstance::FromActivations(acts, total));
  o.Check(none.plan == CheckpointPlan::AllRecomputed(acts), "M=0 is not all-recompute");
  o.Check(all.plan == CheckpointPlan::AllSaved(acts), "M=sum is not all-save");
  o.detail << " degenerate budgets on " << acts.size() << " activations checked";
}

// AC3 ------------------------------------------------------------------------

void RewriteSoundness(Outcome& o) {
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("resnet-desk"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  const auto acts = ActivationSet(tg);
  std::mt19937_64 rng(Seed() * 1000 + 3);
  const auto bindings = RandomBindings(tg.graph, rng);
  const auto reference = Execute(tg.graph, bindings);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto plan = CheckpointPlan::AllSaved(acts);
    for (auto& [edge, keep] : plan.decisions) keep = static_cast<int>(rng() % 2);
    const auto g = ApplyCheckpointPlan(tg, plan);
    const auto values = Execute(g, bindings);
    for (const auto& id : tg.graph.graph_outputs()) {
      const auto& want = reference.at(id).data;
      const auto& got = values.at(id).data;
      if (want.size() != got.size()) {
        worst = INFINITY;
        continue;
      }
      for (size_t i = 0; i < want.size(); ++i) {
        worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i])));
      }
    }
  }
  o.detail << " 50 plans, max rel diff " << worst << ";";
  o.Check(worst < 1e-12, "updates differ by >= 1e-12");
}

// AC4 ------------------------------------------------------------------------

using NodeSet = std::set<std::string>;

bool QuotientAcyclic(const ComputationGraph& g, const std::vector<NodeSet>& groups) {
  std::map<std::string, size_t> owner;
  for (size_t i = 0; i < groups.size(); ++i) {
    for (const auto& id : groups[i]) owner[id] = i;
  }
  std::vector<std::set<size_t>> succ(groups.size());
  std::vector<int> indeg(groups.size(), 0);
  for (const auto& [id, n] : g.nodes()) {
    for (const auto& out : n.outputs) {
      for (const auto& c : g.edge(out).consumers) {
        const size_t a = owner.at(id), b = owner.at(c);
        if (a != b && succ[a].insert(b).second) ++indeg[b];
      }
    }
  }
  std::vector<size_t> ready;
  for (size_t i = 0; i < groups.size(); ++i) {
    if (indeg[i] == 0) ready.push_back(i);
  }
  size_t seen = 0;
  while (!ready.empty()) {
    const size_t v = ready.back();
    ready.pop_back();
    ++seen;
    for (size_t w : succ[v]) {
      if (--indeg[w] == 0) ready.push_back(w);
    }
  }
  return seen == groups.size();
}

size_t ExhaustiveCount(const ComputationGraph& g, const std::vector<CandidateSubgraph>& cands) {
  std::vector<std::string> nodes;
  for (const auto& [id, n] : g.nodes()) nodes.push_back(id);
  std::vector<NodeSet> sets;
  for (const auto& c : cands) sets.emplace_back(c.nodes.begin(), c.nodes.end());
  size_t best = nodes.size() + 1;
  std::vector<NodeSet> chosen;
  NodeSet covered;
  std::function<void()> search = [&] {
    if (chosen.size() >= best) return;
    auto first = std::find_if(nodes.begin(), nodes.end(),
                              [&](const std::string& id) { return !covered.count(id); });
    if (first == nodes.end()) {
      if (QuotientAcyclic(g, chosen)) best = chosen.size();
      return;
    }
    for (const auto& s : sets) {
      if (!s.count(*first)) continue;
      if (std::any_of(s.begin(), s.end(), [&](const auto& id) { return covered.count(id); })) {
        continue;
      }
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
    const size_t lo = avail.size() > 4 ? avail.size() - 4 : 0;
    auto pick = [&] { return avail[lo + rng() % (avail.size() - lo)]; };
    const std::string name = "n" + std::to_string(i);
    if (rng() % 3 == 0 && avail.size() > 1) {
      avail.push_back(b.Op(OpKind::kAdd, name, {pick(), pick()}));
    } else {
      avail.push_back(b.Op(OpKind::kReLU, name, {pick()}));
    }
  }
  for (const auto& [id, e] : g.edges()) {
    if (!e.is_external() && e.consumers.empty()) g.AddGraphOutput(id);
  }
  return g;
}

void FusionCorrectness(Outcome& o) {
  const HdaSpec hw = EdgeTpuConfig({});
  const auto mapping = MappingConfig::Auto(hw);
  std::mt19937_64 rng(Seed() * 1000 + 4);
  int wrong_count = 0, bad_cover = 0, bad_subgraph = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = RandomDag(rng, 1 + static_cast<int>(rng() % 20));
    const FusionLimits limits{2 + static_cast<int>(rng() % 4), 3, 2};
    const auto cands = FilterSingleOutput(EnumerateCandidates(g, hw, mapping, limits));
    const auto p = SolvePartition(cands, g);
    bad_cover += !IsExactCover(g, p.groups) || !IsAcyclicPartition(g, p.groups);
    wrong_count += p.groups.size() != ExhaustiveCount(g, cands);
    for (const auto& grp : p.groups)
      bad_subgraph += !VerifySubgraph(g, grp, hw, mapping, limits).empty();
  }
  o.detail << " 100 random graphs: " << wrong_count << " count mismatches, " << bad_cover
           << " bad covers, " << bad_subgraph << " constraint violations;";
  o.Check(wrong_count == 0, "partition count differs from exhaustive optimum");
  o.Check(bad_cover == 0, "partition is not an acyclic exact cover");
  o.Check(bad_subgraph == 0, "selected subgraph violates a fusion constraint");

  const auto g = BuildBuiltinWorkload("resnet-desk");
  const auto base = Schedule(g, SingletonPartition(g), hw, mapping);
  o.detail << " desk ResNet layer-by-layer " << base.latency_cycles << " cycles;";
  for (int len : {4, 6, 8}) {
    const FusionLimits limits{len, 3, 2};
    const auto p = FuseGraph(g, hw, mapping, limits);
    o.Check(IsExactCover(g, p.groups), "desk partition not a cover");
    for (const auto& grp : p.groups) {
      o.Check(VerifySubgraph(g, grp, hw, mapping, limits).empty(), "desk subgraph invalid");
    }
    const auto r = Schedule(g, p.groups, hw, mapping);
    o.detail << " len " << len << ": " << r.latency_cycles << " cycles, "
             << r.energy.total() / base.energy.total() << "x energy;";
    o.Check(r.latency_cycles <= base.latency_cycles, "fused latency above baseline");
    o.Check(r.energy.total() <= base.energy.total(), "fused energy above baseline");
  }
}

// AC5 ------------------------------------------------------------------------

void Nonadditivity(Outcome& o) {
  const auto start = Clock::now();
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("checkpoint-block"), LossSpec{},
                                     OptimizerSpec::Sgd(0.1, 0.9));
  const HdaSpec hw = EdgeTpuConfig({});
  const auto r = ProbeNonadditivity(tg, hw, MappingConfig::Auto(hw), FusionSetting::Auto(8));
  const double frac = r.latency_interaction() / r.base_latency;
  const double secs = Seconds(start);
  o.detail << " base " << r.base_latency << " cycles, deltas " << r.delta_latency[0] << "/"
           << r.delta_latency[1] << "/" << r.delta_latency[2] << ", interaction " << 100 * frac
           << "% of baseline, " << secs << "s;";
  o.Check(std::abs(frac) > 0.01, "interaction <= 1% of baseline latency");
  o.Check(secs < 30, "runtime >= 30 s");
}

// AC6 ------------------------------------------------------------------------

std::vector<std::vector<int>> PeelFronts(const std::vector<Objectives>& objs) {
  auto dominates = [](const Objectives& a, const Objectives& b) {
    bool strictly = false;
    for (int k = 0; k < 3; ++k) {
      if (a[k] > b[k]) return false;
      strictly |= a[k] < b[k];
    }
    return strictly;
  };
  std::vector<std::vector<int>> fronts;
  std::set<int> left;
  for (int i = 0; i < static_cast<int>(objs.size()); ++i) left.insert(i);
  while (!left.empty()) {
    std::vector<int> front;
    for (int i : left) {
      if (std::none_of(left.begin(), left.end(),
                       [&](int j) { return dominates(objs[j], objs[i]); })) {
        front.push_back(i);
      }
    }
    for (int i : front) left.erase(i);
    fronts.push_back(front);
  }
  return fronts;
}

void Nsga2Correctness(Outcome& o) {
  std::mt19937_64 rng(Seed() * 1000 + 6);
  int sort_mismatches = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Objectives> objs(1 + rng() % 64);
    for (auto& v : objs) {
      for (auto& x : v) x = static_cast<double>(rng() % 8);
    }
    sort_mismatches += FastNondominatedSort(objs) != PeelFronts(objs);
  }
  o.detail << " sort: " << sort_mismatches << " mismatches in 300 populations;";
  o.Check(sort_mismatches == 0, "non-dominated sort differs from brute force");

  const auto start = Clock::now();
  const auto tg = BuildTrainingGraph(BuildBuiltinWorkload("resnet-desk"), LossSpec{},
                                     OptimizerSpec::Adam(1e-3));
  const HdaSpec hw = EdgeTpuConfig({});
  const auto mapping = MappingConfig::Auto(hw);
  const auto fusion = FusionSetting::Auto(6);
  GaParams params;
  params.population = 32;
  params.generations = 4;
  params.seed = Seed();
  const auto search = Nsga2CheckpointSearch(tg, hw, mapping, fusion, params);
  const double secs = Seconds(start);

  const auto& archive = search.result.archive;
  bool mutual = true;
  for (const auto& a : archive) {
    for (const auto& b : archive) mutual &= !Dominates(a.objectives, b.objectives);
  }
  o.Check(mutual, "archive has a dominated member");
  const auto& snaps = search.result.snapshots;
  bool hv_monotone = true;
  for (size_t i = 1; i < snaps.size(); ++i) {
    hv_monotone &= snaps[i].hypervolume >= snaps[i - 1].hypervolume;
  }
  o.Check(hv_monotone && snaps.size() == 5, "hypervolume decreased");

  const auto& acts = search.activations;
  const auto base = EvaluatePlan(tg, CheckpointPlan::AllSaved(acts), hw, mapping, fusion);
  const double base_latency = static_cast<double>(base.schedule.latency_cycles);
  int64_t total = 0;
  for (const auto& a : acts) total += a.bytes;
  double best_saving = 0;
  for (const auto& ind : archive) {
    if (ind.objectives[0] > 1.05 * base_latency) continue;
    best_saving = std::max(best_saving, 1.0 - ind.objectives[2] / static_cast<double>(total));
  }
  o.detail << " archive " << archive.size() << " points, best activation saving at <= 5% latency "
           << 100 * best_saving << "%, " << secs << "s;";
  o.Check(best_saving >= 0.10, "no archive point saves >= 10% at <= 5% latency overhead");
  o.Check(secs < 600, "runtime >= 10 min");
}

// AC7 ------------------------------------------------------------------------

void DseStructure(Outcome& o) {
  const auto start = Clock::now();
  const auto grid = BuiltinGrid("table1-sub");
  const auto rows = RunSweep(BuildBuiltinWorkload("resnet-desk"), grid, SweepOptions{});
  const double secs = Seconds(start);
  o.Check(rows.size() == 64, "grid does not have 64 points");
  int failed = 0, violations = 0;
  // Total compute U * L * xPEs * yPEs -> best latency at that compute level.
  std::map<double, std::pair<int64_t, int64_t>> best;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++failed;
      continue;
    }
    violations += !(*r.fb_latency > *r.f_latency && *r.fb_energy > *r.f_energy);
    const double compute = r.point[0] * r.point[1] * r.point[2] * r.point[3];
    auto [it, fresh] = best.try_emplace(compute, *r.f_latency, *r.fb_latency);
    if (!fresh) {
      it->second.first = std::min(it->second.first, *r.f_latency);
      it->second.second = std::min(it->second.second, *r.fb_latency);
    }
  }
  int increases = 0;
  for (auto it = best.begin(); std::next(it) != best.end(); ++it) {
    const auto& next = std::next(it)->second;
    increases += next.first > it->second.first || next.second > it->second.second;
  }
  o.detail << " " << rows.size() << " rows, " << failed << " failed, " << violations
           << " with training <= inference, " << best.size() << " compute levels, " << increases
           << " latency increases, " << secs << "s;";
  o.Check(failed == 0, "sweep rows failed");
  o.Check(violations == 0, "training cost not above inference cost");
  o.Check(increases == 0, "minimum latency rises with compute");
  o.Check(secs < 600, "runtime >= 10 min");
}

// AC8 ------------------------------------------------------------------------

void MemoryRatios(Outcome& o) {
  const auto fwd = BuildBuiltinWorkload("resnet-desk");
  const auto adam =
      TrainingMemoryBreakdown(BuildTrainingGraph(fwd, LossSpec{}, OptimizerSpec::Adam(1e-3)));
  const auto sgd =
      TrainingMemoryBreakdown(BuildTrainingGraph(fwd, LossSpec{}, OptimizerSpec::Sgd(0.1, 0.9)));
  o.Check(adam.optimizer_states == 2 * adam.parameters, "Adam states != 2x parameters");
  o.Check(sgd.optimizer_states == sgd.parameters, "SGD-momentum states != 1x parameters");
  ResnetConfig cfg;
  cfg.input_shape = {8, 3, 32, 32};
  const auto batch8 = TrainingMemoryBreakdown(
      BuildTrainingGraph(BuildResnet(cfg), LossSpec{}, OptimizerSpec::Sgd(0.1, 0.9)));
  o.Check(batch8.activations == 8 * sgd.activations, "activations not 8x at batch 8");
  o.Check(batch8.parameters == sgd.parameters, "parameters depend on batch");
  o.detail << " params " << sgd.parameters << " B, states adam/sgd " << adam.optimizer_states << "/"
           << sgd.optimizer_states << " B, activations batch 1/8 " << sgd.activations << "/"
           << batch8.activations << " B;";
}

// AC9 ------------------------------------------------------------------------

std::string Slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void Determinism(Outcome& o, const std::string& cli) {
  const fs::path dir =
      fs::temp_directory_path() / ("hdatrain_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string grid = (dir / "grid.json").string();
  std::ofstream(grid) << R"({"hardware": "edge-tpu", "axes": {"xPEs": [2, 4], "U": [32, 64]}})";
  const std::string csv = (dir / "plot_input.csv").string();
  const std::string setup = "'" + cli + "' sweep --workload resnet-tiny --grid " + grid +
                            " --out " + csv + " > /dev/null";
  o.Check(std::system(setup.c_str()) == 0, "plot input sweep failed");

  const std::vector<std::pair<std::string, std::string>> runs = {
      {"build --workload resnet-desk", "json"},
      {"transform --workload resnet-desk --optimizer adam", "json"},
      {"evaluate --workload resnet-desk --mode both", "json"},
      {"fuse --workload resnet-desk --fusion auto:6 --mode training", "json"},
      {"checkpoint-milp --workload resnet-desk --budget 100000", "json"},
      {"checkpoint-ga --workload resnet-tiny --pop 8 --gens 2 --jobs 2", "csv"},
      {"probe-nonadditivity --workload checkpoint-block --fusion auto:8", "json"},
      {"sweep --workload resnet-tiny --grid " + grid + " --jobs 2", "csv"},
      {"plot --csv " + csv + " --color U", "svg"},
  };
  int differing = 0;
  for (const auto& [args, ext] : runs) {
    const std::string name = args.substr(0, args.find(' '));
    std::string first;
    bool ok = true;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = dir / (name + std::to_string(rep) + "." + ext);
      const std::string cmd = "'" + cli + "' " + args + " --out " + out.string() + " > /dev/null";
      ok &= std::system(cmd.c_str()) == 0;
      std::string bytes = Slurp(out);
      // Sibling outputs (pareto front, etc.) are compared as well.
      for (const auto& e : fs::directory_iterator(dir)) {
        const std::string f = e.path().filename().string();
        if (f.rfind(name + std::to_string(rep) + ".", 0) == 0 && f != out.filename().string() &&
            f.find(".manifest.json") == std::string::npos) {
          bytes += Slurp(e.path());
        }
      }
      if (rep == 0) {
        first = bytes;
      } else {
        ok &= !first.empty() && bytes == first;
      }
    }
    if (!ok) {
      ++differing;
      o.detail << " " << name << " not reproducible;";
    }
  }
  o.detail << " " << runs.size() << " subcommands run twice, " << differing << " differing;";
  o.Check(differing == 0, "outputs differ between runs");
  fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path to hdatrain CLI>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"AC1 gradient oracle", GradientOracle},
      {"AC2 MILP exactness", MilpExactness},
      {"AC3 rewrite soundness", RewriteSoundness},
      {"AC4 fusion correctness", FusionCorrectness},
      {"AC5 nonadditivity", Nonadditivity},
      {"AC6 NSGA-II correctness", Nsga2Correctness},
      {"AC7 DSE structure", DseStructure},
      {"AC8 memory breakdown ratios", MemoryRatios},
      {"AC9 determinism", [&](Outcome& o) { Determinism(o, cli); }},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    const auto start = Clock::now();
    try {
      run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failures += !o.pass;
    std::cout << name.substr(0, 3) << (o.pass ? " PASS " : " FAIL ") << name.substr(4) << " ("
              << Seconds(start) << "s):" << o.detail.str() << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
