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
// hdatrain command-line front end.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hdatrain/autodiff.h"
#include "hdatrain/checkpointing.h"
#include "hdatrain/error.h"
#include "hdatrain/evaluate.h"
#include "hdatrain/fusion.h"
#include "hdatrain/hda.h"
#include "hdatrain/moo.h"
#include "hdatrain/scheduler.h"
#include "hdatrain/sweep.h"
#include "hdatrain/workloads.h"
#include "json.hpp"

namespace {

using hdatrain::ErrorCode;
using json = nlohmann::ordered_json;

constexpr int kUsageError = 2;
constexpr int kInputError = 1;

// Flags shared by several subcommands. Each subcommand registers the ones it uses.
struct Flags {
  std::string workload;
  std::string hardware = "edge-tpu";
  std::string mapping = "auto";
  std::string mode;
  std::string fusion = "auto";
  std::string loss = "cross-entropy";
  std::string optimizer = "sgd";
  double lr = 0.01;
  int64_t budget = 0;
  int pop = 32;
  int gens = 4;
  uint64_t seed = 1;
  std::string grid = "table1-sub";
  int jobs = 1;
  std::string out;
  std::string plan;
  std::string timeline;
  std::string first, second;
  std::string csv, x, y, color, title;
};

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw hdatrain::Error(ErrorCode::kIo, "cannot write " + path);
  f << text;
  if (!f) throw hdatrain::Error(ErrorCode::kIo, "failed writing " + path);
}

std::string ReadText(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw hdatrain::Error(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

hdatrain::ComputationGraph LoadWorkload(const std::string& ref) {
  if (hdatrain::IsBuiltinWorkload(ref)) return hdatrain::BuildBuiltinWorkload(ref);
  return hdatrain::LoadWorkloadFile(ref);
}

hdatrain::HdaSpec LoadHardware(const std::string& ref) {
  if (hdatrain::IsHdaTemplate(ref)) return hdatrain::HdaTemplate(ref);
  return hdatrain::LoadHdaFile(ref);
}

hdatrain::MappingConfig LoadMapping(const std::string& ref, const hdatrain::HdaSpec& hda) {
  if (ref == "auto") return hdatrain::MappingConfig::Auto(hda);
  return hdatrain::LoadMappingFile(ref);
}

hdatrain::LossSpec Loss(const Flags& f) {
  hdatrain::LossSpec loss;
  loss.kind = f.loss == "mse" ? hdatrain::LossKind::kMeanSquaredError
                              : hdatrain::LossKind::kCrossEntropyWithSoftmax;
  return loss;
}

hdatrain::OptimizerSpec Optimizer(const Flags& f) {
  return f.optimizer == "adam" ? hdatrain::OptimizerSpec::Adam(f.lr)
                               : hdatrain::OptimizerSpec::Sgd(f.lr, 0.9);
}

bool IsTrainingGraph(const hdatrain::ComputationGraph& g) {
  for (const auto& [id, node] : g.nodes()) {
    if (node.phase != hdatrain::Phase::kForward) return true;
  }
  return false;
}

// A workload that already carries backward nodes is used as is; a forward
// graph is differentiated with the loss/optimizer flags.
hdatrain::TrainingGraph Training(const hdatrain::ComputationGraph& g, const Flags& f) {
  if (IsTrainingGraph(g)) return hdatrain::AnalyzeTrainingGraph(g);
  return hdatrain::BuildTrainingGraph(g, Loss(f), Optimizer(f));
}

json ScheduleJson(const hdatrain::Evaluation& ev) {
  const auto& s = ev.schedule;
  json cores = json::object();
  for (const auto& [core, bytes] : s.peak_core_memory) cores[core] = bytes;
  return {{"nodes", ev.node_count},
          {"latency_cycles", s.latency_cycles},
          {"energy_pJ",
           {{"total", s.energy.total()},
            {"compute", s.energy.compute},
            {"on_chip", s.energy.on_chip},
            {"off_chip", s.energy.off_chip},
            {"link", s.energy.link}}},
          {"peak_activation_bytes", s.peak_activation_memory},
          {"peak_core_memory_bytes", cores},
          {"offchip_bytes", s.offchip_bytes},
          {"link_bytes", s.link_bytes},
          {"fused_subgraph_count", s.subgraph_count},
          {"fusion_method", ev.fusion_method}};
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv)
      : doc_({{"tool", "hdatrain"},
              {"version", HDATRAIN_VERSION},
              {"command", std::move(command)},
              {"argv", argv},
              {"inputs", json::object()},
              {"outputs", json::array()}}) {}

  void Input(const std::string& key, const json& value) { doc_["inputs"][key] = value; }
  void Output(const std::string& path) { doc_["outputs"].push_back(path); }
  void Set(const std::string& key, const json& value) { doc_[key] = value; }
  void Write(const std::string& out) const {
    WriteText(out + ".manifest.json", doc_.dump(2) + "\n");
  }

 private:
  json doc_;
};

// Validators turn malformed flag values into usage errors before any file is read.
const CLI::Validator kFusionSyntax(
    [](std::string& v) -> std::string {
      static const std::regex re("off|auto|auto:[1-9][0-9]*|manual:.+");
      return std::regex_match(v, re) ? "" : "expected off, auto, auto:N or manual:FILE";
    },
    "FUSION");

void AddWorkload(CLI::App* app, Flags& f, bool required = true) {
  auto* opt = app->add_option("--workload", f.workload, "Workload file or builtin name");
  if (required) opt->required();
}
void AddHardware(CLI::App* app, Flags& f) {
  app->add_option("--hardware", f.hardware, "Hardware file or template (edge-tpu, fusemax)")
      ->capture_default_str();
}
void AddMapping(CLI::App* app, Flags& f) {
  app->add_option("--mapping", f.mapping, "Mapping file or 'auto'")->capture_default_str();
}
void AddFusion(CLI::App* app, Flags& f) {
  app->add_option("--fusion", f.fusion, "off | auto | auto:N | manual:FILE")
      ->check(kFusionSyntax)
      ->capture_default_str();
}
void AddTrainingSetup(CLI::App* app, Flags& f) {
  app->add_option("--loss", f.loss, "Loss for forward workloads")
      ->check(CLI::IsMember({"cross-entropy", "mse"}))
      ->capture_default_str();
  app->add_option("--optimizer", f.optimizer, "Optimizer for forward workloads")
      ->check(CLI::IsMember({"sgd", "adam"}))
      ->capture_default_str();
  app->add_option("--lr", f.lr, "Learning rate")->check(CLI::PositiveNumber)->capture_default_str();
}
void AddOut(CLI::App* app, Flags& f, const std::string& what) {
  app->add_option("--out", f.out, what)->required();
}

void Inputs(Manifest& m, const Flags& f, bool hardware = true) {
  m.Input("workload", f.workload);
  if (hardware) {
    m.Input("hardware", f.hardware);
    m.Input("mapping", f.mapping);
  }
}

int RunBuild(const Flags& f, Manifest& m) {
  const auto g = LoadWorkload(f.workload);
  hdatrain::SaveWorkloadFile(g, f.out);
  m.Input("workload", f.workload);
  m.Set("nodes", g.nodes().size());
  m.Output(f.out);
  std::cout << "wrote " << f.out << " (" << g.nodes().size() << " nodes)\n";
  return 0;
}

int RunTransform(const Flags& f, Manifest& m) {
  const auto g = LoadWorkload(f.workload);
  if (IsTrainingGraph(g)) {
    throw hdatrain::Error(ErrorCode::kInvalidParam, "workload is already a training graph");
  }
  auto tg = hdatrain::BuildTrainingGraph(g, Loss(f), Optimizer(f));
  hdatrain::ComputationGraph out = tg.graph;
  if (!f.plan.empty()) {
    out = hdatrain::ApplyCheckpointPlan(tg, hdatrain::LoadPlanFile(f.plan));
    m.Input("plan", f.plan);
  }
  hdatrain::SaveWorkloadFile(out, f.out);
  m.Input("workload", f.workload);
  m.Input("loss", f.loss);
  m.Input("optimizer", f.optimizer);
  m.Input("lr", f.lr);
  const auto mem = hdatrain::TrainingMemoryBreakdown(tg);
  m.Set("memory_bytes", {{"parameters", mem.parameters},
                         {"gradients", mem.gradients},
                         {"activations", mem.activations},
                         {"optimizer_states", mem.optimizer_states}});
  m.Output(f.out);
  std::cout << "wrote " << f.out << " (" << out.nodes().size() << " nodes)\n";
  return 0;
}

int RunEvaluate(const Flags& f, Manifest& m) {
  const auto g = LoadWorkload(f.workload);
  const auto hda = LoadHardware(f.hardware);
  const auto mapping = LoadMapping(f.mapping, hda);
  const auto fusion = hdatrain::FusionSetting::Parse(f.fusion);
  Inputs(m, f);
  m.Input("mode", f.mode);
  m.Input("fusion", f.fusion);

  const bool training_input = IsTrainingGraph(g);
  if (training_input && f.mode != "training") {
    throw hdatrain::Error(ErrorCode::kInvalidParam,
                          "workload is a training graph; use --mode training");
  }
  json report = json::object();
  std::optional<hdatrain::Evaluation> last;
  if (f.mode != "training") {
    last = hdatrain::Evaluate(g, hda, mapping, fusion);
    report["inference"] = ScheduleJson(*last);
  }
  if (f.mode != "inference") {
    auto tg = Training(g, f);
    if (!f.plan.empty()) {
      last = hdatrain::EvaluatePlan(tg, hdatrain::LoadPlanFile(f.plan), hda, mapping, fusion);
      m.Input("plan", f.plan);
    } else {
      last = hdatrain::Evaluate(tg.graph, hda, mapping, fusion);
    }
    report["training"] = ScheduleJson(*last);
    if (!training_input) {
      const auto mem = hdatrain::TrainingMemoryBreakdown(tg);
      report["training"]["memory_bytes"] = {{"parameters", mem.parameters},
                                            {"gradients", mem.gradients},
                                            {"activations", mem.activations},
                                            {"optimizer_states", mem.optimizer_states}};
    }
  }
  WriteText(f.out, report.dump(2) + "\n");
  m.Output(f.out);
  if (!f.timeline.empty()) {
    WriteText(f.timeline, hdatrain::TimelineCsv(last->schedule));
    m.Output(f.timeline);
  }
  for (const auto& [mode, r] : report.items()) {
    std::cout << mode << ": " << r["latency_cycles"] << " cycles, " << r["energy_pJ"]["total"]
              << " pJ, " << r["fused_subgraph_count"] << " subgraphs\n";
  }
  return 0;
}

int RunFuse(const Flags& f, Manifest& m) {
  auto g = LoadWorkload(f.workload);
  if (f.mode == "training") g = Training(g, f).graph;
  const auto hda = LoadHardware(f.hardware);
  const auto mapping = LoadMapping(f.mapping, hda);
  auto fusion = hdatrain::FusionSetting::Parse(f.fusion);
  if (fusion.mode != hdatrain::FusionSetting::Mode::kAuto) {
    throw hdatrain::Error(ErrorCode::kInvalidParam, "fuse needs --fusion auto or auto:N");
  }
  const auto result = hdatrain::FuseGraph(g, hda, mapping, fusion.limits, fusion.options);
  hdatrain::Partition groups;
  for (const auto& grp : result.groups) groups.push_back(grp);
  WriteText(f.out, hdatrain::ExportPartition(groups));
  Inputs(m, f);
  m.Input("mode", f.mode);
  m.Input("fusion", f.fusion);
  m.Set("method", result.method);
  m.Set("subgraphs", groups.size());
  m.Output(f.out);
  std::cout << groups.size() << " subgraphs for " << g.nodes().size() << " nodes (" << result.method
            << ")\n";
  return 0;
}

int RunMilp(const Flags& f, Manifest& m) {
  const auto tg = Training(LoadWorkload(f.workload), f);
  const auto acts = hdatrain::ActivationSet(tg);
  const auto sol =
      hdatrain::SolveCheckpointMilp(hdatrain::MilpInstance::FromActivations(acts, f.budget));
  WriteText(f.out, hdatrain::ExportPlan(sol.plan));
  m.Input("workload", f.workload);
  m.Input("budget", f.budget);
  m.Set("method", sol.method);
  m.Set("recompute_macs", sol.objective);
  m.Set("saved_bytes", sol.saved_memory);
  m.Output(f.out);
  std::cout << "saved " << sol.saved_memory << " bytes, recompute " << sol.objective << " MACs ("
            << sol.method << ")\n";
  return 0;
}

std::string Replace(const std::string& path, const std::string& ext, const std::string& with) {
  if (path.size() >= ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
    return path.substr(0, path.size() - ext.size()) + with;
  }
  return path + with;
}

int RunGa(const Flags& f, Manifest& m) {
  const auto tg = Training(LoadWorkload(f.workload), f);
  const auto hda = LoadHardware(f.hardware);
  const auto mapping = LoadMapping(f.mapping, hda);
  const auto fusion = hdatrain::FusionSetting::Parse(f.fusion);
  Inputs(m, f);
  m.Input("fusion", f.fusion);
  m.Set("seed", f.seed);
  m.Set("population", f.pop);
  m.Set("generations", f.gens);

  hdatrain::GaParams params;
  params.population = f.pop;
  params.generations = f.gens;
  params.seed = f.seed;
  params.jobs = f.jobs;
  std::string csv = hdatrain::SnapshotCsvHeader();
  // Rewritten after every generation so an aborted run keeps what it has.
  params.on_generation = [&](const hdatrain::GaSnapshot& s) {
    csv += hdatrain::SnapshotCsvRows(s);
    WriteText(f.out, csv);
  };
  const auto search = hdatrain::Nsga2CheckpointSearch(tg, hda, mapping, fusion, params);
  m.Output(f.out);

  const std::string pareto = Replace(f.out, ".csv", ".pareto.csv");
  hdatrain::GaSnapshot archive;
  archive.generation = static_cast<int>(search.result.snapshots.size()) - 1;
  archive.population = search.result.archive;
  std::sort(archive.population.begin(), archive.population.end(),
            [](const auto& a, const auto& b) { return a.objectives < b.objectives; });
  WriteText(pareto, hdatrain::SnapshotCsvHeader() + hdatrain::SnapshotCsvRows(archive));
  m.Output(pareto);
  json hv = json::array();
  for (const auto& s : search.result.snapshots) hv.push_back(s.hypervolume);
  m.Set("hypervolume", hv);
  m.Set("evaluations", search.result.evaluations);
  std::cout << search.result.archive.size() << " Pareto points after " << search.result.evaluations
            << " evaluations\n";
  return 0;
}

int RunProbe(const Flags& f, Manifest& m) {
  const auto tg = Training(LoadWorkload(f.workload), f);
  const auto hda = LoadHardware(f.hardware);
  const auto mapping = LoadMapping(f.mapping, hda);
  const auto fusion = hdatrain::FusionSetting::Parse(f.fusion);
  const auto r = hdatrain::ProbeNonadditivity(tg, hda, mapping, fusion, f.first, f.second);
  const char* names[] = {"AC10", "AC01", "AC11"};
  json deltas = json::object();
  for (int i = 0; i < 3; ++i) {
    deltas[names[i]] = {{"latency_cycles", r.delta_latency[i]}, {"energy_pJ", r.delta_energy[i]}};
  }
  json report = {{"first", r.first},
                 {"second", r.second},
                 {"baseline", {{"latency_cycles", r.base_latency}, {"energy_pJ", r.base_energy}}},
                 {"deltas", deltas},
                 {"interaction",
                  {{"latency_cycles", r.latency_interaction()},
                   {"energy_pJ", r.energy_interaction()},
                   {"latency_fraction", r.latency_interaction() / r.base_latency},
                   {"energy_fraction", r.energy_interaction() / r.base_energy}}}};
  WriteText(f.out, report.dump(2) + "\n");
  Inputs(m, f);
  m.Input("fusion", f.fusion);
  m.Output(f.out);
  std::cout << "latency interaction " << r.latency_interaction() << " cycles ("
            << 100.0 * r.latency_interaction() / r.base_latency << "% of baseline)\n";
  return 0;
}

int RunSweep(const Flags& f, Manifest& m, const std::string& template_flag) {
  hdatrain::SweepGrid grid = hdatrain::IsBuiltinGrid(f.grid) ? hdatrain::BuiltinGrid(f.grid)
                                                             : hdatrain::LoadGridFile(f.grid);
  if (!template_flag.empty() && template_flag != grid.hardware) {
    throw hdatrain::Error(ErrorCode::kInvalidParam,
                          "grid " + f.grid + " is for " + grid.hardware + ", not " + template_flag);
  }
  hdatrain::SweepOptions opt;
  opt.mode = hdatrain::ParseSweepMode(f.mode);
  opt.fusion = hdatrain::FusionSetting::Parse(f.fusion);
  opt.loss = Loss(f);
  opt.optimizer = Optimizer(f);
  opt.jobs = f.jobs;
  if (f.mapping != "auto") opt.mapping = hdatrain::LoadMappingFile(f.mapping);
  const auto g = LoadWorkload(f.workload);
  if (IsTrainingGraph(g)) {
    throw hdatrain::Error(ErrorCode::kInvalidParam, "sweep expects a forward workload");
  }
  const auto rows = hdatrain::RunSweep(g, grid, opt);
  WriteText(f.out, hdatrain::SweepCsv(grid, rows));
  m.Input("workload", f.workload);
  m.Input("grid", f.grid);
  m.Input("hardware", grid.hardware);
  m.Input("mapping", f.mapping);
  m.Input("mode", f.mode);
  m.Input("fusion", f.fusion);
  m.Set("points", grid.size());
  m.Set("extensions", grid.Extensions());
  size_t failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  m.Set("failed", failed);
  m.Output(f.out);
  std::cout << rows.size() << " points, " << failed << " failed\n";
  return 0;
}

int RunPlot(const Flags& f, Manifest& m) {
  const auto table = hdatrain::ParseCsv(ReadText(f.csv));
  hdatrain::ScatterSpec spec{f.x, f.y, f.color, f.title};
  WriteText(f.out, hdatrain::ScatterSvg(table, spec));
  m.Input("csv", f.csv);
  m.Set("x", f.x);
  m.Set("y", f.y);
  m.Set("color", f.color);
  m.Output(f.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Training-graph cost modeling and optimization for heterogeneous dataflow accelerators",
      "hdatrain"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HDATRAIN_VERSION);
  Flags defaults;
  if (const char* env = std::getenv("MONET_SEED")) {
    try {
      defaults.seed = std::stoull(env);
    } catch (const std::exception&) {
      std::cerr << "error: MONET_SEED must be an unsigned integer\n";
      return kUsageError;
    }
  }
  const auto modes = CLI::IsMember({"inference", "training", "both"});
  std::string template_flag;
  // One flag set per subcommand so defaults of one never leak into another.
  std::map<std::string, Flags> flags;

  Flags& f_build = flags.emplace("build", defaults).first->second;
  auto* build =
      app.add_subcommand("build", "Write a workload (builtin or file) as a workload file");
  AddWorkload(build, f_build);
  AddOut(build, f_build, "Output workload file");

  Flags& f_transform = flags.emplace("transform", defaults).first->second;
  auto* transform =
      app.add_subcommand("transform", "Differentiate a forward workload into a training graph");
  AddWorkload(transform, f_transform);
  AddTrainingSetup(transform, f_transform);
  transform->add_option("--plan", f_transform.plan, "Checkpoint plan to apply");
  AddOut(transform, f_transform, "Output workload file");

  Flags& f_evaluate = flags.emplace("evaluate", defaults).first->second;
  auto* evaluate = app.add_subcommand("evaluate", "Schedule a workload and report latency/energy");
  AddWorkload(evaluate, f_evaluate);
  AddHardware(evaluate, f_evaluate);
  AddMapping(evaluate, f_evaluate);
  AddFusion(evaluate, f_evaluate);
  AddTrainingSetup(evaluate, f_evaluate);
  evaluate->add_option("--mode", f_evaluate.mode, "inference | training | both")
      ->check(modes)
      ->default_val("both");
  evaluate->add_option("--plan", f_evaluate.plan, "Checkpoint plan for the training graph");
  evaluate->add_option("--timeline", f_evaluate.timeline,
                       "Timeline CSV of the last evaluated graph");
  AddOut(evaluate, f_evaluate, "Report (JSON)");

  Flags& f_fuse = flags.emplace("fuse", defaults).first->second;
  auto* fuse = app.add_subcommand("fuse", "Solve the layer-fusion partition");
  AddWorkload(fuse, f_fuse);
  AddHardware(fuse, f_fuse);
  AddMapping(fuse, f_fuse);
  AddFusion(fuse, f_fuse);
  AddTrainingSetup(fuse, f_fuse);
  fuse->add_option("--mode", f_fuse.mode, "inference | training")
      ->check(CLI::IsMember({"inference", "training"}))
      ->default_val("inference");
  AddOut(fuse, f_fuse, "Partition file (JSON)");

  Flags& f_milp = flags.emplace("checkpoint-milp", defaults).first->second;
  auto* milp =
      app.add_subcommand("checkpoint-milp", "Exact checkpoint selection under a memory budget");
  AddWorkload(milp, f_milp);
  AddTrainingSetup(milp, f_milp);
  milp->add_option("--budget", f_milp.budget, "Memory budget in bytes")
      ->required()
      ->check(CLI::NonNegativeNumber);
  AddOut(milp, f_milp, "Plan file (JSON)");

  Flags& f_ga = flags.emplace("checkpoint-ga", defaults).first->second;
  auto* ga = app.add_subcommand("checkpoint-ga", "NSGA-II search over checkpoint plans");
  AddWorkload(ga, f_ga);
  AddHardware(ga, f_ga);
  AddMapping(ga, f_ga);
  AddFusion(ga, f_ga);
  AddTrainingSetup(ga, f_ga);
  ga->add_option("--pop", f_ga.pop, "Population size (even, >= 4)")
      ->check(CLI::Range(4, 1 << 20))
      ->capture_default_str();
  ga->add_option("--gens", f_ga.gens, "Generations after the initial one")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  ga->add_option("--seed", f_ga.seed, "RNG seed (default from MONET_SEED, else 1)");
  ga->add_option("--jobs", f_ga.jobs, "Parallel evaluations")->check(CLI::PositiveNumber);
  AddOut(ga, f_ga, "Per-generation CSV");

  Flags& f_probe = flags.emplace("probe-nonadditivity", defaults).first->second;
  auto* probe = app.add_subcommand("probe-nonadditivity",
                                   "Compare single and joint recomputation of two activations");
  AddWorkload(probe, f_probe, false);
  probe->get_option("--workload")->default_val("checkpoint-block");
  AddHardware(probe, f_probe);
  AddMapping(probe, f_probe);
  AddFusion(probe, f_probe);
  probe->get_option("--fusion")->default_val("auto:8");
  AddTrainingSetup(probe, f_probe);
  probe->add_option("--first", f_probe.first,
                    "First activation edge (default: first in topological order)");
  probe->add_option("--second", f_probe.second, "Second activation edge");
  AddOut(probe, f_probe, "Report (JSON)");

  Flags& f_sweep = flags.emplace("sweep", defaults).first->second;
  auto* sweep = app.add_subcommand("sweep", "Hardware design-space sweep");
  AddWorkload(sweep, f_sweep);
  sweep
      ->add_option("--grid", f_sweep.grid,
                   "table1-sub | table1-full | table2-sub | table2-full | FILE")
      ->capture_default_str();
  sweep->add_option("--template,--hardware", template_flag, "Expected template of the grid");
  AddMapping(sweep, f_sweep);
  AddFusion(sweep, f_sweep);
  AddTrainingSetup(sweep, f_sweep);
  sweep->add_option("--mode", f_sweep.mode, "inference | training | both")
      ->check(modes)
      ->default_val("both");
  sweep->add_option("--jobs", f_sweep.jobs, "Parallel points")->check(CLI::PositiveNumber);
  AddOut(sweep, f_sweep, "Sweep CSV");

  Flags& f_plot = flags.emplace("plot", defaults).first->second;
  auto* plot = app.add_subcommand("plot", "SVG scatter plot of two CSV columns on log axes");
  plot->add_option("--csv", f_plot.csv, "Input CSV")->required();
  plot->add_option("--x", f_plot.x, "X column")->default_val("f_latency_cycles");
  plot->add_option("--y", f_plot.y, "Y column")->default_val("f_energy_pJ");
  plot->add_option("--color", f_plot.color, "Color column");
  plot->add_option("--title", f_plot.title, "Plot title");
  AddOut(plot, f_plot, "Output SVG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const Flags& f = flags.at(cmd->get_name());
  std::vector<std::string> args(argv + 1, argv + argc);
  Manifest manifest(cmd->get_name(), args);
  const std::map<std::string, std::function<int()>> run = {
      {"build", [&] { return RunBuild(f, manifest); }},
      {"transform", [&] { return RunTransform(f, manifest); }},
      {"evaluate", [&] { return RunEvaluate(f, manifest); }},
      {"fuse", [&] { return RunFuse(f, manifest); }},
      {"checkpoint-milp", [&] { return RunMilp(f, manifest); }},
      {"checkpoint-ga", [&] { return RunGa(f, manifest); }},
      {"probe-nonadditivity", [&] { return RunProbe(f, manifest); }},
      {"sweep", [&] { return RunSweep(f, manifest, template_flag); }},
      {"plot", [&] { return RunPlot(f, manifest); }},
  };
  try {
    const int rc = run.at(cmd->get_name())();
    manifest.Write(f.out);
    return rc;
  } catch (const hdatrain::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
}
