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
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hdatrain/checkpointing.h"
#include "hdatrain/fusion.h"
#include "hdatrain/sweep.h"
#include "hdatrain/workloads.h"
#include "json.hpp"

namespace hdatrain {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string Slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class CliTest : public testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(testing::TempDir()) /
           ("hdatrain_cli_" +
            std::string(testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string Path(const std::string& name) const { return (dir_ / name).string(); }

  // Exit status of the CLI; stderr is kept in err_.
  int Run(const std::string& args, const std::string& env = "") {
    const std::string err = Path("stderr.txt");
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + HDATRAIN_CLI + "' " + args +
                            " > '" + Path("stdout.txt") + "' 2> '" + err + "'";
    const int status = std::system(cmd.c_str());
    err_ = Slurp(err);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  json Manifest(const std::string& out) { return json::parse(Slurp(out + ".manifest.json")); }

  fs::path dir_;
  std::string err_;
};

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(Run(""), 2);
  EXPECT_EQ(Run("frobnicate"), 2);
  EXPECT_EQ(Run("build --workload resnet-tiny"), 2);  // --out is required
  EXPECT_EQ(Run("evaluate --workload resnet-tiny --fusion sometimes --out " + Path("e.json")), 2);
  EXPECT_EQ(Run("evaluate --workload resnet-tiny --mode sideways --out " + Path("e.json")), 2);
  EXPECT_EQ(Run("checkpoint-ga --workload resnet-tiny --pop 0 --out x.csv"), 2);
  EXPECT_EQ(Run("checkpoint-ga --workload resnet-tiny --out " + Path("g.csv"), "MONET_SEED=abc"),
            2);
  EXPECT_FALSE(err_.empty());
  EXPECT_EQ(Run("--help"), 0);
}

TEST_F(CliTest, InputErrorsExitOneWithDiagnostic) {
  EXPECT_EQ(Run("build --workload " + Path("missing.json") + " --out " + Path("w.json")), 1);
  EXPECT_NE(err_.find("error:"), std::string::npos);
  std::ofstream(Path("bad.json")) << "{ not json";
  EXPECT_EQ(Run("evaluate --workload " + Path("bad.json") + " --out " + Path("e.json")), 1);
  EXPECT_EQ(Run("evaluate --workload resnet-tiny --hardware " + Path("missing_hw.json") +
                " --out " + Path("e.json")),
            1);
  EXPECT_EQ(Run("fuse --workload resnet-tiny --fusion off --out " + Path("p.json")), 1);
  EXPECT_EQ(Run("sweep --workload resnet-tiny --grid table1-sub --template fusemax --out " +
                Path("s.csv")),
            1);
  EXPECT_FALSE(fs::exists(Path("s.csv.manifest.json")));
}

TEST_F(CliTest, BuildWritesWorkloadAndManifest) {
  const std::string out = Path("tiny.json");
  ASSERT_EQ(Run("build --workload resnet-tiny --out " + out), 0) << err_;
  const auto g = LoadWorkloadFile(out);
  EXPECT_EQ(ExportWorkload(g), ExportWorkload(BuildBuiltinWorkload("resnet-tiny")));
  const auto m = Manifest(out);
  EXPECT_EQ(m["tool"], "hdatrain");
  EXPECT_EQ(m["command"], "build");
  EXPECT_EQ(m["inputs"]["workload"], "resnet-tiny");
  EXPECT_EQ(m["outputs"], json::array({out}));
  EXPECT_TRUE(m.contains("version"));
}

TEST_F(CliTest, TransformThenEvaluateTrainingGraph) {
  const std::string tg = Path("train.json");
  ASSERT_EQ(Run("transform --workload resnet-tiny --optimizer adam --out " + tg), 0) << err_;
  const auto analyzed = AnalyzeTrainingGraph(LoadWorkloadFile(tg));
  const auto mem = TrainingMemoryBreakdown(analyzed);
  EXPECT_EQ(mem.optimizer_states, 2 * mem.parameters);
  EXPECT_EQ(Manifest(tg)["memory_bytes"]["optimizer_states"], mem.optimizer_states);

  const std::string ev = Path("ev.json");
  ASSERT_EQ(Run("evaluate --workload " + tg + " --mode training --out " + ev), 0) << err_;
  const auto report = json::parse(Slurp(ev));
  EXPECT_GT(report["training"]["latency_cycles"].get<int64_t>(), 0);
  EXPECT_EQ(Run("evaluate --workload " + tg + " --mode inference --out " + ev), 1);
}

TEST_F(CliTest, EvaluateBothModes) {
  const std::string ev = Path("ev.json");
  const std::string timeline = Path("timeline.csv");
  ASSERT_EQ(Run("evaluate --workload resnet-tiny --out " + ev + " --timeline " + timeline), 0)
      << err_;
  const auto r = json::parse(Slurp(ev));
  EXPECT_GT(r["training"]["latency_cycles"].get<int64_t>(),
            r["inference"]["latency_cycles"].get<int64_t>());
  EXPECT_GT(r["training"]["energy_pJ"]["total"].get<double>(),
            r["inference"]["energy_pJ"]["total"].get<double>());
  EXPECT_EQ(r["training"]["memory_bytes"]["optimizer_states"],
            r["training"]["memory_bytes"]["parameters"]);
  EXPECT_FALSE(Slurp(timeline).empty());
  EXPECT_EQ(Manifest(ev)["outputs"].size(), 2u);
}

TEST_F(CliTest, FuseWritesAnExactCover) {
  const std::string out = Path("part.json");
  ASSERT_EQ(Run("fuse --workload fusion-chain --fusion auto:4 --out " + out), 0) << err_;
  const auto g = BuildBuiltinWorkload("fusion-chain");
  const auto part = ImportPartition(Slurp(out));
  size_t covered = 0;
  for (const auto& grp : part) covered += grp.size();
  EXPECT_EQ(covered, g.nodes().size());
  EXPECT_LT(part.size(), g.nodes().size());
}

TEST_F(CliTest, MilpBudgetZeroSavesNothing) {
  const std::string out = Path("plan.json");
  ASSERT_EQ(Run("checkpoint-milp --workload resnet-tiny --budget 0 --out " + out), 0) << err_;
  const auto plan = LoadPlanFile(out);
  EXPECT_FALSE(plan.decisions.empty());
  for (const auto& [edge, keep] : plan.decisions) EXPECT_EQ(keep, 0) << edge;
  EXPECT_EQ(Manifest(out)["saved_bytes"], 0);

  ASSERT_EQ(Run("checkpoint-milp --workload resnet-tiny --budget 1000000000000 --out " + out), 0);
  for (const auto& [edge, keep] : LoadPlanFile(out).decisions) EXPECT_EQ(keep, 1) << edge;
}

TEST_F(CliTest, GaHonoursSeedEnvironment) {
  const std::string base = "checkpoint-ga --workload resnet-tiny --pop 4 --gens 1 --out ";
  ASSERT_EQ(Run(base + Path("a.csv"), "MONET_SEED=9"), 0) << err_;
  ASSERT_EQ(Run(base + Path("b.csv") + " --seed 9"), 0) << err_;
  ASSERT_EQ(Run(base + Path("c.csv")), 0) << err_;
  EXPECT_EQ(Manifest(Path("a.csv"))["seed"], 9);
  EXPECT_EQ(Manifest(Path("c.csv"))["seed"], 1);
  EXPECT_EQ(Slurp(Path("a.csv")), Slurp(Path("b.csv")));
  EXPECT_EQ(Slurp(Path("a.pareto.csv")), Slurp(Path("b.pareto.csv")));

  const auto snaps = ParseCsv(Slurp(Path("a.csv")));
  EXPECT_EQ(snaps.header.size(), 6u);
  EXPECT_EQ(snaps.rows.size(), 8u);
  const auto pareto = ParseCsv(Slurp(Path("a.pareto.csv")));
  EXPECT_GE(pareto.rows.size(), 1u);
  for (const auto& row : pareto.rows) EXPECT_EQ(row[5], "0");
}

TEST_F(CliTest, ProbeReportsInteraction) {
  const std::string out = Path("probe.json");
  ASSERT_EQ(Run("probe-nonadditivity --workload checkpoint-block --out " + out), 0) << err_;
  const auto r = json::parse(Slurp(out));
  const double base = r["baseline"]["latency_cycles"];
  const double d10 = r["deltas"]["AC10"]["latency_cycles"];
  const double d01 = r["deltas"]["AC01"]["latency_cycles"];
  const double d11 = r["deltas"]["AC11"]["latency_cycles"];
  EXPECT_DOUBLE_EQ(r["interaction"]["latency_cycles"].get<double>(), d11 - d01 - d10);
  EXPECT_DOUBLE_EQ(r["interaction"]["latency_fraction"].get<double>(), (d11 - d01 - d10) / base);
}

TEST_F(CliTest, SweepAndPlot) {
  const std::string grid = Path("grid.json");
  std::ofstream(grid) << R"({"hardware": "edge-tpu", "axes": {"xPEs": [1, 2], "U": [16, 96]}})";
  const std::string csv = Path("sweep.csv");
  ASSERT_EQ(Run("sweep --workload resnet-tiny --grid " + grid + " --template edge-tpu --jobs 2 " +
                "--out " + csv),
            0)
      << err_;
  const auto t = ParseCsv(Slurp(csv));
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_EQ(t.header[0], "xPEs");
  const int f = t.Column("f_latency_cycles"), fb = t.Column("fb_latency_cycles");
  for (const auto& row : t.rows) EXPECT_GT(std::stod(row[fb]), std::stod(row[f]));
  const auto m = Manifest(csv);
  EXPECT_EQ(m["points"], 4);
  EXPECT_EQ(m["extensions"], json::array({"U=96"}));
  EXPECT_EQ(m["failed"], 0);

  ASSERT_EQ(Run("plot --csv " + csv + " --color U --out " + Path("a.svg")), 0) << err_;
  ASSERT_EQ(Run("plot --csv " + csv + " --color U --out " + Path("b.svg")), 0) << err_;
  EXPECT_EQ(Slurp(Path("a.svg")), Slurp(Path("b.svg")));
  EXPECT_EQ(Slurp(Path("a.svg")), ScatterSvg(t, {"f_latency_cycles", "f_energy_pJ", "U", ""}));
  EXPECT_EQ(Run("plot --csv " + csv + " --x nope --out " + Path("c.svg")), 1);
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"build --workload gpt-tiny", "w.json"},
      {"transform --workload resnet-tiny --optimizer adam", "t.json"},
      {"evaluate --workload resnet-tiny --mode both", "e.json"},
      {"fuse --workload resnet-tiny --fusion auto:6 --mode training", "f.json"},
      {"checkpoint-milp --workload resnet-tiny --budget 20000", "m.json"},
      {"checkpoint-ga --workload resnet-tiny --pop 4 --gens 2 --jobs 2 --seed 3", "g.csv"},
      {"probe-nonadditivity --workload checkpoint-block", "p.json"},
      {"sweep --workload resnet-tiny --grid table1-sub --mode inference --jobs 2", "s.csv"},
  };
  for (const auto& [args, name] : cases) {
    const std::string a = Path("1_" + name), b = Path("2_" + name);
    ASSERT_EQ(Run(args + " --out " + a), 0) << args << "\n" << err_;
    ASSERT_EQ(Run(args + " --out " + b), 0) << args << "\n" << err_;
    EXPECT_EQ(Slurp(a), Slurp(b)) << args;
    EXPECT_FALSE(Slurp(a).empty()) << args;
  }
}

}  // namespace
}  // namespace hdatrain
