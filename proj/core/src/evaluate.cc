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

#include "hdatrain/evaluate.h"

#include <algorithm>
#include <map>

namespace hdatrain {

FusionSetting FusionSetting::Auto(int max_len) {
  FusionSetting f;
  f.mode = Mode::kAuto;
  f.limits.max_len = max_len;
  return f;
}

FusionSetting FusionSetting::Manual(Partition groups) {
  FusionSetting f;
  f.mode = Mode::kManual;
  f.manual = std::move(groups);
  return f;
}

FusionSetting FusionSetting::Parse(const std::string& text) {
  if (text == "off") return Off();
  if (text == "auto") return Auto(FusionLimits{}.max_len);
  if (text.rfind("auto:", 0) == 0) {
    const std::string n = text.substr(5);
    size_t used = 0;
    int len = 0;
    try {
      len = std::stoi(n, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != n.size() || n.empty() || len < 1) {
      throw Error(ErrorCode::kInvalidParam, "bad fusion limit in \"" + text + "\"");
    }
    return Auto(len);
  }
  if (text.rfind("manual:", 0) == 0 && text.size() > 7) {
    return Manual(LoadPartitionFile(text.substr(7)));
  }
  throw Error(ErrorCode::kInvalidParam,
              "fusion must be off, auto, auto:N or manual:FILE, got \"" + text + "\"");
}

Evaluation Evaluate(const ComputationGraph& g, const HdaSpec& hda, const MappingConfig& mapping,
                    const FusionSetting& fusion) {
  Evaluation ev;
  ev.node_count = g.nodes().size();
  switch (fusion.mode) {
    case FusionSetting::Mode::kOff:
      ev.partition = SingletonPartition(g);
      ev.fusion_method = "off";
      break;
    case FusionSetting::Mode::kManual:
      ev.partition = CompletePartition(g, fusion.manual);
      ev.fusion_method = "manual";
      break;
    case FusionSetting::Mode::kAuto: {
      FusedPartition fp = FuseGraph(g, hda, mapping, fusion.limits, fusion.options);
      ev.partition = std::move(fp.groups);
      ev.fusion_method = fp.method;
      break;
    }
  }
  ev.schedule = Schedule(g, ev.partition, hda, mapping);
  return ev;
}

Evaluation EvaluatePlan(const TrainingGraph& tg, const CheckpointPlan& plan, const HdaSpec& hda,
                        const MappingConfig& mapping, const FusionSetting& fusion) {
  return Evaluate(ApplyCheckpointPlan(tg, plan), hda, mapping, fusion);
}

std::vector<std::string> ActivationsInTopologicalOrder(const ComputationGraph& g) {
  std::map<std::string, size_t> pos;
  const auto order = TopologicalOrder(g);
  for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  std::vector<std::string> ids;
  for (const auto& a : ActivationSet(g)) ids.push_back(a.edge);
  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return pos.at(g.edge(a).producer) < pos.at(g.edge(b).producer);
  });
  return ids;
}

NonadditivityReport ProbeNonadditivity(const TrainingGraph& tg, const HdaSpec& hda,
                                       const MappingConfig& mapping, const FusionSetting& fusion,
                                       std::string first, std::string second) {
  const auto acts = ActivationSet(tg);
  const auto ordered = ActivationsInTopologicalOrder(tg.graph);
  if (ordered.size() < 2) {
    throw Error(ErrorCode::kInvalidParam, "need at least two activations to probe");
  }
  if (first.empty()) first = ordered[0];
  if (second.empty()) second = ordered[1];
  for (const auto& id : {first, second}) {
    if (std::find(ordered.begin(), ordered.end(), id) == ordered.end()) {
      throw Error(ErrorCode::kInvalidParam, id + " is not an activation");
    }
  }
  if (first == second)
    throw Error(ErrorCode::kInvalidParam, "probe needs two distinct activations");

  auto run = [&](bool drop_first, bool drop_second) {
    CheckpointPlan plan = CheckpointPlan::AllSaved(acts);
    if (drop_first) plan.decisions[first] = 0;
    if (drop_second) plan.decisions[second] = 0;
    return EvaluatePlan(tg, plan, hda, mapping, fusion).schedule;
  };
  NonadditivityReport r;
  r.first = first;
  r.second = second;
  const ScheduleResult base = run(false, false);
  r.base_latency = static_cast<double>(base.latency_cycles);
  r.base_energy = base.energy.total();
  const ScheduleResult variants[3] = {run(true, false), run(false, true), run(true, true)};
  for (int k = 0; k < 3; ++k) {
    r.delta_latency[k] = static_cast<double>(variants[k].latency_cycles) - r.base_latency;
    r.delta_energy[k] = variants[k].energy.total() - r.base_energy;
  }
  return r;
}

}  // namespace hdatrain
