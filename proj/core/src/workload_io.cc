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

#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include "hdatrain/workloads.h"
#include "json_util.h"

namespace hdatrain {
namespace {

using namespace json_util;

int64_t GetInt(const json& v, const std::string& where, const std::string& key) {
  return AsInt(v, where, key);
}

TensorEdge ParseEdge(const json& obj, size_t index) {
  std::string where = "edges[" + std::to_string(index) + "]";
  CheckKeys(obj, where, {"id", "shape", "element_bytes", "kind"});
  TensorEdge edge;
  edge.id = GetString(obj, "id", where);
  where += " (" + edge.id + ")";
  const json& shape = obj.at("shape");
  if (!shape.is_array()) Schema(where, "\"shape\" must be a list of integers");
  for (const auto& d : shape) edge.shape.push_back(GetInt(d, where, "shape"));
  edge.element_bytes = static_cast<int>(GetInt(obj.at("element_bytes"), where, "element_bytes"));
  auto kind = ParseEdgeKind(GetString(obj, "kind", where));
  if (!kind) Schema(where, "unknown edge kind");
  edge.kind = *kind;
  return edge;
}

AttrValue ParseAttr(const json& v, const std::string& where) {
  if (v.is_number_integer()) return v.get<int64_t>();
  if (v.is_number_float()) return v.get<double>();
  if (v.is_array()) {
    std::vector<int64_t> out;
    for (const auto& item : v) out.push_back(GetInt(item, where, "attrs"));
    return out;
  }
  Schema(where, "attribute values must be numbers or integer lists");
}

OperatorNode ParseNode(const json& obj, size_t index) {
  std::string where = "nodes[" + std::to_string(index) + "]";
  CheckKeys(obj, where, {"id", "kind", "inputs", "outputs", "loop_dims", "phase"}, {"attrs"});
  OperatorNode node;
  node.id = GetString(obj, "id", where);
  where += " (" + node.id + ")";
  auto kind = ParseOpKind(GetString(obj, "kind", where));
  if (!kind) Schema(where, "unknown operator kind");
  node.kind = *kind;
  auto phase = ParsePhase(GetString(obj, "phase", where));
  if (!phase) Schema(where, "unknown phase");
  node.phase = *phase;
  node.inputs = GetStrings(obj, "inputs", where);
  node.outputs = GetStrings(obj, "outputs", where);
  const json& dims = obj.at("loop_dims");
  if (!dims.is_array()) Schema(where, "\"loop_dims\" must be a list of [name, extent]");
  for (const auto& d : dims) {
    if (!d.is_array() || d.size() != 2 || !d[0].is_string()) {
      Schema(where, "\"loop_dims\" entries must be [name, extent]");
    }
    node.loop_dims.push_back({d[0].get<std::string>(), GetInt(d[1], where, "loop_dims")});
  }
  if (obj.contains("attrs")) {
    const json& attrs = obj.at("attrs");
    if (!attrs.is_object()) Schema(where, "\"attrs\" must be an object");
    for (auto it = attrs.begin(); it != attrs.end(); ++it) {
      node.attrs[it.key()] = ParseAttr(it.value(), where);
    }
  }
  return node;
}

json AttrToJson(const AttrValue& v) {
  if (const auto* i = std::get_if<int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::vector<int64_t>>(v);
}

}  // namespace

ComputationGraph ImportWorkloadString(const std::string& text) {
  json doc = Parse(text);
  CheckKeys(doc, "workload", {"nodes", "edges", "graph_inputs", "graph_outputs"});
  if (!doc["edges"].is_array()) Schema("workload", "\"edges\" must be a list");
  if (!doc["nodes"].is_array()) Schema("workload", "\"nodes\" must be a list");

  ComputationGraph g;
  for (size_t i = 0; i < doc["edges"].size(); ++i) {
    g.AddEdge(ParseEdge(doc["edges"][i], i));
  }
  for (size_t i = 0; i < doc["nodes"].size(); ++i) {
    g.AddNode(ParseNode(doc["nodes"][i], i));
  }
  for (const auto& id : GetStrings(doc, "graph_inputs", "workload")) g.AddGraphInput(id);
  for (const auto& id : GetStrings(doc, "graph_outputs", "workload")) g.AddGraphOutput(id);

  auto diags = ValidateGraph(g);
  if (!diags.empty()) {
    std::string msg;
    for (const auto& d : diags) {
      if (!msg.empty()) msg += "; ";
      msg += std::string(ToString(d.kind)) + "(" + d.subject + ")";
    }
    throw Error(ErrorCode::kGraphInvalid, msg);
  }
  return g;
}

ComputationGraph ImportWorkload(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ImportWorkloadString(text);
}

ComputationGraph LoadWorkloadFile(const std::string& path) {
  return ImportWorkloadString(ReadFile(path));
}

std::string ExportWorkload(const ComputationGraph& graph) {
  json doc;
  json nodes = json::array();
  for (const auto& [id, node] : graph.nodes()) {
    json dims = json::array();
    for (const auto& d : node.loop_dims) dims.push_back(json::array({d.name, d.extent}));
    json attrs = json::object();
    for (const auto& [name, value] : node.attrs) attrs[name] = AttrToJson(value);
    nodes.push_back({{"id", id},
                     {"kind", std::string(ToString(node.kind))},
                     {"inputs", node.inputs},
                     {"outputs", node.outputs},
                     {"loop_dims", dims},
                     {"attrs", attrs},
                     {"phase", std::string(ToString(node.phase))}});
  }
  json edges = json::array();
  for (const auto& [id, edge] : graph.edges()) {
    edges.push_back({{"id", id},
                     {"shape", edge.shape},
                     {"element_bytes", edge.element_bytes},
                     {"kind", std::string(ToString(edge.kind))}});
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  doc["graph_inputs"] = graph.graph_inputs();
  doc["graph_outputs"] = graph.graph_outputs();
  return doc.dump(1) + "\n";
}

void SaveWorkloadFile(const ComputationGraph& graph, const std::string& path) {
  WriteFile(path, ExportWorkload(graph));
}

}  // namespace hdatrain
