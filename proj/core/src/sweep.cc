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
#include "hdatrain/sweep.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <thread>

#include "hdatrain/error.h"
#include "json_util.h"

namespace hdatrain {

namespace {

struct TemplateAxes {
  std::vector<std::string> names;
  std::vector<std::vector<double>> published;
  std::vector<double> defaults;
};

const TemplateAxes& AxesFor(const std::string& hardware) {
  static const TemplateAxes kEdgeTpu{{"xPEs", "yPEs", "U", "L", "local_mem_MB", "rf_KB"},
                                     {{1, 2, 4, 6, 8},
                                      {1, 2, 4, 6, 8},
                                      {16, 32, 64, 128},
                                      {1, 2, 4, 8},
                                      {0.5, 1, 2, 3, 4},
                                      {8, 16, 32, 64, 128}},
                                     {4, 4, 64, 4, 2, 64}};
  static const TemplateAxes kFuseMax{
      {"xPEs", "yPEs", "vector_PEs", "buffer_bw", "buffer_MB", "offchip_bw"},
      {{64, 128, 256, 512},
       {64, 128, 256, 512},
       {32, 64, 128, 256},
       {8192, 16384},
       {4, 8, 16, 32},
       {512, 1024, 2048, 4096, 8192}},
      {256, 256, 128, 16384, 16, 4096}};
  if (hardware == "edge-tpu") return kEdgeTpu;
  if (hardware == "fusemax") return kFuseMax;
  throw Error(ErrorCode::kInvalidParam, "no sweep axes for hardware '" + hardware + "'");
}

SweepGrid MakeGrid(const std::string& hardware, std::vector<std::vector<double>> values) {
  const auto& t = AxesFor(hardware);
  SweepGrid grid;
  grid.hardware = hardware;
  for (size_t i = 0; i < t.names.size(); ++i) grid.axes.push_back({t.names[i], values[i]});
  return grid;
}

std::string FormatNumber(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

int64_t IntegralAxis(double v, const std::string& name) {
  if (v < 1 || v != std::floor(v)) {
    throw Error(ErrorCode::kInvalidParam,
                name + " must be a positive integer, got " + FormatNumber(v));
  }
  return static_cast<int64_t>(v);
}

}  // namespace

size_t SweepGrid::size() const {
  size_t n = axes.empty() ? 0 : 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::vector<std::vector<double>> SweepGrid::Points() const {
  std::vector<std::vector<double>> out;
  if (size() == 0) return out;
  std::vector<size_t> idx(axes.size(), 0);
  while (true) {
    std::vector<double> p;
    for (size_t i = 0; i < axes.size(); ++i) p.push_back(axes[i].values[idx[i]]);
    out.push_back(std::move(p));
    size_t k = axes.size();
    while (k > 0) {
      --k;
      if (++idx[k] < axes[k].values.size()) break;
      idx[k] = 0;
      if (k == 0) return out;
    }
  }
}

std::vector<std::string> SweepGrid::Extensions() const {
  const auto& t = AxesFor(hardware);
  std::vector<std::string> out;
  for (size_t i = 0; i < axes.size(); ++i) {
    for (double v : axes[i].values) {
      const auto& pub = t.published[i];
      if (std::find(pub.begin(), pub.end(), v) == pub.end()) {
        out.push_back(axes[i].name + "=" + FormatNumber(v));
      }
    }
  }
  return out;
}

std::vector<std::string> GridColumns(const std::string& hardware) {
  return AxesFor(hardware).names;
}

bool IsBuiltinGrid(const std::string& name) {
  return name == "table1-sub" || name == "table1-full" || name == "table2-sub" ||
         name == "table2-full";
}

SweepGrid BuiltinGrid(const std::string& name) {
  if (name == "table1-full") return MakeGrid("edge-tpu", AxesFor("edge-tpu").published);
  if (name == "table2-full") return MakeGrid("fusemax", AxesFor("fusemax").published);
  if (name == "table1-sub") {
    return MakeGrid("edge-tpu", {{1, 2, 4, 8}, {1, 2, 4, 8}, {16, 64}, {1, 4}, {2}, {64}});
  }
  if (name == "table2-sub") {
    return MakeGrid("fusemax",
                    {{64, 256}, {64, 256}, {32, 128}, {8192, 16384}, {4, 16}, {512, 4096}});
  }
  throw Error(ErrorCode::kInvalidParam, "unknown grid '" + name + "'");
}

SweepGrid ImportGrid(const std::string& text) {
  using namespace json_util;
  const json doc = Parse(text);
  CheckKeys(doc, "grid", {"hardware", "axes"});
  const std::string hw = GetString(doc, "hardware", "grid");
  if (hw != "edge-tpu" && hw != "fusemax") Schema("grid", "unknown hardware \"" + hw + "\"");
  const auto& t = AxesFor(hw);
  const json& axes = doc.at("axes");
  if (!axes.is_object()) Schema("grid.axes", "expected an object");
  std::vector<std::vector<double>> values;
  for (size_t i = 0; i < t.names.size(); ++i) {
    if (!axes.contains(t.names[i])) {
      values.push_back({t.defaults[i]});
      continue;
    }
    const json& list = axes.at(t.names[i]);
    const std::string where = "grid.axes." + t.names[i];
    if (!list.is_array() || list.empty()) Schema(where, "expected a non-empty list");
    std::vector<double> vs;
    for (const auto& v : list) vs.push_back(AsDouble(v, where, t.names[i]));
    values.push_back(std::move(vs));
  }
  for (auto it = axes.begin(); it != axes.end(); ++it) {
    if (std::find(t.names.begin(), t.names.end(), it.key()) == t.names.end()) {
      Schema("grid.axes", "unknown axis \"" + it.key() + "\"");
    }
  }
  return MakeGrid(hw, std::move(values));
}

SweepGrid LoadGridFile(const std::string& path) { return ImportGrid(json_util::ReadFile(path)); }

HdaSpec HdaForPoint(const std::string& hardware, const std::vector<double>& point) {
  const auto& t = AxesFor(hardware);
  if (point.size() != t.names.size()) {
    throw Error(ErrorCode::kInvalidParam, "point has the wrong number of coordinates");
  }
  if (hardware == "edge-tpu") {
    EdgeTpuParams p;
    p.x_pes = IntegralAxis(point[0], t.names[0]);
    p.y_pes = IntegralAxis(point[1], t.names[1]);
    p.simd_units = IntegralAxis(point[2], t.names[2]);
    p.lanes = IntegralAxis(point[3], t.names[3]);
    p.local_mem_mb = point[4];
    p.rf_kb = IntegralAxis(point[5], t.names[5]);
    return EdgeTpuConfig(p);
  }
  FuseMaxParams p;
  p.x_pes = IntegralAxis(point[0], t.names[0]);
  p.y_pes = IntegralAxis(point[1], t.names[1]);
  p.vector_pes = IntegralAxis(point[2], t.names[2]);
  p.buffer_bw = point[3];
  p.buffer_mb = IntegralAxis(point[4], t.names[4]);
  p.offchip_bw = point[5];
  return FuseMaxConfig(p);
}

SweepMode ParseSweepMode(const std::string& text) {
  if (text == "inference") return SweepMode::kInference;
  if (text == "training") return SweepMode::kTraining;
  if (text == "both") return SweepMode::kBoth;
  throw Error(ErrorCode::kInvalidParam, "mode must be inference, training or both");
}

std::vector<SweepRow> RunSweep(const ComputationGraph& forward, const SweepGrid& grid,
                               const SweepOptions& options) {
  const bool inference = options.mode != SweepMode::kTraining;
  const bool training = options.mode != SweepMode::kInference;
  std::optional<TrainingGraph> tg;
  if (training) tg = BuildTrainingGraph(forward, options.loss, options.optimizer);

  const auto points = grid.Points();
  std::vector<SweepRow> rows(points.size());
  auto run = [&](size_t i) {
    SweepRow& row = rows[i];
    row.point = points[i];
    try {
      const HdaSpec hda = HdaForPoint(grid.hardware, points[i]);
      const MappingConfig mapping = options.mapping ? *options.mapping : MappingConfig::Auto(hda);
      if (inference) {
        const Evaluation ev = Evaluate(forward, hda, mapping, options.fusion);
        row.f_latency = ev.schedule.latency_cycles;
        row.f_energy = ev.schedule.energy.total();
        row.peak_mem_bytes = ev.schedule.peak_activation_memory;
        row.fused_subgraph_count = ev.schedule.subgraph_count;
      }
      if (training) {
        const Evaluation ev = Evaluate(tg->graph, hda, mapping, options.fusion);
        row.fb_latency = ev.schedule.latency_cycles;
        row.fb_energy = ev.schedule.energy.total();
        row.peak_mem_bytes = ev.schedule.peak_activation_memory;
        row.fused_subgraph_count = ev.schedule.subgraph_count;
      }
    } catch (const Error& e) {
      row = SweepRow{};
      row.point = points[i];
      row.status = "failed";
      row.reason = e.what();
    }
  };
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < points.size(); i = next++) run(i);
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(points.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return rows;
}

std::string SweepCsv(const SweepGrid& grid, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  for (const auto& a : grid.axes) os << a.name << ',';
  os << "f_latency_cycles,f_energy_pJ,fb_latency_cycles,fb_energy_pJ,peak_mem_bytes,"
        "fused_subgraph_count,status,reason\n";
  auto opt = [](const auto& v) { return v ? FormatNumber(static_cast<double>(*v)) : ""; };
  for (const auto& r : rows) {
    for (double v : r.point) os << FormatNumber(v) << ',';
    std::string reason = r.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    std::replace(reason.begin(), reason.end(), '\n', ' ');
    const bool ok = r.status == "ok";
    os << opt(r.f_latency) << ',' << opt(r.f_energy) << ',' << opt(r.fb_latency) << ','
       << opt(r.fb_energy) << ',' << (ok ? std::to_string(r.peak_mem_bytes) : "") << ','
       << (ok ? std::to_string(r.fused_subgraph_count) : "") << ',' << r.status << ',' << reason
       << '\n';
  }
  return os.str();
}

int CsvTable::Column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable ParseCsv(const std::string& text) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error(ErrorCode::kParseError, "csv line " + std::to_string(lineno) + ": expected " +
                                              std::to_string(t.header.size()) + " cells, got " +
                                              std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw Error(ErrorCode::kParseError, "csv has no header");
  return t;
}

namespace {

std::optional<double> Number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string Fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// Blue at 0, red at 1.
std::string Ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(40 + 200 * t)),
                static_cast<int>(std::lround(70 + 40 * (1 - std::abs(2 * t - 1)))),
                static_cast<int>(std::lround(240 - 200 * t)));
  return buf;
}

}  // namespace

std::string ScatterSvg(const CsvTable& table, const ScatterSpec& spec) {
  const int xi = table.Column(spec.x), yi = table.Column(spec.y);
  const int ci = spec.color.empty() ? -1 : table.Column(spec.color);
  if (xi < 0) throw Error(ErrorCode::kInvalidParam, "no column '" + spec.x + "'");
  if (yi < 0) throw Error(ErrorCode::kInvalidParam, "no column '" + spec.y + "'");
  if (!spec.color.empty() && ci < 0) {
    throw Error(ErrorCode::kInvalidParam, "no column '" + spec.color + "'");
  }
  struct Pt {
    double x, y;
    std::optional<double> c;
  };
  std::vector<Pt> pts;
  for (const auto& row : table.rows) {
    auto x = Number(row[xi]), y = Number(row[yi]);
    if (!x || !y || *x <= 0 || *y <= 0) continue;
    pts.push_back({std::log10(*x), std::log10(*y), ci >= 0 ? Number(row[ci]) : std::nullopt});
  }

  const double w = 640, h = 480, left = 80, right = 30, top = 40, bottom = 60;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1, c0 = 0, c1 = 0;
  bool have_c = false;
  if (!pts.empty()) {
    x0 = x1 = pts[0].x;
    y0 = y1 = pts[0].y;
    for (const auto& p : pts) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
      if (p.c) {
        c0 = have_c ? std::min(c0, *p.c) : *p.c;
        c1 = have_c ? std::max(c1, *p.c) : *p.c;
        have_c = true;
      }
    }
  }
  auto widen = [](double& lo, double& hi) {
    const double pad = hi > lo ? 0.05 * (hi - lo) : 0.5;
    lo -= pad;
    hi += pad;
  };
  widen(x0, x1);
  widen(y0, y1);
  auto sx = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
  auto sy = [&](double v) { return h - bottom - (v - y0) / (y1 - y0) * (h - top - bottom); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right
     << "\" height=\"" << h - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (!spec.title.empty()) {
    os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << Escape(spec.title) << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(x0)); d <= static_cast<int>(std::floor(x1)); ++d) {
    os << "<line x1=\"" << Fixed(sx(d)) << "\" y1=\"" << h - bottom << "\" x2=\"" << Fixed(sx(d))
       << "\" y2=\"" << h - bottom + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << Fixed(sx(d)) << "\" y=\"" << h - bottom + 18
       << "\" text-anchor=\"middle\">1e" << d << "</text>\n";
  }
  for (int d = static_cast<int>(std::ceil(y0)); d <= static_cast<int>(std::floor(y1)); ++d) {
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << Fixed(sy(d)) << "\" x2=\"" << left
       << "\" y2=\"" << Fixed(sy(d)) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << Fixed(sy(d) + 4) << "\" text-anchor=\"end\">1e"
       << d << "</text>\n";
  }
  os << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 15
     << "\" text-anchor=\"middle\">" << Escape(spec.x) << " (log)</text>\n";
  os << "<text x=\"20\" y=\"" << (top + h - bottom) / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << (top + h - bottom) / 2 << ")\">"
     << Escape(spec.y) << " (log)</text>\n";
  for (const auto& p : pts) {
    const std::string fill =
        p.c && c1 > c0 ? Ramp((*p.c - c0) / (c1 - c0)) : (p.c ? Ramp(0.5) : std::string("#3060c0"));
    os << "<circle cx=\"" << Fixed(sx(p.x)) << "\" cy=\"" << Fixed(sy(p.y)) << "\" r=\"3\" fill=\""
       << fill << "\" fill-opacity=\"0.8\"/>\n";
  }
  if (have_c) {
    os << "<text x=\"" << w - right << "\" y=\"" << top - 6 << "\" text-anchor=\"end\">"
       << Escape(spec.color) << ": " << Fixed(c0, 2) << " (blue) to " << Fixed(c1, 2)
       << " (red)</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace hdatrain
