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
#include "hdatrain/moo.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "hdatrain/error.h"

namespace hdatrain {

bool Dominates(const Objectives& a, const Objectives& b) {
  bool strictly = false;
  for (size_t k = 0; k < a.size(); ++k) {
    if (a[k] > b[k]) return false;
    strictly = strictly || a[k] < b[k];
  }
  return strictly;
}

std::vector<std::vector<int>> FastNondominatedSort(const std::vector<Objectives>& objs) {
  const int n = static_cast<int>(objs.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> count(n, 0);
  std::vector<std::vector<int>> fronts;
  std::vector<int> current;
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      if (p == q) continue;
      if (Dominates(objs[p], objs[q])) {
        dominated[p].push_back(q);
      } else if (Dominates(objs[q], objs[p])) {
        ++count[p];
      }
    }
    if (count[p] == 0) current.push_back(p);
  }
  while (!current.empty()) {
    std::vector<int> next;
    for (int p : current) {
      for (int q : dominated[p]) {
        if (--count[q] == 0) next.push_back(q);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(current));
    current = std::move(next);
  }
  return fronts;
}

std::vector<double> CrowdingDistance(const std::vector<Objectives>& objs,
                                     const std::vector<int>& front) {
  const size_t m = front.size();
  std::vector<double> dist(m, 0.0);
  if (m <= 2) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    return dist;
  }
  std::vector<size_t> order(m);
  for (size_t k = 0; k < objs[front[0]].size(); ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return objs[front[a]][k] < objs[front[b]][k]; });
    const double lo = objs[front[order.front()]][k];
    const double hi = objs[front[order.back()]][k];
    dist[order.front()] = dist[order.back()] = std::numeric_limits<double>::infinity();
    if (hi <= lo) continue;
    for (size_t i = 1; i + 1 < m; ++i) {
      dist[order[i]] += (objs[front[order[i + 1]]][k] - objs[front[order[i - 1]]][k]) / (hi - lo);
    }
  }
  return dist;
}

namespace {

// Area dominated in the (y, z) plane.
double Area2d(std::vector<std::pair<double, double>> pts, double ry, double rz) {
  std::sort(pts.begin(), pts.end());
  double area = 0, best_z = rz;
  for (size_t i = 0; i < pts.size(); ++i) {
    best_z = std::min(best_z, pts[i].second);
    const double next_y = i + 1 < pts.size() ? pts[i + 1].first : ry;
    area += (next_y - pts[i].first) * (rz - best_z);
  }
  return area;
}

}  // namespace

double Hypervolume(std::vector<Objectives> points, const Objectives& ref) {
  std::erase_if(points, [&](const Objectives& p) {
    return !(p[0] < ref[0] && p[1] < ref[1] && p[2] < ref[2]);
  });
  std::sort(points.begin(), points.end());
  double volume = 0;
  std::vector<std::pair<double, double>> slice;
  for (size_t i = 0; i < points.size(); ++i) {
    slice.emplace_back(points[i][1], points[i][2]);
    const double next_x = i + 1 < points.size() ? points[i + 1][0] : ref[0];
    if (next_x > points[i][0]) volume += (next_x - points[i][0]) * Area2d(slice, ref[1], ref[2]);
  }
  return volume;
}

std::string GenomeHex(const Genome& genome) {
  static const char* kDigits = "0123456789abcdef";
  std::string out((genome.size() + 3) / 4, '0');
  for (size_t i = 0; i < genome.size(); ++i) {
    if (!genome[i]) continue;
    const int v = (out[i / 4] <= '9' ? out[i / 4] - '0' : out[i / 4] - 'a' + 10) | (1 << (i % 4));
    out[i / 4] = kDigits[v];
  }
  return out;
}

Genome GenomeFromHex(const std::string& hex, size_t bits) {
  if (hex.size() != (bits + 3) / 4) {
    throw Error(ErrorCode::kInvalidParam, "genome hex has the wrong length");
  }
  Genome g(bits, 0);
  for (size_t i = 0; i < bits; ++i) {
    const char c = hex[i / 4];
    int v;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else {
      throw Error(ErrorCode::kInvalidParam, "bad hex digit in genome");
    }
    g[i] = (v >> (i % 4)) & 1;
  }
  return g;
}

namespace {

class Engine {
 public:
  Engine(size_t bits, const ObjectiveFn& objective, const GaParams& params)
      : bits_(bits), objective_(objective), params_(params), rng_(params.seed) {
    mutation_ = params.mutation >= 0 ? params.mutation : 1.0 / static_cast<double>(bits);
  }

  GaResult Run(const std::vector<Genome>& seeds) {
    std::vector<Genome> genomes;
    for (const auto& s : seeds) {
      if (static_cast<int>(genomes.size()) < params_.population) genomes.push_back(s);
    }
    std::bernoulli_distribution coin(0.5);
    while (static_cast<int>(genomes.size()) < params_.population) {
      Genome g(bits_);
      for (auto& b : g) b = coin(rng_);
      genomes.push_back(std::move(g));
    }
    std::vector<Individual> pop = Materialize(genomes);
    Rank(pop);
    for (int i = 0; i < 3; ++i) {
      double worst = 0;
      for (const auto& ind : pop) worst = std::max(worst, ind.objectives[i]);
      result_.reference[i] = worst > 0 ? worst * 1.1 : 1.0;
    }
    Record(0, pop);

    for (int gen = 1; gen <= params_.generations; ++gen) {
      std::vector<Genome> children;
      while (static_cast<int>(children.size()) < params_.population) {
        Genome a = pop[Tournament(pop)].genome;
        Genome b = pop[Tournament(pop)].genome;
        if (std::bernoulli_distribution(params_.crossover)(rng_)) {
          for (size_t i = 0; i < bits_; ++i) {
            if (coin(rng_)) std::swap(a[i], b[i]);
          }
        }
        Mutate(a);
        Mutate(b);
        children.push_back(std::move(a));
        children.push_back(std::move(b));
      }
      std::vector<Individual> merged = pop;
      for (auto& c : Materialize(children)) merged.push_back(std::move(c));
      pop = Select(std::move(merged));
      Record(gen, pop);
    }
    result_.evaluations = memo_.size();
    return std::move(result_);
  }

 private:
  void Mutate(Genome& g) {
    std::bernoulli_distribution flip(mutation_);
    for (auto& b : g) {
      if (flip(rng_)) b ^= 1;
    }
  }

  size_t Tournament(const std::vector<Individual>& pop) {
    std::uniform_int_distribution<size_t> pick(0, pop.size() - 1);
    const size_t a = pick(rng_), b = pick(rng_);
    return Better(pop[b], pop[a]) ? b : a;
  }

  static bool Better(const Individual& a, const Individual& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.crowding > b.crowding;
  }

  // Evaluates unseen genomes (in parallel when jobs > 1) and builds individuals.
  std::vector<Individual> Materialize(const std::vector<Genome>& genomes) {
    std::vector<Genome> todo;
    for (const auto& g : genomes) {
      if (!memo_.count(g) && std::find(todo.begin(), todo.end(), g) == todo.end()) {
        todo.push_back(g);
      }
    }
    std::vector<Objectives> values(todo.size());
    std::vector<std::exception_ptr> errors(todo.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t i = next++; i < todo.size(); i = next++) {
        try {
          values[i] = objective_(todo[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const int jobs = std::max(1, std::min<int>(params_.jobs, static_cast<int>(todo.size())));
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (size_t i = 0; i < todo.size(); ++i) {
      memo_.emplace(todo[i], values[i]);
      UpdateArchive(todo[i], values[i]);
    }
    std::vector<Individual> out;
    for (const auto& g : genomes) {
      Individual ind;
      ind.genome = g;
      ind.objectives = memo_.at(g);
      out.push_back(std::move(ind));
    }
    return out;
  }

  void UpdateArchive(const Genome& g, const Objectives& obj) {
    auto& arch = result_.archive;
    for (const auto& a : arch) {
      if (Dominates(a.objectives, obj) || a.objectives == obj) return;
    }
    std::erase_if(arch, [&](const Individual& a) { return Dominates(obj, a.objectives); });
    Individual ind;
    ind.genome = g;
    ind.objectives = obj;
    arch.push_back(std::move(ind));
  }

  static std::vector<Objectives> ObjectivesOf(const std::vector<Individual>& pop) {
    std::vector<Objectives> objs;
    for (const auto& p : pop) objs.push_back(p.objectives);
    return objs;
  }

  static void Rank(std::vector<Individual>& pop) {
    const auto objs = ObjectivesOf(pop);
    const auto fronts = FastNondominatedSort(objs);
    for (size_t r = 0; r < fronts.size(); ++r) {
      const auto dist = CrowdingDistance(objs, fronts[r]);
      for (size_t i = 0; i < fronts[r].size(); ++i) {
        pop[fronts[r][i]].rank = static_cast<int>(r);
        pop[fronts[r][i]].crowding = dist[i];
      }
    }
  }

  std::vector<Individual> Select(std::vector<Individual> merged) {
    const auto objs = ObjectivesOf(merged);
    const auto fronts = FastNondominatedSort(objs);
    std::vector<Individual> next;
    for (const auto& front : fronts) {
      if (next.size() == static_cast<size_t>(params_.population)) break;
      std::vector<size_t> order(front.size());
      std::iota(order.begin(), order.end(), 0);
      if (next.size() + front.size() > static_cast<size_t>(params_.population)) {
        const auto dist = CrowdingDistance(objs, front);
        std::stable_sort(order.begin(), order.end(),
                         [&](size_t a, size_t b) { return dist[a] > dist[b]; });
        order.resize(params_.population - next.size());
      }
      for (size_t i : order) next.push_back(merged[front[i]]);
    }
    Rank(next);
    return next;
  }

  void Record(int gen, const std::vector<Individual>& pop) {
    GaSnapshot snap;
    snap.generation = gen;
    snap.population = pop;
    Rank(result_.archive);
    snap.hypervolume = Hypervolume(ObjectivesOf(result_.archive), result_.reference);
    if (params_.on_generation) params_.on_generation(snap);
    result_.snapshots.push_back(std::move(snap));
  }

  size_t bits_;
  const ObjectiveFn& objective_;
  const GaParams& params_;
  std::mt19937_64 rng_;
  double mutation_ = 0;
  std::map<Genome, Objectives> memo_;
  GaResult result_;
};

}  // namespace

GaResult Nsga2(size_t bits, const std::vector<Genome>& seeds, const ObjectiveFn& objective,
               const GaParams& params) {
  if (bits == 0) throw Error(ErrorCode::kInvalidParam, "genome must have at least one bit");
  if (params.population < 4 || params.population % 2 != 0) {
    throw Error(ErrorCode::kInvalidParam, "population must be even and >= 4");
  }
  if (params.generations < 0) throw Error(ErrorCode::kInvalidParam, "generations must be >= 0");
  if (params.crossover < 0 || params.crossover > 1 || params.mutation > 1) {
    throw Error(ErrorCode::kInvalidParam, "probabilities must be in [0, 1]");
  }
  for (const auto& s : seeds) {
    if (s.size() != bits) throw Error(ErrorCode::kInvalidParam, "seed genome has the wrong length");
  }
  return Engine(bits, objective, params).Run(seeds);
}

CheckpointPlan CheckpointSearch::PlanFor(const Genome& genome) const {
  CheckpointPlan plan;
  for (size_t i = 0; i < activations.size(); ++i) {
    plan.decisions[activations[i].edge] = genome.at(i) ? 1 : 0;
  }
  return plan;
}

CheckpointSearch Nsga2CheckpointSearch(const TrainingGraph& tg, const HdaSpec& hda,
                                       const MappingConfig& mapping, const FusionSetting& fusion,
                                       const GaParams& params) {
  CheckpointSearch search;
  search.activations = ActivationSet(tg);
  const size_t n = search.activations.size();
  if (n == 0) throw Error(ErrorCode::kInvalidParam, "training graph has no activations");
  auto objective = [&](const Genome& genome) {
    const Evaluation ev = EvaluatePlan(tg, search.PlanFor(genome), hda, mapping, fusion);
    double saved = 0;
    for (size_t i = 0; i < n; ++i) {
      if (genome[i]) saved += static_cast<double>(search.activations[i].bytes);
    }
    return Objectives{static_cast<double>(ev.schedule.latency_cycles), ev.schedule.energy.total(),
                      saved};
  };
  search.result = Nsga2(n, {Genome(n, 1), Genome(n, 0)}, objective, params);
  return search;
}

std::string SnapshotCsvHeader() {
  return "generation,genome_hex,latency,energy,saved_bytes,rank\n";
}

std::string SnapshotCsvRows(const GaSnapshot& snapshot) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& ind : snapshot.population) {
    os << snapshot.generation << ',' << GenomeHex(ind.genome) << ',' << ind.objectives[0] << ','
       << ind.objectives[1] << ',' << ind.objectives[2] << ',' << ind.rank << '\n';
  }
  return os.str();
}

}  // namespace hdatrain
