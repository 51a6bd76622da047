#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "episode.hpp"
#include "trainers.hpp"

namespace pursuit::hola {

using rl::PolicyRef;

// -- hypergraphs ----------------------------------------------------------------------

struct Hyperedge {
  std::vector<int> members;  // node indices, one per pursuer slot
  double weight = 0.0;
};

struct Hypergraph {
  std::vector<std::string> nodes;
  std::vector<Hyperedge> edges;

  int size() const { return static_cast<int>(nodes.size()); }

  bool contains(const Hyperedge& e, int node) const {
    return std::find(e.members.begin(), e.members.end(), node) != e.members.end();
  }

  /// Number of hyperedges containing the node.
  int degree(int node) const {
    int d = 0;
    for (const auto& e : edges) d += contains(e, node);
    return d;
  }
};

/// Each node's single outgoing hyperedge (index into the parent graph's edges).
struct PreferenceHypergraph {
  std::vector<int> outgoing;
};

class GraphError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::vector<int> sorted_members(const Hyperedge& e) {
  auto m = e.members;
  std::sort(m.begin(), m.end());
  return m;
}

/// Keeps, for every node, its maximum-weight incident hyperedge; ties go to the
/// lexicographically smallest sorted member tuple.
inline PreferenceHypergraph build_preference_hypergraph(const Hypergraph& g) {
  PreferenceHypergraph pg;
  pg.outgoing.assign(g.size(), -1);
  for (int v = 0; v < g.size(); ++v) {
    for (int k = 0; k < static_cast<int>(g.edges.size()); ++k) {
      const auto& e = g.edges[k];
      if (!g.contains(e, v)) continue;
      const int cur = pg.outgoing[v];
      if (cur < 0 || e.weight > g.edges[cur].weight ||
          (e.weight == g.edges[cur].weight && sorted_members(e) < sorted_members(g.edges[cur])))
        pg.outgoing[v] = k;
    }
    if (pg.outgoing[v] < 0) throw GraphError("node '" + g.nodes[v] + "' has no incident hyperedge");
  }
  return pg;
}

/// Number of other nodes whose outgoing edge contains `node`.
inline int incoming_degree(const PreferenceHypergraph& pg, const Hypergraph& g, int node) {
  int incoming = 0;
  for (int v = 0; v < g.size(); ++v)
    if (v != node && pg.outgoing[v] >= 0 && g.contains(g.edges[pg.outgoing[v]], node)) ++incoming;
  return incoming;
}

/// Incoming preference degree divided by the node's degree in g.
inline double preference_centrality(const PreferenceHypergraph& pg, const Hypergraph& g, int node) {
  const int d = g.degree(node);
  if (d == 0) throw GraphError("node '" + g.nodes.at(node) + "' has zero degree");
  return double(incoming_degree(pg, g, node)) / double(d);
}

inline std::vector<double> preference_centralities(const PreferenceHypergraph& pg, const Hypergraph& g) {
  std::vector<double> eta(g.size());
  for (int v = 0; v < g.size(); ++v) eta[v] = preference_centrality(pg, g, v);
  return eta;
}

/// All size-m combinations of {0..n-1} in lexicographic order.
inline std::vector<std::vector<int>> combinations(int n, int m) {
  std::vector<std::vector<int>> out;
  if (m < 0 || m > n) return out;
  std::vector<int> c(m);
  std::iota(c.begin(), c.end(), 0);
  while (true) {
    out.push_back(c);
    int i = m - 1;
    while (i >= 0 && c[i] == n - m + i) --i;
    if (i < 0) break;
    ++c[i];
    for (int j = i + 1; j < m; ++j) c[j] = c[j - 1] + 1;
  }
  return out;
}

// -- mixed strategies -----------------------------------------------------------------

struct MixedStrategy {
  std::vector<std::vector<int>> support;  // subsets of non-learner pool indices
  std::vector<double> probabilities;

  /// Index into support drawn by inverse CDF.
  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
      acc += probabilities[i];
      if (u < acc) return i;
    }
    return probabilities.size() - 1;
  }
};

enum class SubsetScore { mean, min, product };

inline SubsetScore subset_score_from_string(const std::string& s) {
  if (s == "mean") return SubsetScore::mean;
  if (s == "min") return SubsetScore::min;
  if (s == "product") return SubsetScore::product;
  throw std::invalid_argument("unknown subset score '" + s + "'");
}

inline double subset_score(const std::vector<int>& subset, const std::vector<double>& eta, SubsetScore how) {
  switch (how) {
    case SubsetScore::min: {
      double v = eta.at(subset.front());
      for (int i : subset) v = std::min(v, eta.at(i));
      return v;
    }
    case SubsetScore::product: {
      double v = 1.0;
      for (int i : subset) v *= eta.at(i);
      return v;
    }
    case SubsetScore::mean:
    default: {
      double v = 0.0;
      for (int i : subset) v += eta.at(i);
      return v / double(subset.size());
    }
  }
}

/// Probability of each subset proportional to 1 / (score + eps): partners the population
/// prefers least are drawn most.
inline MixedStrategy min_step_solve(const std::vector<std::vector<int>>& subsets, const std::vector<double>& eta,
                                    double eps = 0.01, SubsetScore how = SubsetScore::mean) {
  if (subsets.empty()) throw GraphError("min-step solver has an empty support");
  MixedStrategy rho{subsets, {}};
  double total = 0.0;
  for (const auto& s : subsets) {
    rho.probabilities.push_back(1.0 / (subset_score(s, eta, how) + eps));
    total += rho.probabilities.back();
  }
  for (auto& p : rho.probabilities) p /= total;
  return rho;
}

inline MixedStrategy uniform_strategy(const std::vector<std::vector<int>>& subsets) {
  if (subsets.empty()) throw GraphError("empty support");
  return {subsets, std::vector<double>(subsets.size(), 1.0 / double(subsets.size()))};
}

// -- edge weights -----------------------------------------------------------------------

/// Memo of hyperedge weights keyed by (team ids, env, seed, episodes).
class EdgeWeightCache {
 public:
  std::optional<double> find(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  void put(const std::string& key, double w) {
    std::lock_guard lock(mu_);
    map_[key] = w;
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return map_.size();
  }

  long episodes_run = 0;

 private:
  mutable std::mutex mu_;
  std::map<std::string, double> map_;
};

inline std::string edge_key(const std::vector<PolicyRef>& team, const std::string& env_name, std::uint64_t seed,
                            int episodes) {
  std::string k;
  for (const auto& r : team) k += r.id + "|";
  return k + env_name + "|" + std::to_string(seed) + "|" + std::to_string(episodes);
}

/// Runs `episodes` evaluation episodes on `jobs` threads; results are ordered by episode.
inline std::vector<rl::EpisodeRecord> run_episodes(const EnvConfig& cfg, const std::vector<PolicyRef>& team,
                                                   std::uint64_t seed, const std::string& stream, int episodes,
                                                   int jobs = 1) {
  std::vector<rl::EpisodeRecord> out(episodes);
  auto work = [&](int worker, int stride) {
    for (int ep = worker; ep < episodes; ep += stride) out[ep] = run_episode(cfg, team, derive_seed(seed, stream, ep));
  };
  jobs = std::max(1, std::min(jobs, episodes));
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(work, w, jobs);
    for (auto& t : pool) t.join();
  }
  return out;
}

/// Mean undiscounted episode return over `episodes` seeded episodes.
inline double estimate_edge_weight(const std::vector<PolicyRef>& team, const EnvConfig& cfg, int episodes,
                                   std::uint64_t seed, EdgeWeightCache* cache = nullptr, int jobs = 1) {
  const std::string key = edge_key(team, cfg.task.task_name, seed, episodes);
  if (cache)
    if (auto w = cache->find(key)) return *w;
  double total = 0.0;
  for (const auto& r : run_episodes(cfg, team, seed, "edge-weight", episodes, jobs)) total += r.ret;
  const double w = total / double(episodes);
  if (cache) {
    cache->put(key, w);
    cache->episodes_run += episodes;
  }
  return w;
}

// -- population state -------------------------------------------------------------------

struct HolaOptions {
  int generations = 5;
  long steps_per_generation = 200'000;
  int edge_episodes = 20;
  double eps = 0.01;
  SubsetScore score = SubsetScore::mean;
  bool use_hypergraph = true;  // false: uniform mixture over teammate subsets
  int jobs = 1;
};

/// Learner nodes are the N slots of one shared trainee; non-learners are frozen or
/// scripted policies. Graph nodes: learners first (0..N-1), then the non-learner pool.
struct PopulationState {
  int generation = 0;
  int num_learners = 2;
  int num_teammates = 2;
  std::vector<PolicyRef> non_learners;
  rl::AgentModel<float> learner;
  std::string learner_id = "learner@g0";
  std::shared_ptr<EdgeWeightCache> cache = std::make_shared<EdgeWeightCache>();

  int population_size() const { return num_learners + static_cast<int>(non_learners.size()); }
  PolicyRef learner_ref() const {
    return PolicyRef::learned(learner_id, std::make_shared<rl::AgentModel<float>>(learner));
  }
};

inline std::vector<std::string> node_names(const PopulationState& pop) {
  std::vector<std::string> names;
  for (int i = 0; i < pop.num_learners; ++i) names.push_back(pop.learner_id + "#" + std::to_string(i));
  for (const auto& r : pop.non_learners) names.push_back(r.id);
  return names;
}

/// One hyperedge per M-combination of non-learners, each joining all N learner nodes.
inline Hypergraph build_learner_subgraph(const PopulationState& pop, const EnvConfig& cfg, int episodes,
                                         std::uint64_t seed, int jobs = 1) {
  const int n = pop.num_learners, m = pop.num_teammates;
  if (static_cast<int>(pop.non_learners.size()) < m)
    throw GraphError("need at least " + std::to_string(m) + " non-learners, have " +
                     std::to_string(pop.non_learners.size()));
  Hypergraph g;
  g.nodes = node_names(pop);
  const PolicyRef me = pop.learner_ref();
  for (const auto& combo : combinations(static_cast<int>(pop.non_learners.size()), m)) {
    Hyperedge e;
    std::vector<PolicyRef> team(n, me);
    for (int i = 0; i < n; ++i) e.members.push_back(i);
    for (int j : combo) {
      e.members.push_back(n + j);
      team.push_back(pop.non_learners[j]);
    }
    e.weight = estimate_edge_weight(team, cfg, episodes, seed, pop.cache.get(), jobs);
    g.edges.push_back(std::move(e));
  }
  return g;
}

/// Non-learner pool subsets of the learner subgraph's edges, in edge order.
inline std::vector<std::vector<int>> teammate_subsets(const Hypergraph& g, int num_learners) {
  std::vector<std::vector<int>> out;
  for (const auto& e : g.edges) {
    std::vector<int> s;
    for (int v : e.members)
      if (v >= num_learners) s.push_back(v - num_learners);
    out.push_back(std::move(s));
  }
  return out;
}

/// Draws a teammate subset from rho per episode; counts draws for reporting.
struct SubsetSampler {
  MixedStrategy rho;
  std::vector<PolicyRef> pool;
  std::shared_ptr<std::vector<long>> counts;

  rl::TeammateSampler function() const {
    auto self = *this;
    return [self](Rng& rng) {
      const std::size_t k = self.rho.sample(rng);
      ++(*self.counts)[k];
      std::vector<PolicyRef> out;
      for (int i : self.rho.support[k]) out.push_back(self.pool[i]);
      return out;
    };
  }
};

struct MaxStepResult {
  rl::AgentModel<float> learner;
  std::vector<rl::MetricsRow> metrics;
  std::vector<long> draws;
};

/// Approximate best response: the shared trainee fills the N learner slots, each episode's
/// teammates are a subset drawn from rho, PPO runs for `budget` environment steps.
inline MaxStepResult max_step_train(const PopulationState& pop, const MixedStrategy& rho, const EnvConfig& cfg,
                                    const rl::TrainOptions& opt, long budget, std::uint64_t seed,
                                    rl::RunWriter& writer) {
  SubsetSampler sampler{rho, pop.non_learners, std::make_shared<std::vector<long>>(rho.support.size(), 0)};
  auto run = rl::make_learner(cfg, pop.learner.spec, rl::iota_slots(pop.num_learners), sampler.function(), opt, seed,
                              "hola-g" + std::to_string(pop.generation));
  run.model = pop.learner;
  run.opt = rl::AgentOptimizer<float>(run.model, opt.ppo.lr);
  rl::TrainResult tr;
  if (budget > 0) rl::run_learner(run, budget, opt, writer, tr);
  return {run.model, tr.metrics, *sampler.counts};
}

struct GenerationReport {
  int generation = 0;
  std::vector<std::string> population;
  Hypergraph graph;
  PreferenceHypergraph preference;
  std::vector<double> eta;
  MixedStrategy rho;
  std::vector<std::string> node_ids;
  std::vector<long> draws;
  bool uniform = false;
  std::string metrics_path;
  std::string checkpoint;
};

inline Json to_json(const GenerationReport& r) {
  Json j{{"generation", r.generation}, {"population", r.population}, {"mixture", r.uniform ? "uniform" : "preference"}};
  j["hyperedges"] = Json::array();
  for (const auto& e : r.graph.edges) {
    Json members = Json::array();
    for (int v : e.members) members.push_back(r.node_ids[v]);
    j["hyperedges"].push_back({{"members", members}, {"weight", e.weight}});
  }
  j["preference_edges"] = Json::object();
  for (std::size_t v = 0; v < r.preference.outgoing.size(); ++v) j["preference_edges"][r.node_ids[v]] = r.preference.outgoing[v];
  j["eta"] = Json::object();
  for (std::size_t v = 0; v < r.eta.size(); ++v) j["eta"][r.node_ids[v]] = r.eta[v];
  Json support = Json::array();
  for (std::size_t k = 0; k < r.rho.support.size(); ++k) {
    Json members = Json::array();
    for (int i : r.rho.support[k]) members.push_back(r.population[i]);
    support.push_back({{"teammates", members}, {"probability", r.rho.probabilities[k]}, {"draws", r.draws.empty() ? 0 : r.draws[k]}});
  }
  j["rho"] = support;
  j["metrics"] = r.metrics_path;
  j["checkpoint"] = r.checkpoint;
  return j;
}

/// One open-ended generation: add the current learner snapshot to the non-learner pool,
/// score the learner subgraph, solve the min step (or use the uniform mixture), then
/// train the learner against the mixture.
inline GenerationReport hola_generation(PopulationState& pop, const EnvConfig& cfg, const rl::TrainOptions& opt,
                                        const HolaOptions& hola, std::uint64_t seed,
                                        const std::filesystem::path& out_dir = {}) {
  pop.non_learners.push_back(pop.learner_ref());
  const std::uint64_t gseed = derive_seed(seed, "generation", pop.generation);

  GenerationReport rep;
  rep.generation = pop.generation;
  rep.uniform = !hola.use_hypergraph;
  for (const auto& r : pop.non_learners) rep.population.push_back(r.id);
  rep.node_ids = node_names(pop);

  if (hola.use_hypergraph) {
    rep.graph = build_learner_subgraph(pop, cfg, hola.edge_episodes, derive_seed(gseed, "edges"), hola.jobs);
    rep.preference = build_preference_hypergraph(rep.graph);
    rep.eta = preference_centralities(rep.preference, rep.graph);
    std::vector<double> pool_eta(rep.eta.begin() + pop.num_learners, rep.eta.end());
    rep.rho = min_step_solve(teammate_subsets(rep.graph, pop.num_learners), pool_eta, hola.eps, hola.score);
  } else {
    rep.rho = uniform_strategy(combinations(static_cast<int>(pop.non_learners.size()), pop.num_teammates));
  }

  rl::RunWriter writer;
  if (!out_dir.empty()) {
    writer = rl::RunWriter(out_dir, "metrics_g" + std::to_string(pop.generation) + ".csv");
    rep.metrics_path = (out_dir / ("metrics_g" + std::to_string(pop.generation) + ".csv")).string();
  }
  auto ms = max_step_train(pop, rep.rho, cfg, opt, hola.steps_per_generation, derive_seed(gseed, "train"), writer);
  rep.draws = ms.draws;
  pop.learner = std::move(ms.learner);
  ++pop.generation;
  pop.learner_id = "learner@g" + std::to_string(pop.generation);
  if (writer.enabled())
    rep.checkpoint = writer.checkpoint(pop.learner, pop.learner_id, Json{{"algo", hola.use_hypergraph ? "hola" : "hola-nog"},
                                                                        {"generation", pop.generation}}).string();
  return rep;
}

/// Starting population: greedy, vicsek and either the given frozen policies or two
/// self-play seeds trained for `sp_steps` each (their runs go under out_dir/init_spK).
inline PopulationState initial_population(const EnvConfig& cfg, const rl::TrainOptions& opt, std::uint64_t seed,
                                          std::vector<PolicyRef> init, long sp_steps,
                                          const std::filesystem::path& out_dir = {}) {
  PopulationState pop;
  pop.num_learners = cfg.players.num_ctrl;
  pop.num_teammates = cfg.players.num_p - cfg.players.num_ctrl;
  pop.non_learners = {PolicyRef::scripted("greedy"), PolicyRef::scripted("vicsek")};
  if (!init.empty()) {
    pop.non_learners.insert(pop.non_learners.end(), init.begin(), init.end());
  } else {
    rl::TrainOptions sp_opt = opt;
    sp_opt.ppo.total_steps = sp_steps;
    sp_opt.checkpoint_every = 0;
    for (int k = 0; k < 2; ++k) {
      rl::RunWriter w;
      if (!out_dir.empty()) w = rl::RunWriter(out_dir / ("init_sp" + std::to_string(k)));
      auto res = rl::ippo_selfplay_train(sp_opt, cfg, derive_seed(seed, "initial-sp", k), w);
      pop.non_learners.push_back(
          PolicyRef::learned("sp" + std::to_string(k), std::make_shared<rl::AgentModel<float>>(res.model)));
    }
  }
  Rng init_rng(seed, "init");
  rl::ModelSpec spec = rl::base_spec(cfg);
  spec.num_unctrl = pop.num_teammates;
  pop.learner = rl::AgentModel<float>::create(spec, init_rng);
  return pop;
}

/// Runs hola.generations generations; `on_generation` sees each report as it completes.
inline std::vector<GenerationReport> hola_train(PopulationState& pop, const EnvConfig& cfg, const rl::TrainOptions& opt,
                                                const HolaOptions& hola, std::uint64_t seed,
                                                const std::filesystem::path& out_dir = {},
                                                const std::function<void(const GenerationReport&)>& on_generation = {}) {
  std::vector<GenerationReport> reps;
  for (int g = 0; g < hola.generations; ++g) {
    reps.push_back(hola_generation(pop, cfg, opt, hola, seed, out_dir));
    if (on_generation) on_generation(reps.back());
  }
  return reps;
}

}  // namespace pursuit::hola
