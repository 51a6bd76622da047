#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pursuit/population.hpp"

using namespace pursuit;
using namespace pursuit::hola;

namespace {

// Learner subgraph over |pool| non-learners: N learner nodes joined with every M-subset.
Hypergraph toy_learner_graph(int n, int pool, int m, Rng& rng) {
  Hypergraph g;
  for (int i = 0; i < n + pool; ++i) g.nodes.push_back("n" + std::to_string(i));
  for (const auto& c : combinations(pool, m)) {
    Hyperedge e;
    for (int i = 0; i < n; ++i) e.members.push_back(i);
    for (int j : c) e.members.push_back(n + j);
    // Small integer weights make ties common.
    e.weight = static_cast<double>(rng.below(4));
    g.edges.push_back(e);
  }
  return g;
}

// Every C-subset of nodes as a hyperedge.
Hypergraph toy_full_graph(int nodes, int c, Rng& rng) {
  Hypergraph g;
  for (int i = 0; i < nodes; ++i) g.nodes.push_back("n" + std::to_string(i));
  for (const auto& s : combinations(nodes, c)) g.edges.push_back({s, static_cast<double>(rng.below(5))});
  return g;
}

std::vector<int> brute_preference(const Hypergraph& g) {
  std::vector<int> out(g.nodes.size(), -1);
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    std::vector<std::pair<std::pair<double, std::vector<int>>, int>> cands;
    for (std::size_t k = 0; k < g.edges.size(); ++k) {
      const auto& mem = g.edges[k].members;
      if (std::count(mem.begin(), mem.end(), static_cast<int>(v)) == 0) continue;
      auto sorted = mem;
      std::sort(sorted.begin(), sorted.end());
      cands.push_back({{-g.edges[k].weight, sorted}, static_cast<int>(k)});
    }
    if (!cands.empty()) out[v] = std::min_element(cands.begin(), cands.end())->second;
  }
  return out;
}

std::vector<double> brute_eta(const Hypergraph& g, const std::vector<int>& pref) {
  const int n = static_cast<int>(g.nodes.size());
  std::vector<double> eta(n);
  for (int v = 0; v < n; ++v) {
    int deg = 0, in = 0;
    for (const auto& e : g.edges)
      for (int x : e.members)
        if (x == v) {
          ++deg;
          break;
        }
    for (int u = 0; u < n; ++u) {
      if (u == v) continue;
      const auto& mem = g.edges[pref[u]].members;
      in += std::find(mem.begin(), mem.end(), v) != mem.end();
    }
    eta[v] = double(in) / double(deg);
  }
  return eta;
}

long choose(int n, int k) {
  if (k < 0 || k > n) return 0;
  long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

TEST(Hypergraph, Combinations) {
  EXPECT_EQ(combinations(4, 2), (std::vector<std::vector<int>>{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}));
  EXPECT_EQ(combinations(3, 3).size(), 1u);
  EXPECT_TRUE(combinations(2, 3).empty());
  for (int n = 0; n <= 7; ++n)
    for (int k = 0; k <= n; ++k) EXPECT_EQ(static_cast<long>(combinations(n, k).size()), choose(n, k));
}

TEST(Hypergraph, PreferenceFigureScenario) {
  Hypergraph g;
  g.nodes = {"1", "2", "3", "4", "5"};
  // Node labels 1..5 stored at indices 0..4.
  g.edges = {{{0, 1, 2, 3}, 30}, {{1, 2, 4, 3}, 45}, {{0, 1, 3, 4}, 12}, {{0, 2, 3, 4}, 20}};
  const auto pg = build_preference_hypergraph(g);
  const auto& out = g.edges[pg.outgoing[1]];
  EXPECT_EQ(out.members, (std::vector<int>{1, 2, 4, 3}));  // (2, 3, 5, 4)
  EXPECT_EQ(out.weight, 45);
  std::vector<double> incident;
  for (const auto& e : g.edges)
    if (g.contains(e, 1)) incident.push_back(e.weight);
  std::sort(incident.begin(), incident.end());
  EXPECT_EQ(incident, (std::vector<double>{12, 30, 45}));
}

TEST(Hypergraph, SingleEdgeAndTies) {
  Hypergraph one{{"a", "b", "c"}, {{{0, 1, 2}, 3.0}}};
  for (int v : build_preference_hypergraph(one).outgoing) EXPECT_EQ(v, 0);

  Hypergraph tie{{"a", "b", "c", "d"}, {{{0, 3, 2}, 5.0}, {{0, 1, 3}, 5.0}}};
  const auto pg = build_preference_hypergraph(tie);
  EXPECT_EQ(pg.outgoing[0], 1);  // (0,1,3) < (0,2,3)
  EXPECT_EQ(build_preference_hypergraph(tie).outgoing, pg.outgoing);

  Hypergraph isolated{{"a", "b", "c"}, {{{0, 1}, 1.0}}};
  EXPECT_THROW(build_preference_hypergraph(isolated), GraphError);
}

TEST(Hypergraph, CentralityExtremes) {
  Hypergraph g{{"a", "b", "c"}, {{{0, 1}, 5.0}, {{0, 2}, 4.0}, {{1, 2}, 1.0}}};
  const auto pg = build_preference_hypergraph(g);
  // b and c both prefer edges containing a; a has degree 2.
  EXPECT_DOUBLE_EQ(preference_centrality(pg, g, 0), 2.0 / 2.0);
  // b appears only in a's preferred edge; c in none.
  EXPECT_DOUBLE_EQ(preference_centrality(pg, g, 1), 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(preference_centrality(pg, g, 2), 0.0);
}

TEST(Hypergraph, LearnerSubgraphsMatchBruteForce) {
  Rng rng(31);
  int instances = 0;
  for (int total = 2; total <= 7; ++total)
    for (int n = 1; n <= 2; ++n)
      for (int m = 1; m <= 3; ++m) {
        const int pool = total - n;
        if (pool < m) continue;
        for (int rep = 0; rep < 20; ++rep, ++instances) {
          const Hypergraph g = toy_learner_graph(n, pool, m, rng);
          ASSERT_EQ(static_cast<long>(g.edges.size()), choose(pool, m));
          for (int v = 0; v < n; ++v) EXPECT_EQ(g.degree(v), choose(pool, m));
          for (int v = n; v < total; ++v) EXPECT_EQ(g.degree(v), choose(pool - 1, m - 1));

          const auto pg = build_preference_hypergraph(g);
          const auto want_pg = brute_preference(g);
          ASSERT_EQ(pg.outgoing, want_pg);
          // Each outgoing edge has the node's maximum incident weight.
          for (int v = 0; v < total; ++v)
            for (const auto& e : g.edges)
              if (g.contains(e, v)) {
                EXPECT_LE(e.weight, g.edges[pg.outgoing[v]].weight);
              }

          const auto eta = preference_centralities(pg, g);
          const auto want_eta = brute_eta(g, want_pg);
          ASSERT_EQ(eta, want_eta);

          const std::vector<double> pool_eta(eta.begin() + n, eta.end());
          const auto rho = min_step_solve(teammate_subsets(g, n), pool_eta, 0.01);
          double z = 0;
          std::vector<double> raw;
          for (const auto& c : combinations(pool, m)) {
            double s = 0;
            for (int j : c) s += want_eta[n + j];
            raw.push_back(1.0 / (s / m + 0.01));
            z += raw.back();
          }
          ASSERT_EQ(rho.support, combinations(pool, m));
          for (std::size_t k = 0; k < raw.size(); ++k) EXPECT_NEAR(rho.probabilities[k], raw[k] / z, 1e-15);
        }
      }
  EXPECT_GT(instances, 300);
}

TEST(Hypergraph, FullGraphsMatchBruteForce) {
  Rng rng(32);
  for (int nodes = 2; nodes <= 7; ++nodes)
    for (int c = 2; c <= std::min(nodes, 5); ++c)
      for (int rep = 0; rep < 10; ++rep) {
        const Hypergraph g = toy_full_graph(nodes, c, rng);
        const auto pg = build_preference_hypergraph(g);
        ASSERT_EQ(pg.outgoing, brute_preference(g));
        ASSERT_EQ(preference_centralities(pg, g), brute_eta(g, pg.outgoing));
      }
}

// Exhaustive Preference-Optimal oracle: the N nodes with the largest centralities maximize
// the summed centrality over every size-N subset.
TEST(Hypergraph, TopCentralitySetIsPreferenceOptimal) {
  Rng rng(33);
  for (int rep = 0; rep < 50; ++rep) {
    const int nodes = 4 + static_cast<int>(rng.below(4));
    const Hypergraph g = toy_full_graph(nodes, 3, rng);
    const auto eta = preference_centralities(build_preference_hypergraph(g), g);
    for (int n = 1; n <= 2; ++n) {
      std::vector<int> order(nodes);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return eta[a] > eta[b]; });
      double reported = 0;
      for (int i = 0; i < n; ++i) reported += eta[order[i]];
      double best = -1;
      for (const auto& s : combinations(nodes, n)) {
        double v = 0;
        for (int i : s) v += eta[i];
        best = std::max(best, v);
      }
      EXPECT_DOUBLE_EQ(reported, best);
    }
  }
}

TEST(MinStep, Fixtures) {
  const std::vector<std::vector<int>> two{{0}, {1}};
  auto rho = min_step_solve(two, {0.5, 0.5}, 0.01);
  EXPECT_DOUBLE_EQ(rho.probabilities[0], 0.5);
  rho = min_step_solve(two, {0.0, 1.0}, 0.01);
  EXPECT_NEAR(rho.probabilities[0], (1 / 0.01) / (1 / 0.01 + 1 / 1.01), 1e-12);
  EXPECT_NEAR(rho.probabilities[0], 0.9902, 1e-4);
  EXPECT_THROW(min_step_solve({}, {}, 0.01), GraphError);
  EXPECT_THROW(subset_score_from_string("median"), std::invalid_argument);
  EXPECT_EQ(subset_score({0, 1}, {0.2, 0.6}, SubsetScore::min), 0.2);
  EXPECT_NEAR(subset_score({0, 1}, {0.2, 0.6}, SubsetScore::product), 0.12, 1e-15);
}

TEST(MinStep, ValidAndMonotone) {
  Rng rng(34);
  for (int rep = 0; rep < 200; ++rep) {
    const int pool = 2 + static_cast<int>(rng.below(5));
    const int m = 1 + static_cast<int>(rng.below(std::min(pool, 3)));
    std::vector<double> eta(pool);
    for (auto& x : eta) x = rng.uniform(0, 2);
    const auto subsets = combinations(pool, m);
    for (auto how : {SubsetScore::mean, SubsetScore::min, SubsetScore::product}) {
      const auto rho = min_step_solve(subsets, eta, 0.01, how);
      double sum = 0;
      for (double p : rho.probabilities) {
        EXPECT_GE(p, 0.0);
        sum += p;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
      for (std::size_t a = 0; a < subsets.size(); ++a)
        for (std::size_t b = 0; b < subsets.size(); ++b)
          if (subset_score(subsets[a], eta, how) < subset_score(subsets[b], eta, how)) {
            EXPECT_GE(rho.probabilities[a], rho.probabilities[b]);
          }
    }
  }
}

TEST(MixedStrategy, SamplingMatchesProbabilities) {
  const auto subsets = combinations(5, 2);
  std::vector<double> eta{0.0, 0.3, 0.5, 1.0, 0.1};
  for (const auto& rho : {min_step_solve(subsets, eta, 0.01), uniform_strategy(subsets)}) {
    Rng rng(35);
    std::vector<int> counts(subsets.size());
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[rho.sample(rng)];
    for (std::size_t k = 0; k < counts.size(); ++k) EXPECT_NEAR(double(counts[k]) / draws, rho.probabilities[k], 0.02);
  }
  MixedStrategy point{{{0}, {1}}, {0.0, 1.0}};
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(point.sample(rng), 1u);
}

TEST(EdgeWeights, MeanReturnCachedAndDeterministic) {
  EnvConfig cfg = builtin_env("4p2e3o");
  cfg.task.task_horizon = 60;
  const std::vector<PolicyRef> greedy(4, PolicyRef{"greedy", nullptr});
  const std::vector<PolicyRef> random(4, PolicyRef{"random", nullptr});
  EdgeWeightCache cache;
  const double w = estimate_edge_weight(greedy, cfg, 10, 7, &cache);
  EXPECT_EQ(cache.episodes_run, 10);
  EXPECT_EQ(estimate_edge_weight(greedy, cfg, 10, 7, &cache), w);
  EXPECT_EQ(cache.episodes_run, 10);
  EXPECT_EQ(estimate_edge_weight(greedy, cfg, 10, 7, nullptr, 3), w);

  const auto one = run_episodes(cfg, greedy, 9, "edge-weight", 1);
  EXPECT_EQ(estimate_edge_weight(greedy, cfg, 1, 9), one[0].ret);
  EXPECT_GT(estimate_edge_weight(greedy, cfg, 20, 3), estimate_edge_weight(random, cfg, 20, 3));
}

TEST(Population, SubgraphStructureAndGrowth) {
  EnvConfig cfg = builtin_env("4p2e3o");
  cfg.task.task_horizon = 20;
  PopulationState pop;
  rl::ModelSpec spec = rl::base_spec(cfg);
  spec.hidden = 8;
  Rng rng(1);
  pop.learner = rl::AgentModel<float>::create(spec, rng);
  pop.non_learners = {{"greedy", nullptr}, {"vicsek", nullptr}, {"random", nullptr}};
  const auto g = build_learner_subgraph(pop, cfg, 2, 5);
  EXPECT_EQ(g.edges.size(), 3u);
  for (const auto& e : g.edges) {
    EXPECT_EQ(e.members.size(), 4u);
    EXPECT_EQ(e.members[0], 0);
    EXPECT_EQ(e.members[1], 1);
  }
  EXPECT_EQ(node_names(pop).size(), 5u);

  PopulationState small = pop;
  small.non_learners.resize(1);
  EXPECT_THROW(build_learner_subgraph(small, cfg, 2, 5), GraphError);
  small.non_learners = {{"greedy", nullptr}, {"vicsek", nullptr}};
  EXPECT_EQ(build_learner_subgraph(small, cfg, 2, 5).edges.size(), 1u);

  rl::TrainOptions opt;
  HolaOptions h;
  h.steps_per_generation = 0;
  h.edge_episodes = 2;
  const auto before = pop.population_size();
  const auto learner_before = pop.learner;
  const auto rep = hola_generation(pop, cfg, opt, h, 3);
  EXPECT_EQ(pop.population_size(), before + 1);
  EXPECT_EQ(rep.population.size(), 4u);
  EXPECT_EQ(rep.rho.support.size(), 6u);
  EXPECT_TRUE(pop.learner.same_params(learner_before));
  EXPECT_EQ(pop.generation, 1);
  EXPECT_EQ(pop.learner_id, "learner@g1");
}

TEST(Population, UniformMixtureWithoutHypergraph) {
  EnvConfig cfg = builtin_env("4p2e3o");
  cfg.task.task_horizon = 20;
  PopulationState pop;
  rl::ModelSpec spec = rl::base_spec(cfg);
  spec.hidden = 8;
  Rng rng(2);
  pop.learner = rl::AgentModel<float>::create(spec, rng);
  pop.non_learners = {{"greedy", nullptr}, {"vicsek", nullptr}};
  HolaOptions h;
  h.steps_per_generation = 0;
  h.use_hypergraph = false;
  const auto rep = hola_generation(pop, cfg, rl::TrainOptions{}, h, 4);
  EXPECT_TRUE(rep.uniform);
  EXPECT_TRUE(rep.graph.edges.empty());
  ASSERT_EQ(rep.rho.support.size(), 3u);
  for (double p : rep.rho.probabilities) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
  EXPECT_EQ(pop.cache->episodes_run, 0);
}

TEST(Population, GenerationsAreDeterministic) {
  EnvConfig cfg = builtin_env("4p2e3o");
  cfg.task.task_horizon = 30;
  auto run = [&] {
    PopulationState pop;
    rl::ModelSpec spec = rl::base_spec(cfg);
    spec.hidden = 8;
    Rng rng(3);
    pop.learner = rl::AgentModel<float>::create(spec, rng);
    pop.non_learners = {{"greedy", nullptr}, {"vicsek", nullptr}};
    rl::TrainOptions opt;
    opt.ppo.batch = 64;
    opt.ppo.minibatch = 32;
    opt.ppo.epochs = 2;
    opt.n_envs = 2;
    HolaOptions h;
    h.steps_per_generation = 64;
    h.edge_episodes = 2;
    std::vector<Json> reports;
    for (int g = 0; g < 2; ++g) reports.push_back(to_json(hola_generation(pop, cfg, opt, h, 11)));
    return reports;
  };
  EXPECT_EQ(run(), run());
}
