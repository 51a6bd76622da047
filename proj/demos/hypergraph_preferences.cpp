// Preference hypergraph, centralities and the teammate mixture on a five-node population.
#include <cstdio>

#include "pursuit/population.hpp"

using namespace pursuit::hola;

int main() {
  Hypergraph g;
  g.nodes = {"1", "2", "3", "4", "5"};
  g.edges = {{{0, 1, 2, 3}, 30}, {{1, 2, 4, 3}, 45}, {{0, 1, 3, 4}, 12}, {{0, 2, 3, 4}, 20}};

  const auto pg = build_preference_hypergraph(g);
  const auto eta = preference_centralities(pg, g);
  for (int v = 0; v < g.size(); ++v) {
    std::printf("node %s prefers (", g.nodes[v].c_str());
    const auto& e = g.edges[pg.outgoing[v]];
    for (std::size_t i = 0; i < e.members.size(); ++i)
      std::printf("%s%s", i ? "," : "", g.nodes[e.members[i]].c_str());
    std::printf(") w=%g  in=%d deg=%d eta=%.3f\n", e.weight, incoming_degree(pg, g, v), g.degree(v), eta[v]);
  }

  // Node 1 as the learner; pick 2 teammates out of the other four, weaker partners favored.
  const std::vector<double> pool_eta(eta.begin() + 1, eta.end());
  const auto rho = min_step_solve(combinations(4, 2), pool_eta, 0.01);
  for (std::size_t k = 0; k < rho.support.size(); ++k)
    std::printf("teammates {%s,%s}  p=%.3f\n", g.nodes[1 + rho.support[k][0]].c_str(),
                g.nodes[1 + rho.support[k][1]].c_str(), rho.probabilities[k]);
}
