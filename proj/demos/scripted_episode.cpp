// Plays greedy pursuers against the fleeing evaders, writes the trajectory log and an SVG.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pursuit/pursuit.hpp"

using namespace pursuit;

int main(int argc, char** argv) {
  const std::string env_name = argc > 1 ? argv[1] : "4p2e3o";
  const std::uint64_t seed = argc > 2 ? std::stoull(argv[2]) : 7;
  EnvConfig cfg = builtin_env(env_name);
  cfg.task.task_horizon = 300;

  std::vector<rl::PolicyRef> team(cfg.players.num_p, rl::PolicyRef::scripted("greedy"));
  team.back() = rl::PolicyRef::scripted("vicsek");

  std::ostringstream log;
  TrajectoryWriter writer(log);
  const auto rec = run_episode(cfg, team, seed, &writer);
  std::cout << env_name << " seed " << seed << ": " << to_string(rec.terminal) << " after " << rec.steps
            << " steps, return " << rec.ret << "\n";

  std::ofstream("episode.jsonl") << log.str();
  std::istringstream in(log.str());
  std::ofstream("episode.svg") << eval::render_episode(read_trajectory(in));
  std::cout << "wrote episode.jsonl and episode.svg\n";

  // Same team over a small evaluation block.
  const auto rep = eval::run_evaluation({team[0]}, eval::zoo1(), cfg, 50, seed);
  std::printf("50 episodes: SUC %.0f%%  COL %d  AST %s\n", rep.overall.suc, rep.overall.col,
              rep.overall.ast ? std::to_string(int(*rep.overall.ast)).c_str() : "n/a");
}
