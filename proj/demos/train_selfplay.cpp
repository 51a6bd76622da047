// Short parameter-shared self-play run on the reduced 4p2e3o task, then evaluation with
// greedy teammates in the uncontrolled slots.
#include <cstdio>
#include <cstdlib>

#include "pursuit/pursuit.hpp"

using namespace pursuit;

int main(int argc, char** argv) {
  const long steps = argc > 1 ? std::atol(argv[1]) : 20'000;
  EnvConfig cfg = builtin_env("4p2e3o");
  cfg.task.task_horizon = 300;

  rl::TrainOptions opt;
  opt.ppo.total_steps = steps;
  opt.on_metrics = [](const rl::MetricsRow& r) {
    std::printf("step %7ld  episodes %2d  reward %7.2f  SUC %5.1f  kl %.4f\n", r.step, r.episodes, r.mean_reward, r.suc,
                r.loss.approx_kl);
  };
  rl::RunWriter none;
  const auto res = rl::ippo_selfplay_train(opt, cfg, 1, none);

  const auto learner = rl::PolicyRef::learned("sp", std::make_shared<rl::AgentModel<float>>(res.model));
  const auto rep = eval::run_evaluation({learner}, eval::zoo1(), cfg, 50, 3);
  std::printf("vs zoo1: SUC %.1f%%  COL %d  REW %.2f\n", rep.overall.suc, rep.overall.col, rep.overall.rew);
}
