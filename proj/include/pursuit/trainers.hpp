#pragma once

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rollout.hpp"

namespace pursuit::rl {

struct MetricsRow {
  long step = 0;  // environment steps so far
  int iteration = 0;
  std::string member;
  int episodes = 0;
  double mean_reward = 0.0;  // over episodes finished during the iteration
  double suc = 0.0;          // percent
  LossStats loss;
};

inline const char* kMetricsHeader =
    "step,iteration,member,episodes,mean_episode_reward,suc,loss,policy_loss,value_loss,entropy,recon_loss,"
    "approx_kl,clip_frac,grad_norm";

inline std::string to_csv(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%d,%s,%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g", r.step, r.iteration,
                r.member.c_str(), r.episodes, r.mean_reward, r.suc, r.loss.total, r.loss.policy, r.loss.value,
                r.loss.entropy, r.loss.recon, r.loss.approx_kl, r.loss.clip_frac, r.loss.grad_norm);
  return buf;
}

/// Appends metrics rows to a CSV file and checkpoints into a run directory. A default
/// constructed writer discards everything.
class RunWriter {
 public:
  RunWriter() = default;
  explicit RunWriter(std::filesystem::path dir, std::string metrics_name = "metrics.csv") : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_ / "checkpoints");
    csv_.open(dir_ / metrics_name, std::ios::trunc);
    csv_ << kMetricsHeader << "\n";
  }

  bool enabled() const { return !dir_.empty(); }
  const std::filesystem::path& dir() const { return dir_; }

  void row(const MetricsRow& r) {
    if (csv_.is_open()) csv_ << to_csv(r) << "\n" << std::flush;
  }

  std::filesystem::path checkpoint(const AgentModel<float>& m, const std::string& name, Json meta = Json::object()) {
    if (!enabled()) return {};
    auto path = dir_ / "checkpoints" / (name + ".ckpt");
    save_model(path, m, std::move(meta));
    return path;
  }

 private:
  std::filesystem::path dir_;
  std::ofstream csv_;
};

struct TrainOptions {
  PpoConfig ppo;
  int n_envs = 8;
  long checkpoint_every = 0;  // environment steps between checkpoints; 0 keeps only the final one
  std::function<void(const MetricsRow&)> on_metrics;
};

struct TrainResult {
  AgentModel<float> model;
  std::vector<MetricsRow> metrics;
  std::vector<std::filesystem::path> checkpoints;
};

inline MetricsRow summarize(long step, int iteration, std::string member, const std::vector<EpisodeRecord>& eps,
                            const LossStats& loss) {
  MetricsRow r{step, iteration, std::move(member), static_cast<int>(eps.size()), 0.0, 0.0, loss};
  for (const auto& e : eps) {
    r.mean_reward += e.ret;
    r.suc += e.terminal == Terminal::success;
  }
  if (!eps.empty()) {
    r.mean_reward /= double(eps.size());
    r.suc = 100.0 * r.suc / double(eps.size());
  }
  return r;
}

/// Environment steps per environment per iteration so that one iteration fills exactly
/// one PPO batch.
inline int steps_per_env(const PpoConfig& ppo, int n_envs, int learners) {
  const int per_step = n_envs * learners;
  if (ppo.batch % per_step != 0)
    throw std::invalid_argument("batch " + std::to_string(ppo.batch) + " is not divisible by n_envs x learners = " +
                                std::to_string(per_step));
  return ppo.batch / per_step;
}

/// One learner trained by PPO on batches from `collector` until `env_steps` environment
/// steps have elapsed. The batch budget is rounded up to whole iterations.
struct LearnerRun {
  AgentModel<float> model;
  AgentOptimizer<float> opt;
  std::unique_ptr<RolloutCollector> collector;
  Rng update_rng;
  PpoConfig ppo;
  long steps = 0;
  int iteration = 0;
  std::string name = "learner";
  std::deque<double> recent_returns;

  /// One collect + update cycle; returns the metrics row.
  MetricsRow iterate(int per_env, std::size_t keep_returns = 100) {
    PpoBatch<float> batch = collector->collect(model, per_env, ppo);
    LossStats loss = ppo_update(model, opt, std::move(batch), ppo, update_rng);
    steps += long(per_env) * collector->n_envs();
    ++iteration;
    auto eps = collector->take_episodes();
    for (const auto& e : eps) recent_returns.push_back(e.ret);
    while (recent_returns.size() > keep_returns) recent_returns.pop_front();
    return summarize(steps, iteration, name, eps, loss);
  }

  double fitness(std::size_t window) const {
    if (recent_returns.empty()) return 0.0;
    const std::size_t n = std::min(window, recent_returns.size());
    double sum = 0.0;
    for (std::size_t i = recent_returns.size() - n; i < recent_returns.size(); ++i) sum += recent_returns[i];
    return sum / double(n);
  }
};

inline void run_learner(LearnerRun& run, long env_steps, const TrainOptions& opt, RunWriter& writer,
                        TrainResult& result) {
  const int per_env = steps_per_env(run.ppo, run.collector->n_envs(),
                                    static_cast<int>(run.collector->learner_slots().size()));
  const long target = run.steps + env_steps;
  long next_ckpt = opt.checkpoint_every > 0 ? run.steps + opt.checkpoint_every : -1;
  while (run.steps < target) {
    MetricsRow row = run.iterate(per_env);
    writer.row(row);
    if (opt.on_metrics) opt.on_metrics(row);
    result.metrics.push_back(row);
    if (next_ckpt > 0 && run.steps >= next_ckpt && run.steps < target) {
      result.checkpoints.push_back(
          writer.checkpoint(run.model, run.name + "_" + std::to_string(run.steps), Json{{"step", run.steps}}));
      next_ckpt += opt.checkpoint_every;
    }
  }
}

inline std::vector<int> iota_slots(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Uniform per-slot draws from a pool.
inline TeammateSampler uniform_pool_sampler(std::vector<PolicyRef> pool, int slots) {
  if (pool.empty()) throw std::invalid_argument("teammate pool is empty");
  return [pool = std::move(pool), slots](Rng& rng) {
    std::vector<PolicyRef> out;
    for (int i = 0; i < slots; ++i) out.push_back(pool[rng.below(pool.size())]);
    return out;
  };
}

inline LearnerRun make_learner(const EnvConfig& env, const ModelSpec& spec, std::vector<int> learner_slots,
                               TeammateSampler sampler, const TrainOptions& opt, std::uint64_t seed,
                               std::string name = "learner") {
  opt.ppo.validate();
  Rng init(seed, "init");
  LearnerRun run;
  run.model = AgentModel<float>::create(spec, init);
  run.update_rng = Rng(seed, "update");
  run.ppo = opt.ppo;
  run.name = std::move(name);
  run.opt = AgentOptimizer<float>(run.model, opt.ppo.lr);
  CollectorCfg cc;
  cc.n_envs = opt.n_envs;
  cc.learner_slots = std::move(learner_slots);
  cc.central_critic = spec.central_critic;
  run.collector = std::make_unique<RolloutCollector>(env, cc, std::move(sampler), derive_seed(seed, "rollout"));
  return run;
}

inline TrainResult finish(LearnerRun& run, RunWriter& writer, TrainResult result, Json meta) {
  meta["step"] = run.steps;
  result.checkpoints.push_back(writer.checkpoint(run.model, run.name + "_final", std::move(meta)));
  result.model = run.model;
  return result;
}

/// Parameter-shared self-play: one actor-critic drives every pursuer slot.
inline TrainResult ippo_selfplay_train(const TrainOptions& opt, const EnvConfig& env, std::uint64_t seed,
                                       RunWriter& writer) {
  auto run = make_learner(env, base_spec(env), iota_slots(env.players.num_p), nullptr, opt, seed, "sp");
  TrainResult result;
  run_learner(run, opt.ppo.total_steps, opt, writer, result);
  return finish(run, writer, std::move(result), Json{{"algo", "sp"}, {"seed", seed}});
}

/// Shared actor over the num_ctrl learner slots with a centralized critic; the other
/// slots are filled from `pool` (uniform per slot and episode). An empty pool means
/// every slot is a learner.
inline ModelSpec mappo_spec(const EnvConfig& env, int learners) {
  ModelSpec s = base_spec(env);
  s.central_critic = true;
  s.critic_input = central_critic_size(env, learners);
  s.num_unctrl = env.players.num_p - learners;
  return s;
}

inline int learner_count(const EnvConfig& env, const std::vector<PolicyRef>& pool) {
  return pool.empty() ? env.players.num_p : env.players.num_ctrl;
}

inline TrainResult mappo_train(const TrainOptions& opt, const EnvConfig& env, const std::vector<PolicyRef>& pool,
                               std::uint64_t seed, RunWriter& writer) {
  const int n = learner_count(env, pool);
  TeammateSampler sampler = pool.empty() ? nullptr : uniform_pool_sampler(pool, env.players.num_p - n);
  auto run = make_learner(env, mappo_spec(env, n), iota_slots(n), sampler, opt, seed, "mappo");
  TrainResult result;
  run_learner(run, opt.ppo.total_steps, opt, writer, result);
  return finish(run, writer, std::move(result), Json{{"algo", "mappo"}, {"seed", seed}});
}

/// MAPPO plus the history encoder (actor input = observation ++ embedding) and, unless
/// `with_decoder` is false, the teammate action decoder trained through the KL term.
inline ModelSpec naht_spec(const EnvConfig& env, int learners, bool with_decoder, int embedding = 16,
                           int history = 1) {
  ModelSpec s = mappo_spec(env, learners);
  s.embedding = embedding;
  s.history = history;
  s.decoder = with_decoder;
  return s;
}

inline TrainResult naht_d_train(const TrainOptions& opt, const EnvConfig& env, const std::vector<PolicyRef>& pool,
                                std::uint64_t seed, RunWriter& writer, bool with_decoder = true) {
  if (pool.empty()) throw std::invalid_argument("teammate pool is empty");
  const int n = env.players.num_ctrl;
  auto run = make_learner(env, naht_spec(env, n, with_decoder), iota_slots(n),
                          uniform_pool_sampler(pool, env.players.num_p - n), opt, seed,
                          with_decoder ? "naht-d" : "naht-d-nodec");
  TrainResult result;
  run_learner(run, opt.ppo.total_steps, opt, writer, result);
  return finish(run, writer, std::move(result), Json{{"algo", run.name}, {"seed", seed}});
}

// -- population based training ---------------------------------------------------------

struct PbtOptions {
  int population = 4;
  long exploit_interval = 50'000;  // environment steps per member; 0 disables exploit
  double quantile = 0.25;
  int fitness_window = 20;  // recent episodes averaged for fitness
};

struct ExploitEvent {
  long step = 0;
  int target = 0;
  int source = 0;
  double lr = 0.0;
  double entropy_coef = 0.0;
};

struct PbtResult {
  std::vector<AgentModel<float>> members;
  std::vector<PpoConfig> hyper;
  std::vector<MetricsRow> metrics;
  std::vector<ExploitEvent> exploits;
  std::vector<std::filesystem::path> checkpoints;
};

/// Bottom-quantile members copy parameters and optimizer state from a uniformly drawn
/// top-quantile member, then scale lr and entropy coefficient by 0.8 or 1.25 each.
inline std::vector<ExploitEvent> pbt_exploit(std::vector<LearnerRun>& runs, const std::vector<double>& fitness,
                                             double quantile, Rng& rng, long step) {
  const int p = static_cast<int>(runs.size());
  const int q = std::max(1, static_cast<int>(p * quantile));
  std::vector<int> order(p);
  for (int i = 0; i < p; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fitness[a] > fitness[b]; });
  std::vector<ExploitEvent> events;
  for (int k = 0; k < q; ++k) {
    const int target = order[p - 1 - k];
    const int source = order[rng.below(q)];
    if (target == source) continue;
    runs[target].model = runs[source].model;
    runs[target].opt = runs[source].opt;
    PpoConfig hp = runs[source].ppo;
    hp.lr *= rng.below(2) ? 1.25 : 0.8;
    hp.entropy_coef *= rng.below(2) ? 1.25 : 0.8;
    runs[target].ppo = hp;
    runs[target].opt.set_lr(hp.lr);
    events.push_back({step, target, source, hp.lr, hp.entropy_coef});
  }
  return events;
}

/// P parameter-shared IPPO learners. Each member trains in the learner slots [0, num_ctrl)
/// with the remaining slots drawn uniformly per episode from frozen snapshots of the whole
/// population (refreshed every iteration).
inline PbtResult pbt_train(const TrainOptions& opt, const PbtOptions& pbt, const EnvConfig& env, std::uint64_t seed,
                           RunWriter& writer) {
  if (pbt.population < 2) throw std::invalid_argument("population based training needs at least 2 members");
  const int n = env.players.num_ctrl, m = env.players.num_p - n;
  auto snapshots = std::make_shared<std::vector<PolicyRef>>();
  TeammateSampler sampler = [snapshots, m](Rng& rng) {
    std::vector<PolicyRef> out;
    for (int i = 0; i < m; ++i) out.push_back((*snapshots)[rng.below(snapshots->size())]);
    return out;
  };
  std::vector<LearnerRun> runs;
  for (int k = 0; k < pbt.population; ++k)
    runs.push_back(make_learner(env, base_spec(env), iota_slots(n), sampler, opt, derive_seed(seed, "member", k),
                                "member" + std::to_string(k)));
  auto refresh = [&] {
    snapshots->clear();
    for (auto& r : runs) snapshots->push_back(PolicyRef::learned(r.name, std::make_shared<AgentModel<float>>(r.model)));
  };
  refresh();

  PbtResult result;
  const int per_env = steps_per_env(opt.ppo, opt.n_envs, n);
  Rng exploit_rng(seed, "exploit");
  long next_exploit = pbt.exploit_interval;
  while (runs.front().steps < opt.ppo.total_steps) {
    for (auto& run : runs) {
      MetricsRow row = run.iterate(per_env);
      writer.row(row);
      if (opt.on_metrics) opt.on_metrics(row);
      result.metrics.push_back(row);
    }
    if (pbt.exploit_interval > 0 && runs.front().steps >= next_exploit) {
      std::vector<double> fitness;
      for (const auto& run : runs) fitness.push_back(run.fitness(pbt.fitness_window));
      for (auto& ev : pbt_exploit(runs, fitness, pbt.quantile, exploit_rng, runs.front().steps))
        result.exploits.push_back(ev);
      next_exploit += pbt.exploit_interval;
    }
    refresh();
  }
  for (auto& run : runs) {
    result.checkpoints.push_back(writer.checkpoint(run.model, run.name + "_final",
                                                   Json{{"algo", "pbt"}, {"seed", seed}, {"step", run.steps},
                                                        {"lr", run.ppo.lr}, {"entropy_coef", run.ppo.entropy_coef}}));
    result.members.push_back(run.model);
    result.hyper.push_back(run.ppo);
  }
  return result;
}

}  // namespace pursuit::rl
