#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ppo.hpp"
#include "scripted.hpp"
#include "sim.hpp"

namespace pursuit::rl {

using ModelPtr = std::shared_ptr<const AgentModel<float>>;

inline constexpr std::string_view kRandomId = "random";

/// A pursuer policy: a scripted id ("greedy", "vicsek", "random") or a frozen learned model
/// under a display id.
struct PolicyRef {
  std::string id;
  ModelPtr model;

  static PolicyRef scripted(std::string id) { return {std::move(id), nullptr}; }
  static PolicyRef learned(std::string id, ModelPtr m) { return {std::move(id), std::move(m)}; }
  bool is_learned() const { return model != nullptr; }
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(std::uint64_t /*seed*/) {}
  virtual double act(const EnvConfig& cfg, const WorldState& s, const Observation& obs, int slot) = 0;
};

class ScriptedController : public Controller {
 public:
  explicit ScriptedController(std::string_view id) : spec_(scripted_spec_from_id(id)) {}
  double act(const EnvConfig& cfg, const WorldState& s, const Observation&, int slot) override {
    return scripted_pursuer_action(cfg, s, slot, spec_).steer;
  }

 private:
  ScriptedPolicySpec spec_;
};

class RandomController : public Controller {
 public:
  void reset(std::uint64_t seed) override { rng_ = Rng(seed, "random-policy"); }
  double act(const EnvConfig&, const WorldState&, const Observation&, int) override {
    return rng_.uniform(-1.0, 1.0);
  }

 private:
  Rng rng_{0};
};

/// Frozen learned policy; acts with the mean action unless `stochastic`.
class ModelController : public Controller {
 public:
  ModelController(ModelPtr model, bool stochastic)
      : model_(std::move(model)), stochastic_(stochastic), history_(model_->spec.history_layout()) {}

  void reset(std::uint64_t seed) override {
    history_.reset();
    rng_ = Rng(seed, "model-policy");
  }

  double act(const EnvConfig&, const WorldState&, const Observation& obs, int) override {
    if (static_cast<int>(obs.size()) != model_->spec.obs_size)
      throw nn::ShapeError("policy expects " + std::to_string(model_->spec.obs_size) +
                           "-dim observations, got " + std::to_string(obs.size()));
    Matrix<float> o(obs.size(), 1);
    for (std::size_t i = 0; i < obs.size(); ++i) o(i, 0) = static_cast<float>(obs[i]);
    Matrix<float> h;
    if (model_->spec.has_encoder()) {
      const auto w = history_.push(obs);
      h.resize(w.size(), 1);
      for (std::size_t i = 0; i < w.size(); ++i) h(i, 0) = static_cast<float>(w[i]);
    }
    double a = model_->action_mean(o, h)(0, 0);
    if (stochastic_) a += std::exp(double(nn::clamp_log_std(model_->log_std[0]))) * rng_.normal();
    a = std::clamp(a, -1.0, 1.0);
    history_.record_action(a);
    return a;
  }

 private:
  ModelPtr model_;
  bool stochastic_;
  naht::HistoryTracker history_;
  Rng rng_{0};
};

inline std::unique_ptr<Controller> make_controller(const PolicyRef& ref, bool stochastic = false) {
  if (ref.model) return std::make_unique<ModelController>(ref.model, stochastic);
  if (ref.id == kRandomId) return std::make_unique<RandomController>();
  if (is_scripted_pursuer_id(ref.id)) return std::make_unique<ScriptedController>(ref.id);
  throw std::invalid_argument("unknown policy id '" + ref.id + "'");
}

/// Centralized critic input: learner observations in slot order, then evader positions
/// scaled to [-1, 1].
inline std::vector<double> central_critic_input(const EnvConfig& cfg, const WorldState& s,
                                                const std::vector<Observation>& obs,
                                                const std::vector<int>& learner_slots) {
  std::vector<double> out;
  for (int slot : learner_slots) out.insert(out.end(), obs[slot].begin(), obs[slot].end());
  for (const auto& e : s.evaders) {
    out.push_back(2.0 * e.x / cfg.site.boundary_width - 1.0);
    out.push_back(2.0 * e.y / cfg.site.boundary_height - 1.0);
  }
  return out;
}

// -- rollout collection ------------------------------------------------------------

struct EpisodeRecord {
  Terminal terminal = Terminal::timeout;
  int steps = 0;
  double ret = 0.0;
  std::vector<std::string> teammates;
};

/// Draws the policies for the non-learner slots of a new episode, in slot order.
using TeammateSampler = std::function<std::vector<PolicyRef>(Rng&)>;

struct CollectorCfg {
  int n_envs = 8;
  std::vector<int> learner_slots;
  bool central_critic = false;
  RewardCfg reward;
};

/// Runs `n_envs` environments in lockstep. Learner slots are driven by the trainee
/// (stochastic), the remaining slots by policies drawn from the sampler at each episode
/// start. Only learner transitions enter the batch.
class RolloutCollector {
 public:
  RolloutCollector(EnvConfig cfg, CollectorCfg cc, TeammateSampler sampler, std::uint64_t seed)
      : cfg_(std::move(cfg)), cc_(std::move(cc)), sampler_(std::move(sampler)) {
    if (cc_.learner_slots.empty()) throw std::invalid_argument("rollout needs at least one learner slot");
    const int p = cfg_.players.num_p;
    std::vector<bool> is_learner(p, false);
    for (int s : cc_.learner_slots) {
      if (s < 0 || s >= p || is_learner[s]) throw std::invalid_argument("invalid learner slot assignment");
      is_learner[s] = true;
    }
    for (int s = 0; s < p; ++s)
      if (!is_learner[s]) other_slots_.push_back(s);
    if (!other_slots_.empty() && !sampler_)
      throw std::invalid_argument("non-learner slots need a teammate sampler");
    for (int i = 0; i < cc_.n_envs; ++i) {
      workers_.emplace_back(PursuitEnv(cfg_, cc_.reward), Rng(seed, "rollout-env", i));
      start_episode(workers_.back());
    }
  }

  const std::vector<int>& learner_slots() const { return cc_.learner_slots; }
  const std::vector<int>& other_slots() const { return other_slots_; }
  int n_envs() const { return cc_.n_envs; }

  /// Advances every environment `steps_per_env` steps and returns the learner batch
  /// (n_envs * steps_per_env * |learner slots| samples) with GAE filled in.
  PpoBatch<float> collect(const AgentModel<float>& model, int steps_per_env, const PpoConfig& ppo) {
    const ModelSpec& spec = model.spec;
    const int L = static_cast<int>(cc_.learner_slots.size());
    const int E = cc_.n_envs, cols = E * L;
    const int hist = spec.has_encoder() ? spec.history_layout().size() : 0;
    const int m = static_cast<int>(other_slots_.size());
    if (spec.obs_size != ObservationLayout(cfg_).size()) throw nn::ShapeError("model/environment mismatch");
    for (auto& w : workers_)
      if (static_cast<int>(w.trackers.size()) != L || w.trackers[0].layout().length != spec.history)
        reset_trackers(w, spec);

    const int n = steps_per_env * cols;
    PpoBatch<float> b;
    b.obs.resize(spec.obs_size, n);
    b.history.resize(hist, hist ? n : 0);
    b.critic_in.resize(spec.critic_input, n);
    b.teammate_actions.resize(m, n);
    b.actions.resize(n), b.log_probs.resize(n), b.values.resize(n);
    std::vector<float> rewards(n);
    std::vector<std::uint8_t> dones(n);
    // Column of (env e, learner l, step t) in the batch: streams are contiguous in time.
    auto col = [&](int e, int l, int t) { return (e * L + l) * steps_per_env + t; };

    const float std_dev = std::exp(nn::clamp_log_std(model.log_std[0]));
    const float ls = nn::clamp_log_std(model.log_std[0]);
    Matrix<float> o(spec.obs_size, cols), h(hist, hist ? cols : 0), c(spec.critic_input, cols);
    for (int t = 0; t < steps_per_env; ++t) {
      fill_inputs(spec, o, h, c);
      const Matrix<float> mean = model.action_mean(o, h);
      const Matrix<float> value = model.value(c);
      for (int e = 0; e < E; ++e) {
        Worker& w = workers_[e];
        std::vector<ActionCmd> cmds(cfg_.players.num_p);
        for (int l = 0; l < L; ++l) {
          const int k = e * L + l, j = col(e, l, t);
          const float a = mean(0, k) + std_dev * static_cast<float>(w.rng.normal());
          const float diff = a - mean(0, k);
          b.obs.col(j) = o.col(k);
          if (hist) b.history.col(j) = h.col(k);
          b.critic_in.col(j) = c.col(k);
          b.actions[j] = a;
          b.log_probs[j] = -0.5f * diff * diff / (std_dev * std_dev) - ls - float(nn::kHalfLog2Pi);
          b.values[j] = value(0, k);
          const double applied = std::clamp(double(a), -1.0, 1.0);
          cmds[cc_.learner_slots[l]].steer = applied;
          w.trackers[l].record_action(applied);
        }
        for (int u = 0; u < m; ++u) {
          const int slot = other_slots_[u];
          cmds[slot].steer = std::clamp(w.teammates[u]->act(cfg_, w.env.state(), w.obs[slot], slot), -1.0, 1.0);
          for (int l = 0; l < L; ++l) b.teammate_actions(u, col(e, l, t)) = float(cmds[slot].steer);
        }
        StepOutcome out = w.env.step(cmds);
        w.ret += out.reward;
        const bool done = out.terminal != Terminal::running;
        for (int l = 0; l < L; ++l) {
          rewards[col(e, l, t)] = static_cast<float>(out.reward);
          dones[col(e, l, t)] = done;
        }
        if (done) {
          episodes_.push_back({out.terminal, w.env.state().step, w.ret, w.teammate_ids});
          start_episode(w);
        } else {
          w.obs = std::move(out.observations);
        }
      }
    }

    fill_inputs(spec, o, h, c, /*peek=*/true);
    const Matrix<float> boot = model.value(c);
    b.advantages.resize(n), b.returns.resize(n);
    for (int e = 0; e < E; ++e)
      for (int l = 0; l < L; ++l) {
        const int start = col(e, l, 0);
        auto span = [&](auto& v) { return std::span<const std::remove_reference_t<decltype(v[0])>>(v.data() + start, steps_per_env); };
        auto g = compute_gae<float>(span(rewards), span(b.values), span(dones), boot(0, e * L + l),
                                    float(ppo.gamma), float(ppo.gae_lambda));
        std::copy(g.advantages.begin(), g.advantages.end(), b.advantages.begin() + start);
        std::copy(g.returns.begin(), g.returns.end(), b.returns.begin() + start);
      }
    return b;
  }

  /// Episodes completed since the last call.
  std::vector<EpisodeRecord> take_episodes() { return std::exchange(episodes_, {}); }

 private:
  struct Worker {
    Worker(PursuitEnv e, Rng r) : env(std::move(e)), rng(r) {}
    PursuitEnv env;
    Rng rng;
    std::vector<Observation> obs;
    std::vector<std::unique_ptr<Controller>> teammates;
    std::vector<std::string> teammate_ids;
    std::vector<naht::HistoryTracker> trackers;
    double ret = 0.0;
  };

  void start_episode(Worker& w) {
    w.obs = w.env.reset(w.rng.next_u64());
    w.ret = 0.0;
    w.teammates.clear();
    w.teammate_ids.clear();
    if (!other_slots_.empty()) {
      auto refs = sampler_(w.rng);
      if (refs.size() != other_slots_.size()) throw std::invalid_argument("teammate sampler returned wrong count");
      for (const auto& r : refs) {
        w.teammates.push_back(make_controller(r));
        w.teammates.back()->reset(w.rng.next_u64());
        w.teammate_ids.push_back(r.id);
      }
    }
    for (auto& t : w.trackers) t.reset();
  }

  void reset_trackers(Worker& w, const ModelSpec& spec) {
    w.trackers.assign(cc_.learner_slots.size(), naht::HistoryTracker(spec.history_layout()));
  }

  /// Observation, history window and critic input per learner column. The history
  /// trackers advance unless `peek` (used for bootstrap values, which need no window).
  void fill_inputs(const ModelSpec& spec, Matrix<float>& o, Matrix<float>& h, Matrix<float>& c, bool peek = false) {
    const int L = static_cast<int>(cc_.learner_slots.size());
    for (int e = 0; e < cc_.n_envs; ++e) {
      Worker& w = workers_[e];
      std::vector<double> central;
      if (spec.central_critic) central = central_critic_input(cfg_, w.env.state(), w.obs, cc_.learner_slots);
      for (int l = 0; l < L; ++l) {
        const int k = e * L + l;
        const auto& ob = w.obs[cc_.learner_slots[l]];
        for (int i = 0; i < spec.obs_size; ++i) o(i, k) = static_cast<float>(ob[i]);
        const auto& ci = spec.central_critic ? central : ob;
        if (static_cast<int>(ci.size()) != spec.critic_input) throw nn::ShapeError("critic input size mismatch");
        for (int i = 0; i < spec.critic_input; ++i) c(i, k) = static_cast<float>(ci[i]);
        if (h.rows() && !peek) {
          const auto win = w.trackers[l].push(ob);
          for (int i = 0; i < h.rows(); ++i) h(i, k) = static_cast<float>(win[i]);
        }
      }
    }
  }

  EnvConfig cfg_;
  CollectorCfg cc_;
  TeammateSampler sampler_;
  std::vector<int> other_slots_;
  std::vector<Worker> workers_;
  std::vector<EpisodeRecord> episodes_;
};

}  // namespace pursuit::rl
