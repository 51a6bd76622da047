#pragma once

#include <iosfwd>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rollout.hpp"

namespace pursuit {

inline constexpr int kTrajectorySchemaVersion = 1;

inline Json pose_json(const Pose& p) { return Json::array({p.x, p.y, p.heading}); }

inline Json state_json(const WorldState& s) {
  Json j{{"step", s.step}, {"pursuers", Json::array()}, {"evaders", Json::array()}, {"captured", Json::array()}};
  for (const auto& p : s.pursuers) j["pursuers"].push_back(pose_json(p));
  for (const auto& e : s.evaders) j["evaders"].push_back(pose_json(e));
  for (auto c : s.captured) j["captured"].push_back(bool(c));
  return j;
}

inline Json events_json(const StepEvents& ev) {
  Json j{{"captures", Json::array()}, {"collisions", Json::array()}};
  for (const auto& c : ev.captures) j["captures"].push_back({{"evader", c.evader}, {"pursuer", c.pursuer}});
  for (const auto& c : ev.collisions)
    j["collisions"].push_back({{"type", std::string(to_string(c.type))}, {"a", c.a}, {"b", c.b}});
  return j;
}

/// Newline-delimited JSON: one header record (config, seed, policy ids, initial state),
/// then one record per step.
class TrajectoryWriter {
 public:
  explicit TrajectoryWriter(std::ostream& out) : out_(out) {}

  void header(const EnvConfig& cfg, std::uint64_t seed, const std::vector<std::string>& policies,
              const WorldState& initial) {
    Json j{{"schema_version", kTrajectorySchemaVersion},
           {"record", "header"},
           {"config", to_json(cfg)},
           {"seed", seed},
           {"policies", policies},
           {"initial", state_json(initial)}};
    out_ << j.dump() << "\n";
  }

  void step(const WorldState& s, const std::vector<ActionCmd>& actions, const StepOutcome& out) {
    Json j = state_json(s);
    j["schema_version"] = kTrajectorySchemaVersion;
    j["record"] = "step";
    j["actions"] = Json::array();
    for (const auto& a : actions) j["actions"].push_back(a.steer);
    j["reward"] = out.reward;
    j["events"] = events_json(out.events);
    j["terminal"] = std::string(to_string(out.terminal));
    out_ << j.dump() << "\n";
  }

 private:
  std::ostream& out_;
};

class TrajectoryError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrajectoryStep {
  WorldState state;  // poses after the step (rng not restored)
  std::vector<double> actions;
  double reward = 0.0;
  StepEvents events;
  Terminal terminal = Terminal::running;
};

struct Trajectory {
  EnvConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> policies;
  WorldState initial;
  std::vector<TrajectoryStep> steps;
};

namespace detail {

inline Pose parse_pose(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw TrajectoryError("pose must be [x, y, heading]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline WorldState parse_state(const Json& j) {
  WorldState s;
  s.step = j.at("step").get<int>();
  for (const auto& p : j.at("pursuers")) s.pursuers.push_back(parse_pose(p));
  for (const auto& e : j.at("evaders")) s.evaders.push_back(parse_pose(e));
  for (const auto& c : j.at("captured")) s.captured.push_back(c.get<bool>());
  if (s.captured.size() != s.evaders.size()) throw TrajectoryError("captured flags do not match evaders");
  return s;
}

inline Terminal parse_terminal(const std::string& s) {
  for (Terminal t : {Terminal::running, Terminal::success, Terminal::collision, Terminal::timeout})
    if (to_string(t) == s) return t;
  throw TrajectoryError("unknown terminal '" + s + "'");
}

inline CollisionType parse_collision_type(const std::string& s) {
  for (CollisionType t : {CollisionType::drone_drone, CollisionType::drone_obstacle, CollisionType::drone_wall})
    if (to_string(t) == s) return t;
  throw TrajectoryError("unknown collision type '" + s + "'");
}

}  // namespace detail

inline Trajectory read_trajectory(std::istream& in) {
  Trajectory t;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      if (j.at("schema_version").get<int>() != kTrajectorySchemaVersion)
        throw TrajectoryError("unsupported schema_version");
      const std::string kind = j.at("record");
      if (kind == "header") {
        if (have_header) throw TrajectoryError("duplicate header");
        t.config = parse_config(j.at("config").dump());
        t.seed = j.at("seed").get<std::uint64_t>();
        t.policies = j.at("policies").get<std::vector<std::string>>();
        t.initial = detail::parse_state(j.at("initial"));
        have_header = true;
      } else if (kind == "step") {
        if (!have_header) throw TrajectoryError("step record before header");
        TrajectoryStep s;
        s.state = detail::parse_state(j);
        s.actions = j.at("actions").get<std::vector<double>>();
        s.reward = j.at("reward").get<double>();
        for (const auto& c : j.at("events").at("captures"))
          s.events.captures.push_back({c.at("evader").get<int>(), c.at("pursuer").get<int>()});
        for (const auto& c : j.at("events").at("collisions"))
          s.events.collisions.push_back(
              {detail::parse_collision_type(c.at("type")), c.at("a").get<int>(), c.at("b").get<int>()});
        s.terminal = detail::parse_terminal(j.at("terminal"));
        s.state.terminal = s.terminal;
        t.steps.push_back(std::move(s));
      } else {
        throw TrajectoryError("unknown record kind '" + kind + "'");
      }
    } catch (const TrajectoryError& e) {
      throw TrajectoryError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw TrajectoryError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
  }
  if (!have_header) throw TrajectoryError("trajectory log has no header record");
  return t;
}

// -- single episodes ------------------------------------------------------------------

/// Plays one episode with `team[i]` driving pursuer slot i. Learned policies act with
/// their mean action. `seed` fixes both the initial state and any policy randomness.
inline rl::EpisodeRecord run_episode(const EnvConfig& cfg, const std::vector<rl::PolicyRef>& team,
                                     std::uint64_t seed, TrajectoryWriter* log = nullptr,
                                     const RewardCfg& reward = {}) {
  if (static_cast<int>(team.size()) != cfg.players.num_p)
    throw std::invalid_argument("team has " + std::to_string(team.size()) + " policies for " +
                                std::to_string(cfg.players.num_p) + " pursuer slots");
  PursuitEnv env(cfg, reward);
  auto obs = env.reset(seed);
  std::vector<std::unique_ptr<rl::Controller>> ctl;
  rl::EpisodeRecord rec;
  for (std::size_t i = 0; i < team.size(); ++i) {
    ctl.push_back(rl::make_controller(team[i]));
    ctl.back()->reset(derive_seed(seed, "policy", i));
    rec.teammates.push_back(team[i].id);
  }
  if (log) log->header(cfg, seed, rec.teammates, env.state());
  std::vector<ActionCmd> actions(team.size());
  while (!env.done()) {
    for (std::size_t i = 0; i < team.size(); ++i)
      actions[i].steer = std::clamp(ctl[i]->act(cfg, env.state(), obs[i], int(i)), -1.0, 1.0);
    StepOutcome out = env.step(actions);
    rec.ret += out.reward;
    if (log) log->step(env.state(), actions, out);
    obs = std::move(out.observations);
  }
  rec.terminal = env.state().terminal;
  rec.steps = env.state().step;
  return rec;
}

}  // namespace pursuit
