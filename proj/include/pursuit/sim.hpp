#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"
#include "scripted.hpp"
#include "world.hpp"

namespace pursuit {

/// Reward constants. Capture dominates shaping over a 5 m arena.
struct RewardCfg {
  double capture = 10.0;        // per evader captured this step
  double shaping = 1.0;         // per meter of min-distance progress
  double proximity = 0.1;       // per agent per step inside the warning band
  double proximity_band = 0.1;  // band width beyond each collision threshold, m
  double collision = 10.0;      // terminal penalty
};

/// Observation vector layout for one pursuer:
///   self      [x, y, cos h, sin h]                  positions normalized to [-1, 1]
///   evaders   num_e x [distance, bearing, visible]
///   obstacle  [distance, bearing, visible]          nearest wall or obstacle
///   teammates (num_p - 1) x [distance, bearing, visible], slot order, self skipped
/// Distances are divided by the reception range, bearings (body frame) by pi.
/// Anything beyond reception range, and captured evaders, reads as all zeros.
struct ObservationLayout {
  int num_e = 0;
  int num_teammates = 0;

  static constexpr int kSelf = 4;
  static constexpr int kEntity = 3;

  explicit ObservationLayout(const EnvConfig& cfg)
      : num_e(cfg.players.num_e), num_teammates(cfg.players.num_p - 1) {}

  int self_offset() const { return 0; }
  int evader_offset() const { return kSelf; }
  int obstacle_offset() const { return kSelf + kEntity * num_e; }
  int teammate_offset() const { return obstacle_offset() + kEntity; }
  int size() const { return teammate_offset() + kEntity * num_teammates; }
};

using Observation = std::vector<double>;

struct StepOutcome {
  std::vector<Observation> observations;
  double reward = 0.0;
  Terminal terminal = Terminal::running;
  StepEvents events;
};

class SimError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Observation observe(const EnvConfig& cfg, const WorldState& s, int agent) {
  const ObservationLayout layout(cfg);
  Observation o(layout.size(), 0.0);
  const Pose& me = s.pursuers.at(agent);
  const Vec2 p = me.position();
  const double range = cfg.players.reception_range;

  o[0] = 2.0 * p.x / cfg.site.boundary_width - 1.0;
  o[1] = 2.0 * p.y / cfg.site.boundary_height - 1.0;
  o[2] = std::cos(me.heading);
  o[3] = std::sin(me.heading);
  for (int i = 0; i < 2; ++i) o[i] = std::clamp(o[i], -1.0, 1.0);

  auto entity = [&](int offset, Vec2 target, double dist) {
    if (dist > range) return;
    o[offset] = std::max(dist, 0.0) / range;
    const Vec2 rel = target - p;
    o[offset + 1] = (rel.x == 0.0 && rel.y == 0.0) ? 0.0 : wrap_angle(rel.angle() - me.heading) / kPi;
    o[offset + 2] = 1.0;
  };

  for (int e = 0; e < layout.num_e; ++e) {
    if (s.captured[e]) continue;
    const Vec2 q = s.evaders[e].position();
    entity(layout.evader_offset() + 3 * e, q, (q - p).norm());
  }
  const NearestSurface ns = nearest_surface(cfg, p);
  entity(layout.obstacle_offset(), ns.point, ns.clearance);
  int row = 0;
  for (int j = 0; j < cfg.players.num_p; ++j) {
    if (j == agent) continue;
    const Vec2 q = s.pursuers[j].position();
    entity(layout.teammate_offset() + 3 * row, q, (q - p).norm());
    ++row;
  }
  return o;
}

inline std::vector<Observation> observe_all(const EnvConfig& cfg, const WorldState& s) {
  std::vector<Observation> out;
  out.reserve(s.pursuers.size());
  for (int i = 0; i < static_cast<int>(s.pursuers.size()); ++i) out.push_back(observe(cfg, s, i));
  return out;
}

/// Drone-drone pairs closer than two safe radii; drone-obstacle and drone-wall
/// contacts with clearance below the safe radius. Evaders never collide.
inline std::vector<CollisionEvent> detect_collisions(const EnvConfig& cfg, const WorldState& s) {
  std::vector<CollisionEvent> out;
  const int n = static_cast<int>(s.pursuers.size());
  const double dd = cfg.drone_collision_distance();
  const double safe = cfg.task.safe_radius;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((s.pursuers[i].position() - s.pursuers[j].position()).norm() < dd)
        out.push_back({CollisionType::drone_drone, i, j});
  const double w = cfg.site.boundary_width, h = cfg.site.boundary_height;
  for (int i = 0; i < n; ++i) {
    const Vec2 p = s.pursuers[i].position();
    for (int k = 0; k < static_cast<int>(cfg.site.obstacles.size()); ++k)
      if (signed_distance(cfg.site.obstacles[k].shape, p) < safe)
        out.push_back({CollisionType::drone_obstacle, i, k});
    const double clearances[] = {p.x, w - p.x, p.y, h - p.y};
    for (int k = 0; k < 4; ++k)
      if (clearances[k] < safe) out.push_back({CollisionType::drone_wall, i, k});
  }
  return out;
}

/// Marks every live evader that some pursuer is within capture range of. The capturing
/// pursuer is the nearest one (lowest index on ties).
inline std::vector<CaptureEvent> apply_captures(const EnvConfig& cfg, WorldState& s) {
  std::vector<CaptureEvent> out;
  for (int e = 0; e < static_cast<int>(s.evaders.size()); ++e) {
    if (s.captured[e]) continue;
    const Vec2 q = s.evaders[e].position();
    int best = -1;
    double best_d = 0.0;
    for (int i = 0; i < static_cast<int>(s.pursuers.size()); ++i) {
      const double d = (s.pursuers[i].position() - q).norm();
      if (best < 0 || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    if (best >= 0 && best_d <= cfg.task.capture_range) {
      s.captured[e] = 1;
      out.push_back({e, best});
    }
  }
  return out;
}

/// Precedence within a step: collision > success > timeout.
inline Terminal is_terminal(const EnvConfig& cfg, const WorldState& s, bool collided) {
  if (collided) return Terminal::collision;
  if (s.num_captured() == static_cast<int>(s.evaders.size())) return Terminal::success;
  if (s.step >= cfg.task.task_horizon) return Terminal::timeout;
  return Terminal::running;
}

inline double min_pursuer_distance(const WorldState& s, int evader) {
  double best = std::numeric_limits<double>::infinity();
  const Vec2 q = s.evaders[evader].position();
  for (const auto& p : s.pursuers) best = std::min(best, (p.position() - q).norm());
  return best;
}

/// Number of pursuers within the warning band of a teammate, obstacle or wall
/// (but not yet colliding with it).
inline int count_in_proximity_band(const EnvConfig& cfg, const WorldState& s, double band) {
  const int n = static_cast<int>(s.pursuers.size());
  const double dd = cfg.drone_collision_distance();
  const double safe = cfg.task.safe_radius;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    const Vec2 p = s.pursuers[i].position();
    bool near = false;
    for (int j = 0; j < n && !near; ++j) {
      if (j == i) continue;
      const double d = (s.pursuers[j].position() - p).norm();
      near = d >= dd && d < dd + band;
    }
    if (!near)
      for_each_surface(cfg, p, [&](Vec2, double c) { near = near || (c >= safe && c < safe + band); });
    count += near;
  }
  return count;
}

inline double compute_reward(const EnvConfig& cfg, const WorldState& prev, const WorldState& next,
                             const StepEvents& events, const RewardCfg& rc = {}) {
  double r = rc.capture * static_cast<double>(events.captures.size());
  for (int e = 0; e < static_cast<int>(next.evaders.size()); ++e) {
    if (next.captured[e]) continue;
    r += rc.shaping * std::max(0.0, min_pursuer_distance(prev, e) - min_pursuer_distance(next, e));
  }
  r -= rc.proximity * count_in_proximity_band(cfg, next, rc.proximity_band);
  if (next.terminal == Terminal::collision) r -= rc.collision;
  return r;
}

namespace detail {

inline Pose advance(Pose p, double steer, double speed, double dt) {
  p.heading = wrap_angle(p.heading + steer * kTurnRate * dt);
  p.x += speed * std::cos(p.heading) * dt;
  p.y += speed * std::sin(p.heading) * dt;
  return p;
}

/// Evaders cannot leave the arena or enter obstacles; a blocked move keeps the old
/// position (the heading still turns).
inline Pose contain_evader(const EnvConfig& cfg, const Pose& from, Pose to) {
  const double m = cfg.task.safe_radius / 2;
  to.x = std::clamp(to.x, m, cfg.site.boundary_width - m);
  to.y = std::clamp(to.y, m, cfg.site.boundary_height - m);
  for (const auto& ob : cfg.site.obstacles)
    if (signed_distance(ob.shape, to.position()) < m) {
      to.x = from.x;
      to.y = from.y;
      break;
    }
  return to;
}

inline Vec2 sample_spawn(const EnvConfig& cfg, const Rect& region, const std::vector<Vec2>& taken,
                         double separation, Rng& rng) {
  constexpr int kMaxAttempts = 10000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Vec2 p{rng.uniform(region.x_min, region.x_max), rng.uniform(region.y_min, region.y_max)};
    bool ok = true;
    for (const auto& ob : cfg.site.obstacles)
      ok = ok && signed_distance(ob.shape, p) >= cfg.task.safe_radius;
    for (const auto& q : taken) ok = ok && (q - p).norm() >= separation;
    if (ok) return p;
  }
  throw SimError("respawn region infeasible after 10000 rejection attempts");
}

/// Evenly spaced along the horizontal mid-line of the region.
inline std::vector<Vec2> grid_spawn(const Rect& region, int n) {
  std::vector<Vec2> out;
  for (int i = 0; i < n; ++i)
    out.push_back({region.x_min + (i + 0.5) * region.width() / n, region.center().y});
  return out;
}

}  // namespace detail

/// Minimum spacing between freshly spawned drones of the same team.
inline double spawn_separation(const EnvConfig& cfg) {
  return cfg.drone_collision_distance() + cfg.task.safe_radius;
}

/// Initial state. Pursuers face the evader region's center; evaders get a uniform heading
/// under random respawn and face the pursuer region otherwise.
inline WorldState reset_state(const EnvConfig& cfg, std::uint64_t seed) {
  WorldState s;
  s.rng = Rng(seed, "env");
  const auto& pl = cfg.players;
  const Vec2 pc = pl.pursuer_region.center(), ec = pl.evader_region.center();
  const double pursuer_heading = wrap_angle((ec - pc).angle());
  const double evader_heading = wrap_angle((pc - ec).angle());

  if (pl.random_respawn) {
    const double sep = spawn_separation(cfg);
    std::vector<Vec2> taken;
    for (int i = 0; i < pl.num_p; ++i) {
      taken.push_back(detail::sample_spawn(cfg, pl.pursuer_region, taken, sep, s.rng));
      s.pursuers.push_back({taken.back().x, taken.back().y, pursuer_heading});
    }
    taken.clear();
    for (int e = 0; e < pl.num_e; ++e) {
      taken.push_back(detail::sample_spawn(cfg, pl.evader_region, taken, sep, s.rng));
      const double h = wrap_angle(s.rng.uniform(-kPi, kPi));
      s.evaders.push_back({taken.back().x, taken.back().y, h});
    }
  } else {
    for (auto p : detail::grid_spawn(pl.pursuer_region, pl.num_p))
      s.pursuers.push_back({p.x, p.y, pursuer_heading});
    for (auto p : detail::grid_spawn(pl.evader_region, pl.num_e))
      s.evaders.push_back({p.x, p.y, evader_heading});
  }
  s.captured.assign(pl.num_e, 0);
  return s;
}

/// Advances the world one tick. Order: pursuers move, evaders move (their commands are
/// decided on the pre-step state), then captures, collisions, reward and termination.
inline StepOutcome step_state(const EnvConfig& cfg, WorldState& s, const std::vector<ActionCmd>& actions,
                              const RewardCfg& rc = {}) {
  if (s.terminal != Terminal::running) throw SimError("step() on a terminal state");
  if (static_cast<int>(actions.size()) != cfg.players.num_p)
    throw SimError("expected " + std::to_string(cfg.players.num_p) + " actions, got " +
                   std::to_string(actions.size()));
  const WorldState prev = s;
  const double dt = cfg.task.dt();

  std::vector<ActionCmd> evader_cmds(s.evaders.size());
  for (int e = 0; e < static_cast<int>(s.evaders.size()); ++e)
    if (!s.captured[e]) evader_cmds[e] = evader_action(cfg, prev, e);

  for (int i = 0; i < cfg.players.num_p; ++i) {
    const double steer = actions[i].steer;
    if (!std::isfinite(steer)) throw SimError("non-finite action for pursuer " + std::to_string(i));
    s.pursuers[i] = detail::advance(s.pursuers[i], std::clamp(steer, -1.0, 1.0), cfg.players.velocity_p, dt);
  }
  for (int e = 0; e < static_cast<int>(s.evaders.size()); ++e) {
    if (s.captured[e]) continue;
    const Pose moved = detail::advance(s.evaders[e], evader_cmds[e].steer, cfg.players.velocity_e, dt);
    s.evaders[e] = detail::contain_evader(cfg, s.evaders[e], moved);
  }
  ++s.step;

  StepOutcome out;
  out.events.captures = apply_captures(cfg, s);
  out.events.collisions = detect_collisions(cfg, s);
  s.terminal = is_terminal(cfg, s, !out.events.collisions.empty());
  out.reward = compute_reward(cfg, prev, s, out.events, rc);
  out.terminal = s.terminal;
  out.observations = observe_all(cfg, s);
  return out;
}

/// One environment instance: an immutable config plus the evolving world state.
class PursuitEnv {
 public:
  explicit PursuitEnv(EnvConfig cfg, RewardCfg rc = {})
      : cfg_(std::move(cfg)), reward_(rc), layout_(cfg_) {}

  std::vector<Observation> reset(std::uint64_t seed) {
    state_ = reset_state(cfg_, seed);
    return observe_all(cfg_, state_);
  }

  StepOutcome step(const std::vector<ActionCmd>& actions) {
    return step_state(cfg_, state_, actions, reward_);
  }

  Observation observe(int agent) const { return pursuit::observe(cfg_, state_, agent); }

  const EnvConfig& config() const { return cfg_; }
  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const ObservationLayout& layout() const { return layout_; }
  int obs_size() const { return layout_.size(); }
  bool done() const { return state_.terminal != Terminal::running; }

 private:
  EnvConfig cfg_;
  RewardCfg reward_;
  ObservationLayout layout_;
  WorldState state_;
};

}  // namespace pursuit
