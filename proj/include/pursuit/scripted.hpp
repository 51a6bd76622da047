#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <string_view>

#include "world.hpp"

namespace pursuit {

enum class ScriptedKind { greedy, vicsek, evader };

/// Constants for the non-learning policies. Ranges are in meters.
struct ScriptedPolicySpec {
  ScriptedKind kind = ScriptedKind::greedy;
  double evasion_range = 0.5;         // greedy
  double agent_range = 0.5;           // vicsek
  double obstacle_range = 0.4;        // vicsek
  double agent_gain = 1.0;            // vicsek
  double obstacle_gain = 1.0;         // vicsek, evader walls/obstacles
  double evader_wall_range = 0.5;     // evader
  double evader_pursuer_gain = 1.0;   // evader

  static ScriptedPolicySpec greedy() { return {ScriptedKind::greedy}; }
  static ScriptedPolicySpec vicsek() { return {ScriptedKind::vicsek}; }
  static ScriptedPolicySpec evader() { return {ScriptedKind::evader}; }

  bool valid() const {
    return evasion_range > 0 && agent_range > 0 && obstacle_range > 0 && evader_wall_range > 0 &&
           agent_gain >= 0 && obstacle_gain >= 0 && evader_pursuer_gain >= 0;
  }
};

inline constexpr std::string_view kGreedyId = "greedy";
inline constexpr std::string_view kVicsekId = "vicsek";
inline constexpr std::string_view kEvaderId = "evader:potential";

namespace detail {

inline Vec2 pursuit_attraction(const EnvConfig& cfg, const WorldState& s, Vec2 p) {
  const int target = nearest_live_evader(s, p);
  const Vec2 goal = target >= 0 ? s.evaders[target].position()
                                : Vec2{cfg.site.boundary_width / 2, cfg.site.boundary_height / 2};
  return unit(goal - p);
}

}  // namespace detail

/// Heads for the nearest uncaptured evader; threats (teammates, obstacles, walls) inside
/// the evasion range bend the desired heading away from them, more strongly when closer.
inline ActionCmd greedy_action(const EnvConfig& cfg, const WorldState& s, int agent,
                               const ScriptedPolicySpec& spec = ScriptedPolicySpec::greedy()) {
  const Pose& me = s.pursuers[agent];
  const Vec2 p = me.position();
  Vec2 desired = detail::pursuit_attraction(cfg, s, p);
  const double range = spec.evasion_range;
  auto deflect = [&](Vec2 threat, double d) {
    if (d >= range) return;
    const double w = std::min(2.0 * (range - d) / std::max(d, 1e-3), 10.0);
    desired += unit(p - threat) * w;
  };
  for (int j = 0; j < static_cast<int>(s.pursuers.size()); ++j) {
    if (j == agent) continue;
    const Vec2 q = s.pursuers[j].position();
    deflect(q, (q - p).norm());
  }
  for_each_surface(cfg, p, [&](Vec2 q, double c) { deflect(q, c); });
  return steer_toward(desired, me.heading, cfg.task.dt());
}

/// Unit attraction toward the nearest evader plus (1/d - 1/range) repulsions from
/// teammates, obstacles and walls; only the orientation of the sum is used.
inline ActionCmd vicsek_action(const EnvConfig& cfg, const WorldState& s, int agent,
                               const ScriptedPolicySpec& spec = ScriptedPolicySpec::vicsek()) {
  const Pose& me = s.pursuers[agent];
  const Vec2 p = me.position();
  Vec2 desired = detail::pursuit_attraction(cfg, s, p);
  for (int j = 0; j < static_cast<int>(s.pursuers.size()); ++j) {
    if (j == agent) continue;
    const Vec2 q = s.pursuers[j].position();
    const double d = (q - p).norm();
    if (d < spec.agent_range && d > 0)
      desired += unit(p - q) * (spec.agent_gain * (1.0 / d - 1.0 / spec.agent_range));
  }
  for_each_surface(cfg, p, [&](Vec2 q, double c) {
    if (c < spec.obstacle_range && c > 0)
      desired += unit(p - q) * (spec.obstacle_gain * (1.0 / c - 1.0 / spec.obstacle_range));
  });
  return steer_toward(desired, me.heading, cfg.task.dt());
}

/// Potential-field escape: 1/d^2 repulsion from every pursuer within reception range and
/// (1/c - 1/range) repulsion from walls and obstacles closer than evader_wall_range.
inline Vec2 evader_field(const EnvConfig& cfg, const WorldState& s, int evader,
                         const ScriptedPolicySpec& spec = ScriptedPolicySpec::evader()) {
  const Vec2 p = s.evaders[evader].position();
  Vec2 field;
  for (const auto& pu : s.pursuers) {
    const Vec2 d = p - pu.position();
    const double n = d.norm();
    if (n <= cfg.players.reception_range && n > 0)
      field += d * (spec.evader_pursuer_gain / (n * n * n));
  }
  for_each_surface(cfg, p, [&](Vec2 q, double c) {
    if (c < spec.evader_wall_range && c > 0)
      field += unit(p - q) * (spec.obstacle_gain * (1.0 / c - 1.0 / spec.evader_wall_range));
  });
  return field;
}

inline ActionCmd evader_action(const EnvConfig& cfg, const WorldState& s, int evader,
                               const ScriptedPolicySpec& spec = ScriptedPolicySpec::evader()) {
  return steer_toward(evader_field(cfg, s, evader, spec), s.evaders[evader].heading,
                      cfg.task.dt());
}

inline ScriptedPolicySpec scripted_spec_from_id(std::string_view id) {
  if (id == kGreedyId) return ScriptedPolicySpec::greedy();
  if (id == kVicsekId) return ScriptedPolicySpec::vicsek();
  if (id == kEvaderId) return ScriptedPolicySpec::evader();
  throw std::invalid_argument("unknown scripted policy id: " + std::string(id));
}

inline bool is_scripted_pursuer_id(std::string_view id) { return id == kGreedyId || id == kVicsekId; }

inline ActionCmd scripted_pursuer_action(const EnvConfig& cfg, const WorldState& s, int agent,
                                         const ScriptedPolicySpec& spec) {
  return spec.kind == ScriptedKind::vicsek ? vicsek_action(cfg, s, agent, spec)
                                           : greedy_action(cfg, s, agent, spec);
}

}  // namespace pursuit
