#pragma once

#include <algorithm>
#include <cstdint>
#include <string_view>
#include <vector>

#include "config.hpp"
#include "geometry.hpp"
#include "rng.hpp"

namespace pursuit {

/// Maximum turn rate for every drone, rad/s.
inline constexpr double kTurnRate = kPi;

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // (-pi, pi]

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

enum class Terminal { running, success, collision, timeout };

inline std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::running: return "running";
    case Terminal::success: return "success";
    case Terminal::collision: return "collision";
    case Terminal::timeout: return "timeout";
  }
  return "?";
}

struct WorldState {
  int step = 0;
  std::vector<Pose> pursuers;
  std::vector<Pose> evaders;
  std::vector<std::uint8_t> captured;
  Terminal terminal = Terminal::running;
  Rng rng;

  int num_captured() const {
    int n = 0;
    for (auto c : captured) n += c != 0;
    return n;
  }
  bool operator==(const WorldState&) const = default;
};

/// Steering command in [-1, 1]; scaled by kTurnRate * dt in the simulator.
struct ActionCmd {
  double steer = 0.0;

  static ActionCmd clamped(double s) { return {std::clamp(s, -1.0, 1.0)}; }
  bool operator==(const ActionCmd&) const = default;
};

enum class CollisionType { drone_drone, drone_obstacle, drone_wall };

inline std::string_view to_string(CollisionType t) {
  switch (t) {
    case CollisionType::drone_drone: return "drone-drone";
    case CollisionType::drone_obstacle: return "drone-obstacle";
    case CollisionType::drone_wall: return "drone-wall";
  }
  return "?";
}

enum class Wall { left = 0, right = 1, bottom = 2, top = 3 };

struct CaptureEvent {
  int evader = 0;
  int pursuer = 0;
  bool operator==(const CaptureEvent&) const = default;
};

/// `a` is always a pursuer. `b` is the other pursuer, the obstacle index, or the Wall index.
struct CollisionEvent {
  CollisionType type = CollisionType::drone_drone;
  int a = 0;
  int b = 0;
  bool operator==(const CollisionEvent&) const = default;
};

struct StepEvents {
  std::vector<CaptureEvent> captures;
  std::vector<CollisionEvent> collisions;
  bool operator==(const StepEvents&) const = default;
};

/// Nearest point of the arena walls or any obstacle to p, with its clearance.
struct NearestSurface {
  Vec2 point;
  double clearance = 0.0;
};

inline NearestSurface nearest_surface(const EnvConfig& cfg, Vec2 p) {
  const double w = cfg.site.boundary_width, h = cfg.site.boundary_height;
  NearestSurface best{{0.0, p.y}, p.x};
  auto consider = [&](Vec2 q, double c) {
    if (c < best.clearance) best = {q, c};
  };
  consider({w, p.y}, w - p.x);
  consider({p.x, 0.0}, p.y);
  consider({p.x, h}, h - p.y);
  for (const auto& ob : cfg.site.obstacles)
    consider(closest_point(ob.shape, p), signed_distance(ob.shape, p));
  return best;
}

/// Calls fn(point, clearance) for every wall and obstacle.
template <typename Fn>
void for_each_surface(const EnvConfig& cfg, Vec2 p, Fn&& fn) {
  const double w = cfg.site.boundary_width, h = cfg.site.boundary_height;
  fn(Vec2{0.0, p.y}, p.x);
  fn(Vec2{w, p.y}, w - p.x);
  fn(Vec2{p.x, 0.0}, p.y);
  fn(Vec2{p.x, h}, h - p.y);
  for (const auto& ob : cfg.site.obstacles) fn(closest_point(ob.shape, p), signed_distance(ob.shape, p));
}

/// Index of the nearest uncaptured evader to p (lowest index on ties), or -1.
inline int nearest_live_evader(const WorldState& s, Vec2 p) {
  int best = -1;
  double best_d = 0.0;
  for (int e = 0; e < static_cast<int>(s.evaders.size()); ++e) {
    if (s.captured[e]) continue;
    const double d = (s.evaders[e].position() - p).norm();
    if (best < 0 || d < best_d) {
      best = e;
      best_d = d;
    }
  }
  return best;
}

/// Converts a desired direction into a steering command for a drone with the given heading.
inline ActionCmd steer_toward(Vec2 desired, double heading, double dt) {
  if (desired.x == 0.0 && desired.y == 0.0) return {0.0};
  const double err = wrap_angle(desired.angle() - heading);
  return ActionCmd::clamped(err / (kTurnRate * dt));
}

}  // namespace pursuit
