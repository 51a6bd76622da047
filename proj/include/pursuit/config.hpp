#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"

namespace pursuit {

using Json = nlohmann::ordered_json;

struct PlayersCfg {
  int num_p = 4;
  int num_e = 2;
  int num_ctrl = 2;
  int num_unctrl = 2;
  bool random_respawn = true;
  Rect pursuer_region;
  Rect evader_region;
  double reception_range = 2.0;
  double velocity_p = 0.3;
  double velocity_e = 0.6;
  std::vector<std::string> unseen_drones;

  bool operator==(const PlayersCfg&) const = default;
};

struct NamedObstacle {
  std::string name;
  Obstacle shape;

  bool operator==(const NamedObstacle&) const = default;
};

struct SiteCfg {
  double boundary_width = 3.6;
  double boundary_height = 5.0;
  std::vector<NamedObstacle> obstacles;

  Rect boundary() const { return {0.0, 0.0, boundary_width, boundary_height}; }
  bool operator==(const SiteCfg&) const = default;
};

struct TaskCfg {
  std::string task_name;
  double capture_range = 0.2;
  double safe_radius = 0.1;
  int task_horizon = 1000;  // steps
  double fps = 10.0;

  double dt() const { return 1.0 / fps; }
  bool operator==(const TaskCfg&) const = default;
};

struct EnvConfig {
  PlayersCfg players;
  SiteCfg site;
  TaskCfg task;

  /// Drone-drone collision threshold: two safe radii.
  double drone_collision_distance() const { return 2.0 * task.safe_radius; }
  bool operator==(const EnvConfig&) const = default;
};

/// Structural problem in a config document (syntax, missing field, wrong type,
/// unknown key). `path` is a JSON pointer to the offending location.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct Violation {
  std::string path;
  std::string message;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> v)
      : std::runtime_error(summary(v)), violations_(std::move(v)) {}
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  static std::string summary(const std::vector<Violation>& v) {
    std::string s = "invalid config";
    for (const auto& x : v) s += "\n  " + x.path + ": " + x.message;
    return s;
  }
  std::vector<Violation> violations_;
};

namespace detail {

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected object");
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) throw ConfigError(path_ + "/" + key, "unknown key");
  }

  const Json& at(const std::string& key) {
    seen_[key] = true;
    if (!j_.contains(key)) throw ConfigError(path_ + "/" + key, "missing required field");
    return j_.at(key);
  }
  std::string child(const std::string& key) const { return path_ + "/" + key; }

  double number(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected number");
    return v.get<double>();
  }
  int integer(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(child(key), "expected integer");
    const auto x = v.get<std::int64_t>();
    if (x < -(1 << 30) || x > (1 << 30)) throw ConfigError(child(key), "integer out of range");
    return static_cast<int>(x);
  }
  bool boolean(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(child(key), "expected boolean");
    return v.get<bool>();
  }
  std::string string(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_string()) throw ConfigError(child(key), "expected string");
    return v.get<std::string>();
  }
  Vec2 pair(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ConfigError(child(key), "expected [x, y] number pair");
    return {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  const Json& j_;
  std::string path_;
  std::map<std::string, bool> seen_;
};

inline Rect read_rect(const Json& j, const std::string& path) {
  Reader r(j, path);
  Rect out;
  out.x_min = r.number("x_min");
  out.y_min = r.number("y_min");
  out.x_max = r.number("x_max");
  out.y_max = r.number("y_max");
  r.finish();
  return out;
}

inline Json write_rect(const Rect& r) {
  return Json{{"x_min", r.x_min}, {"y_min", r.y_min}, {"x_max", r.x_max}, {"y_max", r.y_max}};
}

inline Obstacle read_obstacle(const Json& j, const std::string& path) {
  Reader r(j, path);
  Obstacle ob;
  const std::string shape = r.string("shape");
  ob.center = r.pair("center");
  if (shape == "circle") {
    ob.kind = ShapeKind::circle;
    ob.radius = r.number("radius");
  } else if (shape == "rectangle") {
    ob.kind = ShapeKind::rectangle;
    ob.half_extents = r.pair("half_extents");
  } else {
    throw ConfigError(r.child("shape"), "expected \"circle\" or \"rectangle\"");
  }
  r.finish();
  return ob;
}

}  // namespace detail

/// Reads a config document without checking semantic invariants.
/// Throws ConfigError on syntax errors, missing fields, type mismatches and unknown keys.
inline EnvConfig read_config(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("/", std::string("syntax error: ") + e.what());
  }

  EnvConfig cfg;
  detail::Reader root(doc, "");
  {
    const std::string p = "/players";
    detail::Reader r(root.at("players"), p);
    auto& pl = cfg.players;
    pl.num_p = r.integer("num_p");
    pl.num_e = r.integer("num_e");
    pl.num_ctrl = r.integer("num_ctrl");
    pl.num_unctrl = r.integer("num_unctrl");
    pl.random_respawn = r.boolean("random_respawn");
    {
      detail::Reader rr(r.at("respawn_region"), p + "/respawn_region");
      pl.pursuer_region = detail::read_rect(rr.at("pursuer"), rr.child("pursuer"));
      pl.evader_region = detail::read_rect(rr.at("evader"), rr.child("evader"));
      rr.finish();
    }
    pl.reception_range = r.number("reception_range");
    pl.velocity_p = r.number("velocity_p");
    pl.velocity_e = r.number("velocity_e");
    const Json& drones = r.at("unseen_drones");
    if (!drones.is_array()) throw ConfigError(r.child("unseen_drones"), "expected array");
    for (std::size_t i = 0; i < drones.size(); ++i) {
      if (!drones[i].is_string())
        throw ConfigError(r.child("unseen_drones") + "/" + std::to_string(i), "expected string");
      pl.unseen_drones.push_back(drones[i].get<std::string>());
    }
    r.finish();
  }
  {
    const std::string p = "/site";
    detail::Reader r(root.at("site"), p);
    {
      detail::Reader b(r.at("boundary"), p + "/boundary");
      cfg.site.boundary_width = b.number("width");
      cfg.site.boundary_height = b.number("height");
      b.finish();
    }
    const Json& obs = r.at("obstacles");
    if (!obs.is_object()) throw ConfigError(p + "/obstacles", "expected object");
    for (const auto& [name, value] : obs.items())
      cfg.site.obstacles.push_back({name, detail::read_obstacle(value, p + "/obstacles/" + name)});
    r.finish();
  }
  {
    detail::Reader r(root.at("task"), "/task");
    cfg.task.task_name = r.string("task_name");
    cfg.task.capture_range = r.number("capture_range");
    cfg.task.safe_radius = r.number("safe_radius");
    cfg.task.task_horizon = r.integer("task_horizon");
    cfg.task.fps = r.number("fps");
    r.finish();
  }
  root.finish();
  return cfg;
}

inline Json to_json(const EnvConfig& cfg) {
  const auto& pl = cfg.players;
  Json players{{"num_p", pl.num_p},
               {"num_e", pl.num_e},
               {"num_ctrl", pl.num_ctrl},
               {"num_unctrl", pl.num_unctrl},
               {"random_respawn", pl.random_respawn},
               {"respawn_region",
                Json{{"pursuer", detail::write_rect(pl.pursuer_region)},
                     {"evader", detail::write_rect(pl.evader_region)}}},
               {"reception_range", pl.reception_range},
               {"velocity_p", pl.velocity_p},
               {"velocity_e", pl.velocity_e},
               {"unseen_drones", pl.unseen_drones}};
  Json obstacles = Json::object();
  for (const auto& [name, ob] : cfg.site.obstacles) {
    Json o{{"shape", std::string(ob.kind_name())}, {"center", {ob.center.x, ob.center.y}}};
    if (ob.kind == ShapeKind::circle)
      o["radius"] = ob.radius;
    else
      o["half_extents"] = {ob.half_extents.x, ob.half_extents.y};
    obstacles[name] = std::move(o);
  }
  Json site{{"boundary", Json{{"width", cfg.site.boundary_width},
                              {"height", cfg.site.boundary_height}}},
            {"obstacles", std::move(obstacles)}};
  Json task{{"task_name", cfg.task.task_name},
            {"capture_range", cfg.task.capture_range},
            {"safe_radius", cfg.task.safe_radius},
            {"task_horizon", cfg.task.task_horizon},
            {"fps", cfg.task.fps}};
  return Json{{"players", std::move(players)}, {"site", std::move(site)}, {"task", std::move(task)}};
}

inline std::string serialize_config(const EnvConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

/// Returns every violated invariant (empty when the config is valid).
inline std::vector<Violation> validate_config(const EnvConfig& cfg) {
  std::vector<Violation> out;
  auto check = [&](bool ok, std::string path, std::string msg) {
    if (!ok) out.push_back({std::move(path), std::move(msg)});
  };
  const auto& pl = cfg.players;
  const auto& site = cfg.site;
  const auto& task = cfg.task;

  check(pl.num_p >= 1, "/players/num_p", "num_p must be positive");
  check(pl.num_e >= 1, "/players/num_e", "num_e must be positive");
  check(pl.num_ctrl >= 0, "/players/num_ctrl", "num_ctrl must be non-negative");
  check(pl.num_unctrl >= 0, "/players/num_unctrl", "num_unctrl must be non-negative");
  check(pl.num_ctrl + pl.num_unctrl == pl.num_p, "/players", "num_ctrl+num_unctrl != num_p");
  check(pl.velocity_p > 0, "/players/velocity_p", "velocity_p must be positive");
  check(pl.velocity_e > 0, "/players/velocity_e", "velocity_e must be positive");
  check(pl.reception_range > 0, "/players/reception_range", "reception_range must be positive");

  check(site.boundary_width > 0, "/site/boundary/width", "boundary width must be positive");
  check(site.boundary_height > 0, "/site/boundary/height", "boundary height must be positive");

  check(task.capture_range > 0, "/task/capture_range", "capture_range must be positive");
  check(task.safe_radius > 0, "/task/safe_radius", "safe_radius must be positive");
  check(task.task_horizon >= 1, "/task/task_horizon", "task_horizon must be at least 1");
  check(task.fps > 0, "/task/fps", "fps must be positive");

  const Rect boundary = site.boundary();
  auto inside = [&](const Rect& r) {
    return r.x_min >= boundary.x_min && r.y_min >= boundary.y_min && r.x_max <= boundary.x_max &&
           r.y_max <= boundary.y_max;
  };
  const std::pair<const char*, const Rect*> regions[] = {{"pursuer", &pl.pursuer_region},
                                                         {"evader", &pl.evader_region}};
  for (const auto& [name, r] : regions) {
    const std::string path = std::string("/players/respawn_region/") + name;
    check(r->x_min < r->x_max && r->y_min < r->y_max, path, "respawn region is empty");
    check(inside(*r), path, "respawn region outside boundary");
  }

  for (const auto& [name, ob] : site.obstacles) {
    const std::string path = "/site/obstacles/" + name;
    const bool sized = ob.kind == ShapeKind::circle
                           ? ob.radius > 0
                           : ob.half_extents.x > 0 && ob.half_extents.y > 0;
    check(sized, path, "obstacle size must be positive");
    if (!sized) continue;
    check(inside(bounds(ob)), path, "obstacle outside boundary");
    for (const auto& [rname, r] : regions) {
      if (distance(*r, ob) < task.safe_radius)
        out.push_back({path, "respawn region intersects obstacle"});
    }
  }
  return out;
}

/// Reads and validates; throws ConfigError or ValidationError.
inline EnvConfig parse_config(std::string_view text) {
  EnvConfig cfg = read_config(text);
  if (auto v = validate_config(cfg); !v.empty()) throw ValidationError(std::move(v));
  return cfg;
}

inline constexpr std::string_view kBuiltinEnvNames[] = {"4p2e3o", "4p2e1o", "4p2e5o", "4p3e5o"};

/// The four shipped scenarios on a 3.6 m x 5 m arena. Obstacle layouts are
/// mirror-symmetric about x = 1.8 and keep at least 0.8 m between inflated obstacles.
inline EnvConfig builtin_env(std::string_view name) {
  auto rect = [](double cx, double cy, double h) {
    return Obstacle{ShapeKind::rectangle, {cx, cy}, 0.0, {h, h}};
  };
  auto circle = [](double cx, double cy, double r) {
    return Obstacle{ShapeKind::circle, {cx, cy}, r, {}};
  };

  EnvConfig cfg;
  cfg.players.unseen_drones = {"greedy"};
  cfg.players.pursuer_region = {0.2, 0.2, 3.4, 0.8};
  cfg.players.evader_region = {0.2, 4.2, 3.4, 4.8};
  cfg.task.task_name = std::string(name);

  std::vector<Obstacle> obs;
  if (name == "4p2e3o") {
    obs = {rect(0.8, 3.0, 0.2), rect(2.8, 3.0, 0.2), circle(1.8, 1.8, 0.2)};
  } else if (name == "4p2e1o") {
    obs = {circle(1.8, 2.5, 0.3)};
  } else if (name == "4p2e5o" || name == "4p3e5o") {
    obs = {rect(0.7, 1.6, 0.15), rect(2.9, 1.6, 0.15), rect(0.7, 3.4, 0.15),
           rect(2.9, 3.4, 0.15), circle(1.8, 2.5, 0.15)};
    if (name == "4p3e5o") cfg.players.num_e = 3;
  } else {
    throw std::invalid_argument("unknown built-in environment: " + std::string(name));
  }
  for (std::size_t i = 0; i < obs.size(); ++i)
    cfg.site.obstacles.push_back({"obstacle" + std::to_string(i + 1), obs[i]});
  return cfg;
}

inline bool is_builtin_env(std::string_view name) {
  for (auto n : kBuiltinEnvNames)
    if (n == name) return true;
  return false;
}

}  // namespace pursuit
