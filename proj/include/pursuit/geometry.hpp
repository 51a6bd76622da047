#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string_view>

namespace pursuit {

inline constexpr double kPi = std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double angle() const { return std::atan2(y, x); }
};

inline Vec2 unit(Vec2 v) {
  const double n = v.norm();
  return n > 0.0 ? v * (1.0 / n) : Vec2{};
}

inline Vec2 heading_vector(double heading) { return {std::cos(heading), std::sin(heading)}; }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

/// Axis-aligned rectangle given by its corners.
struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  constexpr double width() const { return x_max - x_min; }
  constexpr double height() const { return y_max - y_min; }
  constexpr Vec2 center() const { return {(x_min + x_max) / 2, (y_min + y_max) / 2}; }
  constexpr bool contains(Vec2 p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  constexpr bool operator==(const Rect&) const = default;
};

enum class ShapeKind { circle, rectangle };

struct Obstacle {
  std::string_view kind_name() const { return kind == ShapeKind::circle ? "circle" : "rectangle"; }

  ShapeKind kind = ShapeKind::circle;
  Vec2 center;
  double radius = 0.0;   // circle
  Vec2 half_extents;     // rectangle

  bool operator==(const Obstacle&) const = default;
};

/// Closest point on the obstacle's boundary-or-interior to p (p itself when inside).
inline Vec2 closest_point(const Obstacle& ob, Vec2 p) {
  if (ob.kind == ShapeKind::circle) {
    const Vec2 d = p - ob.center;
    const double n = d.norm();
    if (n <= ob.radius) return p;
    return ob.center + d * (ob.radius / n);
  }
  return {std::clamp(p.x, ob.center.x - ob.half_extents.x, ob.center.x + ob.half_extents.x),
          std::clamp(p.y, ob.center.y - ob.half_extents.y, ob.center.y + ob.half_extents.y)};
}

/// Signed distance from p to the obstacle surface (negative inside).
inline double signed_distance(const Obstacle& ob, Vec2 p) {
  if (ob.kind == ShapeKind::circle) return (p - ob.center).norm() - ob.radius;
  const double qx = std::abs(p.x - ob.center.x) - ob.half_extents.x;
  const double qy = std::abs(p.y - ob.center.y) - ob.half_extents.y;
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  return outside + std::min(std::max(qx, qy), 0.0);
}

/// Distance between a rectangle and an obstacle (0 when they overlap).
inline double distance(const Rect& r, const Obstacle& ob) {
  if (ob.kind == ShapeKind::circle) {
    const Vec2 c = ob.center;
    const double dx = std::max({r.x_min - c.x, 0.0, c.x - r.x_max});
    const double dy = std::max({r.y_min - c.y, 0.0, c.y - r.y_max});
    return std::max(std::hypot(dx, dy) - ob.radius, 0.0);
  }
  const double gx = std::max({r.x_min - (ob.center.x + ob.half_extents.x), 0.0,
                              (ob.center.x - ob.half_extents.x) - r.x_max});
  const double gy = std::max({r.y_min - (ob.center.y + ob.half_extents.y), 0.0,
                              (ob.center.y - ob.half_extents.y) - r.y_max});
  return std::hypot(gx, gy);
}

/// Distance between two obstacles (0 when they overlap).
inline double distance(const Obstacle& a, const Obstacle& b) {
  if (a.kind == ShapeKind::circle && b.kind == ShapeKind::circle)
    return std::max((a.center - b.center).norm() - a.radius - b.radius, 0.0);
  if (a.kind == ShapeKind::rectangle) {
    const Rect ra{a.center.x - a.half_extents.x, a.center.y - a.half_extents.y,
                  a.center.x + a.half_extents.x, a.center.y + a.half_extents.y};
    return distance(ra, b);
  }
  return distance(b, a);
}

/// Bounding box of an obstacle.
inline Rect bounds(const Obstacle& ob) {
  const Vec2 h = ob.kind == ShapeKind::circle ? Vec2{ob.radius, ob.radius} : ob.half_extents;
  return {ob.center.x - h.x, ob.center.y - h.y, ob.center.x + h.x, ob.center.y + h.y};
}

}  // namespace pursuit
