#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace overtake {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

using Polygon = std::vector<Vec2>;

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

inline Vec2 rotate(Vec2 a, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle + std::numbers::pi, two_pi);
  if (wrapped <= 0.0) wrapped += two_pi;
  return wrapped - std::numbers::pi;
}

inline double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

/// Oriented rectangle centred at `center`, counter-clockwise vertex order.
inline Polygon oriented_rectangle(Vec2 center, double heading, double length, double width) {
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return {center + rotate({hl, -hw}, heading), center + rotate({hl, hw}, heading),
          center + rotate({-hl, hw}, heading), center + rotate({-hl, -hw}, heading)};
}

inline double signed_area(std::span<const Vec2> poly) {
  double area = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    area += cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * area;
}

inline double area(std::span<const Vec2> poly) { return std::abs(signed_area(poly)); }

/// Ray casting, with points on an edge (within `tol`) counted as inside.
inline bool point_in_polygon(Vec2 p, std::span<const Vec2> poly, double tol = 1e-9) {
  const std::size_t n = poly.size();
  if (n == 0) return false;
  if (n == 1) return distance(p, poly[0]) <= tol;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[j];
    const Vec2 b = poly[i];
    if (distance_to_segment(p, a, b) <= tol) return true;
    if ((b.y > p.y) != (a.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

/// Distance from `p` to a convex polygon; zero on or inside it.
inline double distance_to_convex(Vec2 p, std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n == 0) return std::numeric_limits<double>::infinity();
  if (n == 1) return distance(p, poly[0]);
  const double orientation = signed_area(poly) >= 0.0 ? 1.0 : -1.0;
  bool inside = n >= 3;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    if (orientation * cross(b - a, p - a) < 0.0) inside = false;
    best = std::min(best, distance_to_segment(p, a, b));
  }
  return inside ? 0.0 : best;
}

namespace detail {

inline void project(std::span<const Vec2> poly, Vec2 axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const Vec2& v : poly) {
    const double d = dot(v, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
}

inline bool separated_along_edges(std::span<const Vec2> a, std::span<const Vec2> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 e = a[(i + 1) % a.size()] - a[i];
    const Vec2 axis{-e.y, e.x};
    double a_lo, a_hi, b_lo, b_hi;
    project(a, axis, a_lo, a_hi);
    project(b, axis, b_lo, b_hi);
    if (a_hi < b_lo || b_hi < a_lo) return true;
  }
  return false;
}

}  // namespace detail

/// True when the two convex polygons share at least one point (separating axis test).
inline bool convex_overlap(std::span<const Vec2> a, std::span<const Vec2> b) {
  return !detail::separated_along_edges(a, b) && !detail::separated_along_edges(b, a);
}

/// Exact distance between two convex polygons; zero when they touch or overlap.
inline double convex_distance(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (convex_overlap(a, b)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      best = std::min(best, distance_to_segment(a[i], b[j], b[(j + 1) % b.size()]));
      best = std::min(best, distance_to_segment(b[j], a[i], a[(i + 1) % a.size()]));
    }
  }
  return best;
}

inline bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const double d1 = cross(q2 - q1, p1 - q1);
  const double d2 = cross(q2 - q1, p2 - q1);
  const double d3 = cross(p2 - p1, q1 - p1);
  const double d4 = cross(p2 - p1, q2 - p1);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

/// O(n^2) check that no two non-adjacent edges cross.
inline bool is_simple(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

}  // namespace overtake
