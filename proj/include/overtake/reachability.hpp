#pragma once

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <vector>

#include "overtake/dynamics.hpp"
#include "overtake/geometry.hpp"
#include "overtake/riskmap.hpp"

namespace overtake {

struct ReachablePolygon {
  Polygon boundary;
  double horizon = 1.0;
  bool degenerate = false;  // v_ref == 0, boundary collapses to a tiny disc
};

struct SafeReachableSet {
  std::vector<Vec2> points;

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

namespace detail {

inline std::vector<Vec2> constant_steer_path(const VehicleState& start, double delta,
                                             const VehicleGeometry& geom, double horizon,
                                             int samples) {
  std::vector<Vec2> path;
  path.reserve(samples);
  VehicleState s = start;
  const double dt = horizon / samples;
  for (int k = 0; k < samples; ++k) {
    s = step(s, {0.0, delta}, geom, dt);
    path.push_back(s.position());
  }
  return path;
}

}  // namespace detail

/// Region bounded by the extreme-steering arcs at constant reference speed, closed by the
/// fan of arc endpoints (which passes through the straight-ahead endpoint) and the ego.
inline ReachablePolygon reachable_polygon(const VehicleState& ego, double v_ref,
                                          const ControlLimits& limits,
                                          const VehicleGeometry& geom, double horizon,
                                          int samples = 10, double degenerate_radius = 1e-3) {
  ReachablePolygon out;
  out.horizon = horizon;
  if (!(v_ref > 0.0)) {
    out.degenerate = true;
    constexpr int kSides = 8;
    for (int i = 0; i < kSides; ++i) {
      const double angle = 2.0 * std::numbers::pi * i / kSides;
      out.boundary.push_back(ego.position() +
                             degenerate_radius * Vec2{std::cos(angle), std::sin(angle)});
    }
    return out;
  }

  VehicleState start = ego;
  start.v = v_ref;
  const auto left = detail::constant_steer_path(start, limits.delta_max, geom, horizon, samples);
  const auto right = detail::constant_steer_path(start, limits.delta_min, geom, horizon, samples);

  out.boundary.push_back(ego.position());
  out.boundary.insert(out.boundary.end(), left.begin(), left.end());
  // Interior fan endpoints from delta_max towards delta_min; index `samples` is delta = 0
  // for symmetric limits.
  const int fan = 2 * samples;
  for (int j = 1; j < fan; ++j) {
    const double delta =
        limits.delta_max + (limits.delta_min - limits.delta_max) * static_cast<double>(j) / fan;
    out.boundary.push_back(detail::constant_steer_path(start, delta, geom, horizon, samples).back());
  }
  out.boundary.insert(out.boundary.end(), right.rbegin(), right.rend());
  return out;
}

inline SafeReachableSet intersect(const SafeSet& safe, const ReachablePolygon& reach) {
  SafeReachableSet out;
  for (const Vec2& p : safe.points) {
    if (point_in_polygon(p, reach.boundary)) out.points.push_back(p);
  }
  return out;
}

inline void write_polygon_csv(std::ostream& out, const Polygon& poly) {
  out << "index,x,y\n";
  char buf[96];
  for (std::size_t i = 0; i < poly.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", i, poly[i].x, poly[i].y);
    out << buf;
  }
}

}  // namespace overtake
