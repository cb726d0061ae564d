#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "overtake/dynamics.hpp"
#include "overtake/geometry.hpp"
#include "overtake/road.hpp"

namespace overtake {

struct ObstacleVehicle {
  VehicleState state;
  VehicleGeometry geom;
  int id = 0;

  Polygon body() const {
    return oriented_rectangle(state.position(), state.psi, geom.length, geom.width);
  }
};

/// Potential-field shape, velocity-triangle rule and grid layout for the risk map.
struct RiskParams {
  double obstacle_gain = 10.0;    // A_o
  double obstacle_decay = 0.5;    // alpha_o, 1/m
  double edge_gain = 4.0;         // A_r
  double edge_decay = 1.0;        // alpha_r, 1/m
  double threshold = 1.0;         // U_threshold
  double cap = 1e6;               // U_cap
  double epsilon = 1e-3;          // m
  double triangle_min = 2.0;      // m
  double triangle_gain = 1.0;     // k_v, s
  double resolution = 0.5;        // m per cell
  double radius = 20.0;           // sensing radius, m
};

/// Obstacle body with speed-dependent triangles appended fore and aft.
struct SafetyTriangles {
  int id = 0;
  Vec2 front_vertex;
  Vec2 rear_vertex;
  double front_length = 0.0;
  double rear_length = 0.0;
  Polygon augmented_polygon;  // convex hexagon, counter-clockwise
};

/// Rate at which the distance between ego and obstacle shrinks (>= 0).
inline double closing_speed(const VehicleState& ego, const VehicleState& obs) {
  const Vec2 dp = obs.position() - ego.position();
  const Vec2 dv = obs.v * Vec2{std::cos(obs.psi), std::sin(obs.psi)} -
                  ego.v * Vec2{std::cos(ego.psi), std::sin(ego.psi)};
  const double range = norm(dp);
  if (range <= 0.0) return 0.0;
  return std::max(0.0, -dot(dp, dv) / range);
}

/// Rear triangle scales with the obstacle's speed; the front one with the larger of its
/// speed and the ego closing speed.
inline SafetyTriangles velocity_triangles(const ObstacleVehicle& obs, const RiskParams& params,
                                          double ego_closing_speed = 0.0) {
  SafetyTriangles out;
  out.id = obs.id;
  out.rear_length = std::max(params.triangle_min, params.triangle_gain * obs.state.v);
  out.front_length = std::max(params.triangle_min,
                              params.triangle_gain * std::max(obs.state.v, ego_closing_speed));
  const Vec2 c = obs.state.position();
  const double h = obs.state.psi;
  const double hl = 0.5 * obs.geom.length;
  const double hw = 0.5 * obs.geom.width;
  out.front_vertex = c + rotate({hl + out.front_length, 0.0}, h);
  out.rear_vertex = c + rotate({-hl - out.rear_length, 0.0}, h);
  out.augmented_polygon = {out.rear_vertex,
                           c + rotate({-hl, -hw}, h),
                           c + rotate({hl, -hw}, h),
                           out.front_vertex,
                           c + rotate({hl, hw}, h),
                           c + rotate({-hl, hw}, h)};
  return out;
}

inline double yukawa(double gain, double decay, double d, double epsilon) {
  return gain * std::exp(-decay * d) / std::max(d, epsilon);
}

/// Combined obstacle and road-edge potential at a world point.
inline double risk_at(Vec2 p, const RoadModel& road, std::span<const SafetyTriangles> obstacles,
                      const RiskParams& params) {
  const double edge = road.edge_distance(p);
  if (edge < 0.0) return params.cap;
  double u = yukawa(params.edge_gain, params.edge_decay, edge, params.epsilon);
  for (const SafetyTriangles& obs : obstacles) {
    const double d = distance_to_convex(p, obs.augmented_polygon);
    if (d <= 0.0) return params.cap;
    u += yukawa(params.obstacle_gain, params.obstacle_decay, d, params.epsilon);
  }
  return std::min(u, params.cap);
}

/// Rasterised risk over a disc around the ego. Cells sit on a world-fixed lattice of
/// spacing `resolution`, so translating the scene by a lattice vector translates the grid.
struct RiskGrid {
  Vec2 origin;  // world position of cell (0, 0)
  double resolution = 0.5;
  double radius = 20.0;
  Vec2 center;
  int nx = 0;
  int ny = 0;
  std::vector<double> values;  // row-major, index = j * nx + i
  std::vector<char> in_range;

  Vec2 cell_position(int i, int j) const {
    return {origin.x + i * resolution, origin.y + j * resolution};
  }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
};

struct SafeSet {
  std::vector<Vec2> points;  // grid scan order

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

struct RiskMap {
  RiskGrid grid;
  SafeSet safe;
  std::vector<SafetyTriangles> obstacles;  // those that entered the map
};

/// Obstacles whose augmented polygon reaches into the sensing disc.
inline std::vector<SafetyTriangles> sensed_obstacles(const VehicleState& ego,
                                                     std::span<const ObstacleVehicle> obstacles,
                                                     const RiskParams& params) {
  std::vector<SafetyTriangles> out;
  for (const ObstacleVehicle& obs : obstacles) {
    SafetyTriangles tri = velocity_triangles(obs, params, closing_speed(ego, obs.state));
    if (distance_to_convex(ego.position(), tri.augmented_polygon) <= params.radius) {
      out.push_back(std::move(tri));
    }
  }
  return out;
}

inline RiskMap build_safe_set(const VehicleState& ego, const RoadModel& road,
                              std::span<const ObstacleVehicle> obstacles,
                              const RiskParams& params) {
  RiskMap map;
  map.obstacles = sensed_obstacles(ego, obstacles, params);

  RiskGrid& grid = map.grid;
  grid.resolution = params.resolution;
  grid.radius = params.radius;
  grid.center = ego.position();
  const int i0 = static_cast<int>(std::ceil((ego.x - params.radius) / params.resolution));
  const int i1 = static_cast<int>(std::floor((ego.x + params.radius) / params.resolution));
  const int j0 = static_cast<int>(std::ceil((ego.y - params.radius) / params.resolution));
  const int j1 = static_cast<int>(std::floor((ego.y + params.radius) / params.resolution));
  grid.origin = {i0 * params.resolution, j0 * params.resolution};
  grid.nx = i1 - i0 + 1;
  grid.ny = j1 - j0 + 1;
  grid.values.assign(static_cast<std::size_t>(grid.nx) * grid.ny, params.cap);
  grid.in_range.assign(grid.values.size(), 0);

  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const Vec2 p = grid.cell_position(i, j);
      if (distance(p, grid.center) > params.radius) continue;
      const std::size_t k = grid.index(i, j);
      grid.in_range[k] = 1;
      grid.values[k] = risk_at(p, road, map.obstacles, params);
      if (grid.values[k] <= params.threshold) map.safe.points.push_back(p);
    }
  }
  return map;
}

inline void write_grid_csv(std::ostream& out, const RiskGrid& grid) {
  out << "x,y,U\n";
  char buf[96];
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const std::size_t k = grid.index(i, j);
      if (!grid.in_range[k]) continue;
      const Vec2 p = grid.cell_position(i, j);
      std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.9g\n", p.x, p.y, grid.values[k]);
      out << buf;
    }
  }
}

}  // namespace overtake
