#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "overtake/dynamics.hpp"
#include "overtake/geometry.hpp"
#include "overtake/reachability.hpp"
#include "overtake/riskmap.hpp"
#include "overtake/road.hpp"

namespace overtake {

/// Lane-keep, follow, overtake, abort.
enum class ManeuverState { L, F, O, A };

enum class EventKind { sigma1 = 1, sigma2, sigma3, sigma4, sigma5 };
enum class EventSource { rule, manual };

struct TransitionEvent {
  EventKind kind = EventKind::sigma1;
  EventSource source = EventSource::rule;

  friend bool operator==(const TransitionEvent&, const TransitionEvent&) = default;
};

inline std::string_view to_string(ManeuverState s) {
  switch (s) {
    case ManeuverState::L: return "L";
    case ManeuverState::F: return "F";
    case ManeuverState::O: return "O";
    case ManeuverState::A: return "A";
  }
  return "?";
}

inline std::optional<ManeuverState> parse_maneuver_state(std::string_view s) {
  if (s == "L") return ManeuverState::L;
  if (s == "F") return ManeuverState::F;
  if (s == "O") return ManeuverState::O;
  if (s == "A") return ManeuverState::A;
  return std::nullopt;
}

inline std::string_view to_string(EventKind e) {
  switch (e) {
    case EventKind::sigma1: return "sigma1";
    case EventKind::sigma2: return "sigma2";
    case EventKind::sigma3: return "sigma3";
    case EventKind::sigma4: return "sigma4";
    case EventKind::sigma5: return "sigma5";
  }
  return "?";
}

/// Total transition function; pairs outside the table leave the state unchanged.
constexpr ManeuverState transition(ManeuverState current, TransitionEvent event) {
  using S = ManeuverState;
  using E = EventKind;
  switch (event.kind) {
    case E::sigma1: return current == S::L ? S::F : current;
    case E::sigma2: return current == S::F ? S::O : current;
    case E::sigma3: return current == S::O ? S::L : current;
    case E::sigma4: return current == S::O ? S::A : current;
    case E::sigma5: return current == S::A ? S::F : current;
  }
  return current;
}

struct BehaviorParams {
  double d_lanekeep = 15.0;          // m
  double d_follow_trigger = 15.0;    // m, bumper-to-bumper
  double d_safe_overtake_zone = 5.0; // m
  double dv_overtake = 5.0;          // m/s
  double dv_abort = 2.0;             // m/s
  double ttc_abort = 4.0;            // s
  double v_des = 10.0;               // m/s
  double v_max = 25.0;               // m/s
  bool auto_overtake = false;        // rule-based sigma2 from corridor clearance
  double oncoming_range = 100.0;     // m, farthest oncoming vehicle considered for TTC
  int home_lane = 0;
};

struct ReferenceTarget {
  Vec2 p_ref;
  double v_ref = 0.0;
  double psi_ref = 0.0;
};

struct IntermediateReference {
  Vec2 p_interim;
  double psi_ref = 0.0;
  double v_ref = 0.0;
  bool emergency = false;  // S_SR was empty
};

class MissingLeadVehicle : public std::logic_error {
 public:
  MissingLeadVehicle() : std::logic_error("maneuver state requires a lead vehicle") {}
};

/// Station of the obstacle's front and rear triangle apices along the road.
struct LeadStations {
  double front_vertex = 0.0;
  double rear_vertex = 0.0;
  double center = 0.0;
};

inline LeadStations lead_stations(const ObstacleVehicle& lv, const RoadModel& road,
                                  const RiskParams& risk) {
  const SafetyTriangles tri = velocity_triangles(lv, risk);
  return {road.to_frenet(tri.front_vertex).s, road.to_frenet(tri.rear_vertex).s,
          road.to_frenet(lv.state.position()).s};
}

/// Signed speed along the road direction.
inline double along_road_speed(const VehicleState& s, const RoadModel& road, double station) {
  return s.v * std::cos(s.psi - road.heading_at(station));
}

/// Nearest same-direction vehicle ahead of the ego in `lane`.
inline std::optional<ObstacleVehicle> find_lead_vehicle(const VehicleState& ego,
                                                        std::span<const ObstacleVehicle> actors,
                                                        const RoadModel& road, int lane) {
  const Frenet fe = road.to_frenet(ego.position());
  std::optional<ObstacleVehicle> best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const ObstacleVehicle& a : actors) {
    const Frenet fa = road.to_frenet(a.state.position());
    if (road.lane_of(fa.offset) != lane) continue;
    if (std::cos(a.state.psi - road.heading_at(fa.s)) <= 0.0) continue;
    const double gap = fa.s - fe.s;
    if (gap > 0.0 && gap < best_gap) {
      best_gap = gap;
      best = a;
    }
  }
  return best;
}

/// Smallest time-to-collision against oncoming vehicles ahead of the ego.
inline double min_time_to_collision(const VehicleState& ego,
                                    std::span<const ObstacleVehicle> oncoming,
                                    const RoadModel& road, double range) {
  const double se = road.to_frenet(ego.position()).s;
  const double ve = along_road_speed(ego, road, se);
  double ttc = std::numeric_limits<double>::infinity();
  for (const ObstacleVehicle& o : oncoming) {
    const double so = road.to_frenet(o.state.position()).s;
    const double gap = so - se;
    if (gap <= 0.0 || gap > range) continue;
    const double closing = ve - along_road_speed(o.state, road, so);
    if (closing > 0.0) ttc = std::min(ttc, gap / closing);
  }
  return ttc;
}

/// Length of adjacent-lane road needed to get from the ego station to the merge point
/// while closing on the lead vehicle at v_overtake.
inline double overtake_corridor_length(double ego_station, const LeadStations& lv, double v_lv,
                                       const BehaviorParams& params, double cap) {
  const double v_ot = std::min(params.v_max, v_lv + params.dv_overtake);
  const double to_pass = std::max(0.0, lv.front_vertex + params.d_safe_overtake_zone - ego_station);
  if (v_ot <= v_lv) return cap;
  return std::min(cap, to_pass * v_ot / (v_ot - v_lv));
}

/// True when every lattice point along the adjacent lane centre over the corridor is safe.
inline bool corridor_clear(const VehicleState& ego, const ObstacleVehicle& lv,
                           std::span<const SafetyTriangles> sensed, const RoadModel& road,
                           const BehaviorParams& params, const RiskParams& risk) {
  const int lane = params.home_lane + 1;
  if (lane >= road.lane_count()) return false;
  const double se = road.to_frenet(ego.position()).s;
  const double len =
      overtake_corridor_length(se, lead_stations(lv, road, risk), lv.state.v, params, risk.radius);
  for (double ds = 0.0; ds <= len + 1e-9; ds += risk.resolution) {
    if (risk_at(road.lane_center(lane, se + ds), road, sensed, risk) > risk.threshold) return false;
  }
  return true;
}

/// All parts of the ego body lie between the boundaries of `lane`.
inline bool within_lane(const VehicleState& ego, const VehicleGeometry& geom, const RoadModel& road,
                        int lane) {
  const double lo = road.lane_offset(lane) - 0.5 * road.lane_width();
  const double hi = road.lane_offset(lane) + 0.5 * road.lane_width();
  for (const Vec2& c : oriented_rectangle(ego.position(), ego.psi, geom.length, geom.width)) {
    const double off = road.to_frenet(c).offset;
    if (off < lo || off > hi) return false;
  }
  return true;
}

struct EventContext {
  const VehicleState& ego;
  const VehicleGeometry& ego_geom;
  std::optional<ObstacleVehicle> lead;
  std::span<const ObstacleVehicle> oncoming;
  std::span<const SafetyTriangles> sensed;  // for the corridor test
  const RoadModel& road;
  const RiskParams& risk;
};

/// Rule and manual events for the current state, in ascending event order. Manual
/// requests are reported regardless of state so callers can tell ignored requests apart.
inline std::vector<TransitionEvent> detect_events(const EventContext& ctx, ManeuverState state,
                                                  std::optional<EventKind> manual,
                                                  const BehaviorParams& params) {
  std::vector<TransitionEvent> out;
  const double se = ctx.road.to_frenet(ctx.ego.position()).s;
  std::optional<LeadStations> lv;
  if (ctx.lead) lv = lead_stations(*ctx.lead, ctx.road, ctx.risk);

  if (state == ManeuverState::L && ctx.lead) {
    const double gap = lv->center - se - 0.5 * (ctx.lead->geom.length + ctx.ego_geom.length);
    if (gap <= params.d_follow_trigger) out.push_back({EventKind::sigma1, EventSource::rule});
  }

  if (manual == EventKind::sigma2) {
    out.push_back({EventKind::sigma2, EventSource::manual});
  } else if (state == ManeuverState::F && params.auto_overtake && ctx.lead &&
             corridor_clear(ctx.ego, *ctx.lead, ctx.sensed, ctx.road, params, ctx.risk)) {
    out.push_back({EventKind::sigma2, EventSource::rule});
  }

  if (state == ManeuverState::O && lv && se > lv->front_vertex + params.d_safe_overtake_zone) {
    out.push_back({EventKind::sigma3, EventSource::rule});
  }

  if (manual == EventKind::sigma4) {
    out.push_back({EventKind::sigma4, EventSource::manual});
  } else if (state == ManeuverState::O && lv && se < lv->center &&
             min_time_to_collision(ctx.ego, ctx.oncoming, ctx.road, params.oncoming_range) <
                 params.ttc_abort) {
    out.push_back({EventKind::sigma4, EventSource::rule});
  }

  if (state == ManeuverState::A && lv) {
    const double front = se + 0.5 * ctx.ego_geom.length;
    if (front <= lv->rear_vertex &&
        within_lane(ctx.ego, ctx.ego_geom, ctx.road, params.home_lane)) {
      out.push_back({EventKind::sigma5, EventSource::rule});
    }
  }
  return out;
}

/// Final target of the current maneuver.
inline ReferenceTarget reference_for(ManeuverState state, const VehicleState& ego,
                                     const std::optional<ObstacleVehicle>& lead,
                                     const RoadModel& road, const BehaviorParams& params,
                                     const RiskParams& risk) {
  ReferenceTarget out;
  double s = 0.0;
  if (state == ManeuverState::L) {
    s = road.to_frenet(ego.position()).s + params.d_lanekeep;
    out.v_ref = params.v_des;
  } else {
    if (!lead) throw MissingLeadVehicle();
    const LeadStations lv = lead_stations(*lead, road, risk);
    const double v_lv = lead->state.v;
    switch (state) {
      case ManeuverState::F:
        s = lv.rear_vertex;
        out.v_ref = v_lv;
        break;
      case ManeuverState::O:
        s = lv.front_vertex + params.d_safe_overtake_zone;
        out.v_ref = std::min(params.v_max, v_lv + params.dv_overtake);
        break;
      default:
        s = lv.rear_vertex;
        out.v_ref = std::max(0.0, v_lv - params.dv_abort);
        break;
    }
  }
  out.p_ref = road.lane_center(params.home_lane, s);
  out.psi_ref = road.heading_at(s);
  return out;
}

/// Point of S_SR closest to the final target. Exact distance ties go to the smaller
/// offset from the home-lane centre, then to the earlier point.
inline IntermediateReference intermediate_ref(const ReferenceTarget& target,
                                              const SafeReachableSet& ssr, const SafeSet& safe,
                                              const VehicleState& ego, const RoadModel& road,
                                              int home_lane) {
  IntermediateReference out;
  auto lateral = [&](Vec2 p) {
    return std::abs(road.to_frenet(p).offset - road.lane_offset(home_lane));
  };
  auto argmin = [&](std::span<const Vec2> pts, Vec2 goal) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    double best_lat = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double d = distance(pts[i], goal);
      if (d < best_d) {
        best = i;
        best_d = d;
        best_lat = lateral(pts[i]);
      } else if (d == best_d) {
        const double lat = lateral(pts[i]);
        if (lat < best_lat) {
          best = i;
          best_lat = lat;
        }
      }
    }
    return pts[best];
  };

  if (!ssr.empty()) {
    out.p_interim = argmin(ssr.points, target.p_ref);
    out.v_ref = target.v_ref;
  } else {
    out.emergency = true;
    out.p_interim = safe.empty() ? ego.position() : argmin(safe.points, ego.position());
    out.v_ref = 0.0;
  }
  out.psi_ref = road.heading_at(road.to_frenet(out.p_interim).s);
  return out;
}

}  // namespace overtake
