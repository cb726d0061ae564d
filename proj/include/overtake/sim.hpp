#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "overtake/behavior.hpp"
#include "overtake/dynamics.hpp"
#include "overtake/geometry.hpp"
#include "overtake/nmpc.hpp"
#include "overtake/reachability.hpp"
#include "overtake/riskmap.hpp"
#include "overtake/road.hpp"

namespace overtake {

struct SpeedPoint {
  double t = 0.0;
  double v = 0.0;
};

/// Vehicle driven along a lane centre by a piecewise-linear speed profile.
struct ActorSpec {
  int id = 1;
  int lane = 0;
  double s0 = 0.0;
  double speed = 5.0;  // used when the profile is empty
  int direction = 1;   // +1 with the road, -1 oncoming
  VehicleGeometry geom;
  std::vector<SpeedPoint> profile;

  double speed_at(double t) const {
    if (profile.empty()) return speed;
    if (t <= profile.front().t) return profile.front().v;
    for (std::size_t i = 1; i < profile.size(); ++i) {
      if (t <= profile[i].t) {
        const double w = (t - profile[i - 1].t) / (profile[i].t - profile[i - 1].t);
        return profile[i - 1].v + w * (profile[i].v - profile[i - 1].v);
      }
    }
    return profile.back().v;
  }
};

enum class CommandKind { trigger_overtake, trigger_abort, spawn_oncoming };

struct TimedEvent {
  double t = 0.0;
  CommandKind kind = CommandKind::trigger_overtake;
  double speed = 0.0;  // spawn_oncoming only
  double gap = 0.0;    // spawn_oncoming only, ahead of the ego along the road
};

struct EgoSpec {
  VehicleState state;
  VehicleGeometry geom;
  ControlLimits limits;
};

struct PlannerConfig {
  int horizon = 10;
  double dt = 0.1;
  double inflation = 1.5;  // alpha
  int exponent = 4;
  int max_ellipses = 4;
  StateBounds state_bounds;
  SolverOptions solver;
};

struct Scenario {
  int schema_version = 1;
  std::string name = "scenario";
  RoadModel road;
  EgoSpec ego;
  std::vector<ActorSpec> traffic;
  std::vector<TimedEvent> events;
  BehaviorParams behavior;
  RiskParams risk;
  PlannerConfig planner;
  double duration = 30.0;
  double plant_dt = 0.05;
  double planner_period = 0.1;
  bool steering_lag = false;
  double steering_tau = 0.2;
  std::uint64_t seed = 0;
};

struct ActorState {
  int id = 0;
  double x = 0.0, y = 0.0, psi = 0.0, v = 0.0;
};

struct TickLog {
  double t = 0.0;
  VehicleState ego;
  std::vector<ActorState> actors;
  ManeuverState fsm = ManeuverState::L;
  Vec2 p_ref;
  Vec2 p_interim;
  double v_ref = 0.0;
  ControlInput control;
  SolverStatus status = SolverStatus::converged;
  int iterations = 0;
  double kkt_residual = 0.0;
  bool emergency = false;
  double min_clearance = std::numeric_limits<double>::infinity();
  double lateral_excursion = 0.0;
  std::vector<double> g_values;  // per ellipse of the active plan, at the current ego state
};

struct TimelineEntry {
  ManeuverState state = ManeuverState::L;
  double t = 0.0;
  std::string cause;  // event that entered the state, empty for the initial state
};

struct RunMetrics {
  bool collision_occurred = false;
  double min_clearance = std::numeric_limits<double>::infinity();
  double max_intrusion = 0.0;
  double intrusion_area = 0.0;
  std::vector<TimelineEntry> timeline;
  bool completion = false;
  int planner_ticks = 0;
  int fallback_ticks = 0;
  int max_iter_ticks = 0;
  int emergency_ticks = 0;
  int clamped_controls = 0;
  double min_converged_g = std::numeric_limits<double>::infinity();
};

/// Everything the planner computed in one period; handed to observers.
struct PlanSnapshot {
  double t = 0.0;
  ManeuverState fsm = ManeuverState::L;
  VehicleState ego;
  std::vector<ObstacleVehicle> actors;
  RiskMap risk;
  ReachablePolygon reach;
  SafeReachableSet ssr;
  ReferenceTarget target;
  IntermediateReference interim;
  std::vector<ObstacleEllipse> ellipses;
  HorizonSolution solution;
  std::vector<TransitionEvent> events;
};

/// Operator command, applied at the start of the next planner period.
struct SessionCommand {
  CommandKind kind = CommandKind::trigger_overtake;
  double speed = 0.0;
  double gap = 0.0;
};

/// Result of draining one command at a planner tick.
struct CommandOutcome {
  SessionCommand command;
  bool ignored = false;
  double t = 0.0;
};

/// Multi-producer queue drained by the engine thread.
class CommandQueue {
 public:
  void push(SessionCommand c) {
    std::lock_guard lock(mutex_);
    queue_.push_back(c);
  }
  std::vector<SessionCommand> drain() {
    std::lock_guard lock(mutex_);
    std::vector<SessionCommand> out(queue_.begin(), queue_.end());
    queue_.clear();
    return out;
  }

 private:
  std::mutex mutex_;
  std::deque<SessionCommand> queue_;
};

inline double collision_distance(const Polygon& ego, const Polygon& other) {
  return convex_distance(ego, other);
}

/// Closed-loop engine. Each planner period runs the full planning pipeline once and then
/// advances every plant with the first control held constant.
class Simulation {
 public:
  explicit Simulation(Scenario scenario) : sc_(std::move(scenario)) { reset(); }

  void reset() {
    t_ = 0.0;
    plant_steps_ = 0;
    tick_ = 0;
    ego_ = sc_.ego.state;
    steer_actual_ = 0.0;
    fsm_ = ManeuverState::L;
    lead_id_.reset();
    actors_.clear();
    for (const ActorSpec& a : sc_.traffic) add_actor(a, a.s0);
    next_event_ = 0;
    warm_.reset();
    logs_.clear();
    metrics_ = {};
    metrics_.timeline.push_back({ManeuverState::L, 0.0, ""});
    overtake_done_ = false;
    outcomes_.clear();
    last_ = {};
  }

  const Scenario& scenario() const { return sc_; }
  double time() const { return t_; }
  bool done() const { return t_ >= sc_.duration - 1e-9; }
  ManeuverState state() const { return fsm_; }
  const VehicleState& ego() const { return ego_; }
  const std::vector<TickLog>& logs() const { return logs_; }
  const PlanSnapshot& last_plan() const { return last_; }
  CommandQueue& commands() { return queue_; }

  /// Outcomes of commands drained during the most recent planner tick.
  const std::vector<CommandOutcome>& command_outcomes() const { return outcomes_; }

  std::vector<ObstacleVehicle> actor_vehicles() const {
    std::vector<ObstacleVehicle> out;
    for (const Actor& a : actors_) out.push_back(a.vehicle);
    return out;
  }

  void set_observer(std::function<void(const PlanSnapshot&)> f) { observer_ = std::move(f); }

  /// One planner period: plan, then integrate all plants over it.
  void step() {
    if (done()) return;
    plan();
    const int substeps = std::max(1, static_cast<int>(std::lround(sc_.planner_period / sc_.plant_dt)));
    for (int i = 0; i < substeps && !done(); ++i) advance_plants();
    ++tick_;
  }

  RunMetrics finish() const {
    RunMetrics m = metrics_;
    const Frenet fe = sc_.road.to_frenet(ego_.position());
    bool ahead = true;
    if (const auto lv = tracked_lead()) {
      ahead = fe.s > sc_.road.to_frenet(lv->state.position()).s;
    }
    m.completion = overtake_done_ && fsm_ == ManeuverState::L && ahead &&
                   sc_.road.lane_of(fe.offset) == sc_.behavior.home_lane &&
                   !m.collision_occurred;
    return m;
  }

  RunMetrics run() {
    while (!done()) step();
    return finish();
  }

 private:
  struct Actor {
    ActorSpec spec;
    double s = 0.0;
    ObstacleVehicle vehicle;
  };

  void add_actor(const ActorSpec& spec, double s) {
    Actor a{spec, s, {}};
    a.vehicle.id = spec.id;
    a.vehicle.geom = spec.geom;
    place(a, spec.speed_at(t_));
    actors_.push_back(a);
  }

  void place(Actor& a, double v) {
    const Vec2 p = sc_.road.lane_center(a.spec.lane, a.s);
    double psi = sc_.road.heading_at(a.s);
    if (a.spec.direction < 0) psi = wrap_angle(psi + std::numbers::pi);
    a.vehicle.state = {p.x, p.y, psi, v};
  }

  std::optional<ObstacleVehicle> tracked_lead() const {
    if (!lead_id_) return std::nullopt;
    for (const Actor& a : actors_) {
      if (a.vehicle.id == *lead_id_) return a.vehicle;
    }
    return std::nullopt;
  }

  int next_actor_id() const {
    int id = 0;
    for (const Actor& a : actors_) id = std::max(id, a.vehicle.id);
    return id + 1;
  }

  void apply_command(const SessionCommand& c, std::optional<EventKind>& manual) {
    CommandOutcome o{c, false, t_};
    switch (c.kind) {
      case CommandKind::trigger_overtake:
      case CommandKind::trigger_abort: {
        const EventKind e =
            c.kind == CommandKind::trigger_overtake ? EventKind::sigma2 : EventKind::sigma4;
        o.ignored = transition(fsm_, {e, EventSource::manual}) == fsm_;
        if (!o.ignored) manual = e;
        break;
      }
      case CommandKind::spawn_oncoming: {
        ActorSpec spec;
        spec.id = next_actor_id();
        spec.lane = std::min(sc_.behavior.home_lane + 1, sc_.road.lane_count() - 1);
        spec.speed = c.speed;
        spec.direction = -1;
        spec.geom = sc_.ego.geom;
        const double s = sc_.road.to_frenet(ego_.position()).s + c.gap;
        spec.s0 = s;
        add_actor(spec, s);
        break;
      }
    }
    outcomes_.push_back(o);
  }

  void plan() {
    outcomes_.clear();
    std::optional<EventKind> manual;
    while (next_event_ < sc_.events.size() && sc_.events[next_event_].t <= t_ + 1e-9) {
      const TimedEvent& e = sc_.events[next_event_++];
      apply_command({e.kind, e.speed, e.gap}, manual);
    }
    for (const SessionCommand& c : queue_.drain()) apply_command(c, manual);

    PlanSnapshot snap;
    snap.t = t_;
    snap.ego = ego_;
    snap.actors = actor_vehicles();

    // Sets.
    snap.risk = build_safe_set(ego_, sc_.road, snap.actors, sc_.risk);

    // Behaviour.
    std::optional<ObstacleVehicle> lead = tracked_lead();
    if (fsm_ == ManeuverState::L) {
      lead = find_lead_vehicle(ego_, snap.actors, sc_.road, sc_.behavior.home_lane);
    }
    std::vector<ObstacleVehicle> oncoming;
    for (const ObstacleVehicle& a : snap.actors) {
      const double s = sc_.road.to_frenet(a.state.position()).s;
      if (std::cos(a.state.psi - sc_.road.heading_at(s)) < 0.0) oncoming.push_back(a);
    }
    const EventContext ctx{ego_, sc_.ego.geom, lead, oncoming, snap.risk.obstacles, sc_.road,
                           sc_.risk};
    snap.events = detect_events(ctx, fsm_, manual, sc_.behavior);
    for (const TransitionEvent& e : snap.events) {
      const ManeuverState next = transition(fsm_, e);
      if (next == fsm_) continue;
      if (fsm_ == ManeuverState::L && next == ManeuverState::F && lead) lead_id_ = lead->id;
      if (e.kind == EventKind::sigma3) overtake_done_ = true;
      fsm_ = next;
      metrics_.timeline.push_back({fsm_, t_, std::string(to_string(e.kind))});
      break;
    }
    if (fsm_ == ManeuverState::L) {
      lead.reset();
    } else {
      lead = tracked_lead();
      if (!lead) {
        // The tracked vehicle left the scene.
        fsm_ = ManeuverState::L;
        lead_id_.reset();
        metrics_.timeline.push_back({fsm_, t_, "lost_lead"});
      }
    }
    snap.fsm = fsm_;
    snap.target = reference_for(fsm_, ego_, lead, sc_.road, sc_.behavior, sc_.risk);

    snap.reach = reachable_polygon(ego_, snap.target.v_ref, sc_.ego.limits, sc_.ego.geom,
                                   sc_.planner.horizon * sc_.planner.dt, sc_.planner.horizon);
    snap.ssr = intersect(snap.risk.safe, snap.reach);
    snap.interim = intermediate_ref(snap.target, snap.ssr, snap.risk.safe, ego_, sc_.road,
                                    sc_.behavior.home_lane);

    // Trajectory.
    HorizonProblem p;
    p.x0 = ego_;
    p.reference = {snap.interim.p_interim.x, snap.interim.p_interim.y, snap.interim.psi_ref,
                   snap.interim.v_ref};
    p.horizon = sc_.planner.horizon;
    p.dt = sc_.planner.dt;
    apply_default_weights(p);
    p.state_bounds = sc_.planner.state_bounds;
    p.control_limits = sc_.ego.limits;
    p.geometry = sc_.ego.geom;
    snap.ellipses = nearest_ellipses(snap.actors);
    p.ellipses = snap.ellipses;

    std::optional<ControlVector> warm;
    if (warm_) warm = shifted_warm_start(*warm_, p.horizon);
    snap.solution = solve(p, warm, sc_.planner.solver);
    if (snap.solution.status == SolverStatus::infeasible_fallback) {
      warm_.reset();
    } else {
      warm_ = snap.solution;
    }

    ++metrics_.planner_ticks;
    if (snap.solution.status == SolverStatus::infeasible_fallback) ++metrics_.fallback_ticks;
    if (snap.solution.status == SolverStatus::max_iter) ++metrics_.max_iter_ticks;
    if (snap.interim.emergency) ++metrics_.emergency_ticks;
    if (snap.solution.status == SolverStatus::converged) {
      for (const VehicleState& x : snap.solution.states) {
        for (const ObstacleEllipse& e : snap.ellipses) {
          metrics_.min_converged_g = std::min(metrics_.min_converged_g, constraint_value(x, e));
        }
      }
    }

    command_ = snap.solution.controls.front();
    if (!sc_.ego.limits.contains(command_)) {
      ++metrics_.clamped_controls;
      command_ = sc_.ego.limits.clamp(command_);
    }
    last_ = std::move(snap);
    if (observer_) observer_(last_);
  }

  std::vector<ObstacleEllipse> nearest_ellipses(const std::vector<ObstacleVehicle>& actors) const {
    const Polygon body = ego_body();
    std::vector<std::pair<double, const ObstacleVehicle*>> near;
    for (const ObstacleVehicle& a : actors) {
      const double d = convex_distance(body, a.body());
      if (d <= sc_.risk.radius) near.emplace_back(d, &a);
    }
    std::stable_sort(near.begin(), near.end(),
                     [](const auto& l, const auto& r) { return l.first < r.first; });
    std::vector<ObstacleEllipse> out;
    for (std::size_t i = 0; i < near.size() && static_cast<int>(i) < sc_.planner.max_ellipses; ++i) {
      out.push_back(ellipse_for(*near[i].second, sc_.ego.geom, sc_.planner.inflation,
                                sc_.planner.exponent));
    }
    return out;
  }

  Polygon ego_body() const {
    return oriented_rectangle(ego_.position(), ego_.psi, sc_.ego.geom.length, sc_.ego.geom.width);
  }

  void advance_plants() {
    const double dt = sc_.plant_dt;
    ControlInput applied = command_;
    if (sc_.steering_lag) {
      steer_actual_ += (1.0 - std::exp(-dt / sc_.steering_tau)) * (command_.delta - steer_actual_);
      applied.delta = steer_actual_;
    } else {
      steer_actual_ = command_.delta;
    }
    ego_ = overtake::step(ego_, applied, sc_.ego.geom, dt);
    for (Actor& a : actors_) {
      const double v0 = a.spec.speed_at(t_);
      const double v1 = a.spec.speed_at(t_ + dt);
      a.s += a.spec.direction * 0.5 * (v0 + v1) * dt;
      place(a, v1);
    }
    t_ = static_cast<double>(++plant_steps_) * dt;
    record(applied);
  }

  void record(const ControlInput& applied) {
    TickLog log;
    log.t = t_;
    log.ego = ego_;
    log.fsm = fsm_;
    log.p_ref = last_.target.p_ref;
    log.p_interim = last_.interim.p_interim;
    log.v_ref = last_.interim.v_ref;
    log.control = applied;
    log.status = last_.solution.status;
    log.iterations = last_.solution.iterations;
    log.kkt_residual = last_.solution.kkt_residual;
    log.emergency = last_.interim.emergency;

    const Polygon body = ego_body();
    for (const Actor& a : actors_) {
      const VehicleState& s = a.vehicle.state;
      log.actors.push_back({a.vehicle.id, s.x, s.y, s.psi, s.v});
      log.min_clearance = std::min(log.min_clearance, collision_distance(body, a.vehicle.body()));
    }
    for (const ObstacleEllipse& e : last_.ellipses) log.g_values.push_back(constraint_value(ego_, e));

    const double boundary =
        sc_.road.lane_offset(sc_.behavior.home_lane) + 0.5 * sc_.road.lane_width();
    double excursion = 0.0;
    for (const Vec2& c : body) excursion = std::max(excursion, sc_.road.to_frenet(c).offset - boundary);
    log.lateral_excursion = excursion;

    metrics_.min_clearance = std::min(metrics_.min_clearance, log.min_clearance);
    if (log.min_clearance <= 0.0) metrics_.collision_occurred = true;
    metrics_.max_intrusion = std::max(metrics_.max_intrusion, excursion);
    metrics_.intrusion_area += excursion * sc_.plant_dt;
    logs_.push_back(std::move(log));
  }

  Scenario sc_;
  double t_ = 0.0;
  long plant_steps_ = 0;
  long tick_ = 0;
  VehicleState ego_;
  double steer_actual_ = 0.0;
  ControlInput command_;
  ManeuverState fsm_ = ManeuverState::L;
  std::optional<int> lead_id_;
  std::vector<Actor> actors_;
  std::size_t next_event_ = 0;
  std::optional<HorizonSolution> warm_;
  std::vector<TickLog> logs_;
  RunMetrics metrics_;
  bool overtake_done_ = false;
  std::vector<CommandOutcome> outcomes_;
  PlanSnapshot last_;
  CommandQueue queue_;
  std::function<void(const PlanSnapshot&)> observer_;
};

struct RunResult {
  std::vector<TickLog> logs;
  RunMetrics metrics;
};

inline RunResult run(const Scenario& scenario,
                     std::function<void(const PlanSnapshot&)> observer = nullptr) {
  Simulation sim(scenario);
  if (observer) sim.set_observer(std::move(observer));
  RunMetrics m = sim.run();
  return {sim.logs(), std::move(m)};
}

}  // namespace overtake
