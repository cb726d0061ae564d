// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "overtake/output.hpp"
#include "overtake/scenario_io.hpp"
#include "overtake/sim.hpp"
#include "problems.hpp"

using namespace overtake;
namespace tp = testing_problems;

namespace {

int failures = 0;

void report(bool ok, const char* name, const std::string& detail) {
  std::printf("%s  %-32s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* spec, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, spec, args...);
  return buf;
}

const std::string kScenarioDir = OVERTAKE_SCENARIO_DIR;

// Converged-solution constraint audit, fed from planner observers.
struct ConstraintAudit {
  long ticks = 0;
  long converged = 0;
  double worst_g = std::numeric_limits<double>::infinity();

  void operator()(const PlanSnapshot& snap) {
    ++ticks;
    if (snap.solution.status != SolverStatus::converged) return;
    ++converged;
    for (const VehicleState& x : snap.solution.states) {
      for (const ObstacleEllipse& e : snap.ellipses) {
        worst_g = std::min(worst_g, oracle::ellipse_g({e.x_e, e.y_e, e.a, e.b, e.phi, e.n}, x.x, x.y));
      }
    }
  }
};

// Set relations checked on every planner tick.
struct SetAudit {
  long nonempty_ticks = 0;
  long interim_outside = 0;
  long points_checked = 0;
  long not_safe = 0;
  long not_reachable = 0;

  void operator()(const PlanSnapshot& snap) {
    if (snap.ssr.empty()) return;
    ++nonempty_ticks;
    std::set<std::pair<double, double>> safe, ssr;
    for (Vec2 p : snap.risk.safe.points) safe.insert({p.x, p.y});
    for (Vec2 p : snap.ssr.points) ssr.insert({p.x, p.y});
    if (!ssr.count({snap.interim.p_interim.x, snap.interim.p_interim.y})) ++interim_outside;
    std::vector<oracle::P> reach;
    for (Vec2 v : snap.reach.boundary) reach.push_back({v.x, v.y});
    for (Vec2 p : snap.ssr.points) {
      ++points_checked;
      if (!safe.count({p.x, p.y})) ++not_safe;
      if (!oracle::inside({p.x, p.y}, reach)) ++not_reachable;
    }
  }
};

std::string run_bytes(const RunResult& r) {
  std::ostringstream out;
  write_tick_csv(out, r.logs);
  write_actor_csv(out, r.logs);
  out << metrics_to_json(r.metrics).dump(2);
  return out.str();
}

double lead_speed(const TickLog& log, int id) {
  for (const ActorState& a : log.actors) {
    if (a.id == id) return a.v;
  }
  return 0.0;
}

const ActorState* lead_actor(const TickLog& log, int id) {
  for (const ActorState& a : log.actors) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------------------

void check_dynamics() {
  const VehicleGeometry geom;
  // Straight line: 100 steps at 10 m/s along an arbitrary heading.
  double straight_err = 0.0;
  for (double psi : {0.0, 0.3, -2.1}) {
    VehicleState s{1.0, -2.0, psi, 10.0};
    for (int i = 0; i < 100; ++i) s = step(s, {0.0, 0.0}, geom, 0.1);
    straight_err = std::max({straight_err, std::abs(s.x - (1.0 + 100.0 * std::cos(psi))),
                             std::abs(s.y - (-2.0 + 100.0 * std::sin(psi))), std::abs(s.psi - psi),
                             std::abs(s.v - 10.0)});
  }
  // Constant-curvature circle.
  VehicleState c{0, 0, 0, 10};
  for (int i = 0; i < 200; ++i) c = step(c, {0, 0.1}, geom, 0.05);
  const oracle::P end = oracle::arc_endpoint(0, 0, 0, 10, 0.1, {geom.l_f, geom.l_r}, 10.0);
  const double arc_err = std::hypot(c.x - end.x, c.y - end.y);
  // Step halving: one step of 0.1 s against two of 0.05 s over the envelope v <= 20 m/s,
  // |delta| <= 0.6, both acceleration limits.
  const ControlLimits lim;
  double halving = 0.0, worst_v = 0.0, worst_delta = 0.0;
  for (double v = 0.0; v <= 20.0 + 1e-9; v += 2.5) {
    for (double delta = -0.6; delta <= 0.6 + 1e-9; delta += 0.15) {
      for (double a : {lim.a_min, 0.0, lim.a_max}) {
        if (v + a * 0.1 < 0.0) continue;  // the zero-speed clamp is not smooth
        const VehicleState x0{0, 0, 0.4, v};
        const ControlInput ctl{a, delta};
        const VehicleState coarse = step(x0, ctl, geom, 0.1);
        const VehicleState fine = step(step(x0, ctl, geom, 0.05), ctl, geom, 0.05);
        const double err = std::hypot(coarse.x - fine.x, coarse.y - fine.y);
        if (err > halving) {
          halving = err;
          worst_v = v;
          worst_delta = delta;
        }
      }
    }
  }
  // Convergence order at that corner against the closed-form arc: 16 for a 4th-order method.
  const VehicleState x0{0, 0, 0, worst_v};
  const ControlInput ctl{0.0, worst_delta};
  const oracle::P exact = oracle::arc_endpoint(0, 0, 0, worst_v, worst_delta, {geom.l_f, geom.l_r}, 0.1);
  const VehicleState coarse = step(x0, ctl, geom, 0.1);
  const VehicleState fine = step(step(x0, ctl, geom, 0.05), ctl, geom, 0.05);
  const double order_ratio = std::hypot(coarse.x - exact.x, coarse.y - exact.y) /
                             std::hypot(fine.x - exact.x, fine.y - exact.y);
  report(straight_err < 1e-12 && arc_err < 1e-3 && halving < 1e-6, "dynamics_checks",
         fmt("straight_err=%.2e arc_err=%.2e m step_halving=%.2e m (max at v=%.1f delta=%.2f, "
             "error ratio dt/(dt/2)=%.2f)",
             straight_err, arc_err, halving, worst_v, worst_delta, order_ratio));
}

void check_gradients() {
  std::mt19937 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const HorizonProblem p = tp::random_instance(rng, 10);
    worst = std::max(worst, tp::gradient_error(p, tp::random_controls(rng, p)));
  }
  report(worst < 1e-4, "gradient_check", fmt("50 instances, max_rel_err=%.2e (h=1e-6)", worst));
}

void check_nmpc_oracles() {
  std::mt19937 rng(77);
  int grid_ok = 0;
  double grid_margin = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 20; ++i) {
    // Instances whose grid holds no feasible sequence are redrawn.
    HorizonProblem p;
    oracle::Problem o;
    double best = std::numeric_limits<double>::infinity();
    while (!std::isfinite(best)) {
      p = tp::random_tracking(rng, 2);
      if (i % 2) tp::add_blocking_ellipse(p, rng);
      o = tp::mirror(p);
      best = oracle::grid_search(o, {p.control_limits.a_min, p.control_limits.delta_min},
                                 {p.control_limits.a_max, p.control_limits.delta_max}, 9);
    }
    const HorizonSolution s = solve(p);
    std::vector<double> u;
    for (const ControlInput& c : s.controls) u.insert(u.end(), {c.a, c.delta});
    const oracle::Evaluation ev = oracle::evaluate(o, u);
    if (ev.violation <= 1e-6 && ev.cost <= best + 1e-3) ++grid_ok;
    grid_margin = std::max(grid_margin, ev.cost - best);
  }
  int free_ok = 0;
  double worst_rel = 0.0;
  for (int i = 0; i < 20; ++i) {
    const HorizonProblem p = tp::random_tracking(rng, 10);
    const oracle::Problem o = tp::mirror(p);
    std::vector<double> lo, hi;
    for (int k = 0; k < p.horizon; ++k) {
      lo.insert(lo.end(), {p.control_limits.a_min, p.control_limits.delta_min});
      hi.insert(hi.end(), {p.control_limits.a_max, p.control_limits.delta_max});
    }
    const double ref = oracle::derivative_free_min(
        [&](const std::vector<double>& u) { return oracle::evaluate(o, u).cost; },
        std::vector<double>(lo.size(), 0.0), lo, hi, rng);
    const double got = solve(p).objective;
    const double rel = std::abs(got - ref) / ref;
    worst_rel = std::max(worst_rel, rel);
    if (rel <= 0.05) ++free_ok;
  }
  report(grid_ok == 20 && free_ok == 20, "nmpc_oracle_equivalence",
         fmt("N=2 grid: %d/20 (max solver-grid=%.2e); N=10 derivative-free: %d/20 (max rel diff=%.2e)",
             grid_ok, grid_margin, free_ok, worst_rel));
}

// Closed loop in a frozen world towards a fixed target on the lattice.
void check_static_progress(SetAudit& sets) {
  const RoadModel road;
  const RiskParams risk;
  const VehicleGeometry geom;
  const ControlLimits limits;
  const std::vector<ObstacleVehicle> parked = {{{25, 4, 0, 0}, geom, 1}};
  ReferenceTarget target;
  target.p_ref = {40.0, 0.0};
  target.v_ref = 8.0;
  VehicleState ego{0, 0, 0, 6};
  double prev = std::numeric_limits<double>::infinity();
  int ticks = 0, increases = 0;
  bool reached = false;
  std::optional<Eigen::VectorXd> warm;
  for (; ticks < 200 && !reached; ++ticks) {
    PlanSnapshot snap;
    snap.risk = build_safe_set(ego, road, parked, risk);
    snap.reach = reachable_polygon(ego, target.v_ref, limits, geom, 1.0, 10);
    snap.ssr = intersect(snap.risk.safe, snap.reach);
    if (snap.ssr.empty()) break;
    snap.interim = intermediate_ref(target, snap.ssr, snap.risk.safe, ego, road, 0);
    sets(snap);
    const double d = distance(snap.interim.p_interim, target.p_ref);
    if (d > prev + 1e-12) ++increases;
    prev = d;
    if (d == 0.0) {
      reached = true;
      break;
    }
    HorizonProblem p;
    p.x0 = ego;
    p.reference = {snap.interim.p_interim.x, snap.interim.p_interim.y, snap.interim.psi_ref,
                   snap.interim.v_ref};
    apply_default_weights(p);
    const HorizonSolution s = solve(p, warm);
    warm = shifted_warm_start(s, p.horizon);
    for (int i = 0; i < 2; ++i) ego = step(ego, s.controls.front(), geom, 0.05);
  }
  report(reached && increases == 0, "static_world_progress",
         fmt("ticks=%d reached_target=%s increases=%d", ticks, reached ? "true" : "false", increases));
}

}  // namespace

int main() {
  std::printf("acceptance run\n");

  // Nominal scenario, with observers for the constraint and set audits.
  const Scenario nominal_sc = load_scenario(kScenarioDir + "/overtake_abort.json");
  ConstraintAudit nominal_constraints;
  SetAudit sets;
  long planner_clamped = 0;
  const auto t0 = std::chrono::steady_clock::now();
  const RunResult nominal = run(nominal_sc, [&](const PlanSnapshot& snap) {
    nominal_constraints(snap);
    sets(snap);
    if (!nominal_sc.ego.limits.contains(snap.solution.controls.front())) ++planner_clamped;
  });
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const RunMetrics& m = nominal.metrics;

  {
    bool in_limits = true;
    for (const TickLog& l : nominal.logs) in_limits = in_limits && nominal_sc.ego.limits.contains(l.control, 0.0);
    const std::string timeline = timeline_string(m);
    report(timeline == "LFOAFOL" && m.completion && !m.collision_occurred && in_limits &&
               planner_clamped == 0 && runtime < 120.0,
           "nominal_scenario_reproduction",
           fmt("timeline=%s completion=%s collision=%s controls_in_limits=%s runtime=%.1fs",
               timeline.c_str(), m.completion ? "true" : "false",
               m.collision_occurred ? "true" : "false",
               in_limits && planner_clamped == 0 ? "true" : "false", runtime));
  }

  {
    // First abort and the return to follow that ends it.
    double t4 = -1, t5 = -1;
    for (std::size_t i = 1; i < m.timeline.size(); ++i) {
      if (m.timeline[i].state == ManeuverState::A && t4 < 0) {
        t4 = m.timeline[i].t;
        if (i + 1 < m.timeline.size()) t5 = m.timeline[i + 1].t;
      }
    }
    const int lead_id = nominal_sc.traffic.front().id;
    double t_slow = -1, t_in = -1;
    bool behind = false;
    const double hw = 0.5 * nominal_sc.road.lane_width();
    for (const TickLog& l : nominal.logs) {
      if (t4 < 0 || l.t <= t4) continue;
      if (t_slow < 0 && l.ego.v < lead_speed(l, lead_id)) t_slow = l.t;
      if (t_in < 0) {
        bool inside = true;
        for (Vec2 c : oriented_rectangle(l.ego.position(), l.ego.psi, nominal_sc.ego.geom.length,
                                         nominal_sc.ego.geom.width)) {
          inside = inside && std::abs(c.y - nominal_sc.road.lane_offset(nominal_sc.behavior.home_lane)) <= hw;
        }
        if (inside) {
          t_in = l.t;
          const ActorState* lv = lead_actor(l, lead_id);
          const double rear_len = std::max(nominal_sc.risk.triangle_min, nominal_sc.risk.triangle_gain * lv->v);
          const double rear_vertex = lv->x - 0.5 * nominal_sc.traffic.front().geom.length - rear_len;
          behind = l.ego.x + 0.5 * nominal_sc.ego.geom.length <= rear_vertex;
        }
      }
    }
    const bool ok = t4 > 0 && t_slow > 0 && t_slow - t4 <= 2.0 && t_in > 0 && behind && t5 > 0 &&
                    t_in <= t5 + 1e-9;
    report(ok, "abort_speed_property",
           fmt("sigma4 at %.2fs, v<v_LV after %.2fs, back in lane at %.2fs behind rear vertex=%s, "
               "sigma5 at %.2fs",
               t4, t_slow - t4, t_in, behind ? "true" : "false", t5));
  }

  {
    const double d_star = oracle::clearance(nominal_sc.risk.obstacle_gain, nominal_sc.risk.obstacle_decay,
                                            nominal_sc.risk.threshold);
    const double bound = d_star + 0.5 * nominal_sc.ego.geom.width + 0.5;
    const double boundary = nominal_sc.road.lane_offset(nominal_sc.behavior.home_lane) + 0.5 * nominal_sc.road.lane_width();
    double excursion = 0.0;
    for (const TickLog& l : nominal.logs) {
      for (Vec2 c : oriented_rectangle(l.ego.position(), l.ego.psi, nominal_sc.ego.geom.length,
                                       nominal_sc.ego.geom.width)) {
        excursion = std::max(excursion, c.y - boundary);
      }
    }
    report(excursion <= bound, "minimal_intrusion",
           fmt("max excursion=%.3f m, bound d*+W/2+0.5=%.3f m (d*=%.4f m)", excursion, bound, d_star));
  }

  // Velocity sweep; also feeds the constraint audit.
  ConstraintAudit sweep_constraints;
  {
    const json base = read_scenario_document(kScenarioDir + "/sweep_base.json");
    int runs = 0, collisions = 0, completed = 0;
    std::string cells;
    for (double vd : {10.0, 15.0, 20.0}) {
      for (double vl : {3.0, 6.0, 9.0}) {
        json doc = base;
        apply_override(doc, "behavior.v_des=" + json(vd).dump());
        apply_override(doc, "traffic.0.speed=" + json(vl).dump());
        const RunResult r = run(scenario_from_json(doc), std::ref(sweep_constraints));
        ++runs;
        collisions += r.metrics.collision_occurred ? 1 : 0;
        completed += r.metrics.completion ? 1 : 0;
      }
    }
    report(runs == 9 && collisions == 0, "velocity_sweep",
           fmt("%d runs over v_des {10,15,20} x v_LV {3,6,9}: %d collisions, %d completed", runs,
               collisions, completed));
  }

  {
    const long ticks = nominal_constraints.ticks + sweep_constraints.ticks;
    const long conv = nominal_constraints.converged + sweep_constraints.converged;
    const double worst = std::min(nominal_constraints.worst_g, sweep_constraints.worst_g);
    const double fallback_share = static_cast<double>(m.fallback_ticks) / m.planner_ticks;
    report(worst >= -1e-6 && fallback_share < 0.01, "constraint_suite",
           fmt("%ld ticks, %ld converged, min g=%.3e; nominal fallback share=%.2f%% (%d/%d)", ticks,
               conv, worst, 100 * fallback_share, m.fallback_ticks, m.planner_ticks));
  }

  check_nmpc_oracles();
  check_gradients();
  check_dynamics();

  {
    check_static_progress(sets);
    report(sets.interim_outside == 0 && sets.not_safe == 0 && sets.not_reachable == 0 &&
               sets.nonempty_ticks > 0,
           "set_properties",
           fmt("%ld ticks with nonempty S_SR, interim outside=%ld, %ld points: not safe=%ld not "
               "reachable=%ld",
               sets.nonempty_ticks, sets.interim_outside, sets.points_checked, sets.not_safe,
               sets.not_reachable));
  }

  {
    const std::string first = run_bytes(nominal);
    const std::string second = run_bytes(run(nominal_sc));
    report(first == second, "determinism",
           fmt("two runs of the nominal scenario, %zu bytes each, identical=%s", first.size(),
               first == second ? "true" : "false"));
  }

  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
