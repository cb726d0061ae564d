#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "overtake/sim.hpp"

namespace overtake {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Invalid scenario content; `path` is the dotted location of the offending field.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string path, const std::string& message)
      : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline std::string_view to_string(CommandKind k) {
  switch (k) {
    case CommandKind::trigger_overtake: return "trigger_overtake";
    case CommandKind::trigger_abort: return "trigger_abort";
    case CommandKind::spawn_oncoming: return "spawn_oncoming";
  }
  return "?";
}

inline std::optional<CommandKind> parse_command_kind(std::string_view s) {
  if (s == "trigger_overtake") return CommandKind::trigger_overtake;
  if (s == "trigger_abort") return CommandKind::trigger_abort;
  if (s == "spawn_oncoming") return CommandKind::spawn_oncoming;
  return std::nullopt;
}

// ---------------------------------------------------------------------------------------
// Serialisation.

inline json geometry_json(const VehicleGeometry& g) {
  return {{"l_f", g.l_f}, {"l_r", g.l_r}, {"length", g.length}, {"width", g.width}};
}

inline json to_json(const Scenario& sc) {
  json j;
  j["schema_version"] = sc.schema_version;
  j["name"] = sc.name;
  j["duration"] = sc.duration;
  j["plant_dt"] = sc.plant_dt;
  j["planner_period"] = sc.planner_period;
  j["seed"] = sc.seed;
  j["steering_lag"] = {{"enabled", sc.steering_lag}, {"tau", sc.steering_tau}};

  json centerline = json::array();
  for (const Vec2& p : sc.road.centerline()) centerline.push_back({p.x, p.y});
  j["road"] = {{"lane_count", sc.road.lane_count()},
               {"lane_width", sc.road.lane_width()},
               {"centerline", centerline}};

  const VehicleState& e = sc.ego.state;
  const ControlLimits& l = sc.ego.limits;
  j["ego"] = {{"state", {{"x", e.x}, {"y", e.y}, {"psi", e.psi}, {"v", e.v}}},
              {"geometry", geometry_json(sc.ego.geom)},
              {"limits",
               {{"a_min", l.a_min}, {"a_max", l.a_max}, {"delta_min", l.delta_min},
                {"delta_max", l.delta_max}}}};

  j["traffic"] = json::array();
  for (const ActorSpec& a : sc.traffic) {
    json profile = json::array();
    for (const SpeedPoint& p : a.profile) profile.push_back({p.t, p.v});
    j["traffic"].push_back({{"id", a.id},
                            {"lane", a.lane},
                            {"s0", a.s0},
                            {"speed", a.speed},
                            {"direction", a.direction},
                            {"geometry", geometry_json(a.geom)},
                            {"profile", profile}});
  }

  j["events"] = json::array();
  for (const TimedEvent& ev : sc.events) {
    json item = {{"t", ev.t}, {"kind", std::string(to_string(ev.kind))}};
    if (ev.kind == CommandKind::spawn_oncoming) {
      item["speed"] = ev.speed;
      item["gap"] = ev.gap;
    }
    j["events"].push_back(item);
  }

  const BehaviorParams& b = sc.behavior;
  j["behavior"] = {{"d_lanekeep", b.d_lanekeep},
                   {"d_follow_trigger", b.d_follow_trigger},
                   {"d_safe_overtake_zone", b.d_safe_overtake_zone},
                   {"dv_overtake", b.dv_overtake},
                   {"dv_abort", b.dv_abort},
                   {"ttc_abort", b.ttc_abort},
                   {"v_des", b.v_des},
                   {"v_max", b.v_max},
                   {"auto_overtake", b.auto_overtake},
                   {"oncoming_range", b.oncoming_range},
                   {"home_lane", b.home_lane}};

  const RiskParams& r = sc.risk;
  j["risk"] = {{"obstacle_gain", r.obstacle_gain}, {"obstacle_decay", r.obstacle_decay},
               {"edge_gain", r.edge_gain},         {"edge_decay", r.edge_decay},
               {"threshold", r.threshold},         {"cap", r.cap},
               {"epsilon", r.epsilon},             {"triangle_min", r.triangle_min},
               {"triangle_gain", r.triangle_gain}, {"resolution", r.resolution},
               {"radius", r.radius}};

  const PlannerConfig& p = sc.planner;
  const SolverOptions& s = p.solver;
  j["planner"] = {{"horizon", p.horizon},
                  {"dt", p.dt},
                  {"inflation", p.inflation},
                  {"exponent", p.exponent},
                  {"max_ellipses", p.max_ellipses},
                  {"v_min", p.state_bounds.lower(3)},
                  {"v_max", p.state_bounds.upper(3)},
                  {"solver",
                   {{"max_iterations", s.max_iterations},
                    {"kkt_tolerance", s.kkt_tolerance},
                    {"violation_tolerance", s.violation_tolerance},
                    {"elastic_penalty", s.elastic_penalty},
                    {"hessian_step", s.hessian_step},
                    {"eigenvalue_floor", s.eigenvalue_floor},
                    {"side_starts", s.side_starts},
                    {"side_start_steer", s.side_start_steer}}}};
  return j;
}

// ---------------------------------------------------------------------------------------
// Parsing. The document is overlaid on the defaults, then read field by field.

namespace detail {

/// Typed access into a JSON object that reports dotted paths and rejects unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ScenarioError(path_.empty() ? "<root>" : path_, "expected an object");
  }
  /// Rejects keys that were never read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ScenarioError(child(key), "unknown field");
    }
  }

  std::string child(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json& at(std::string_view key) {
    seen_.insert(std::string(key));
    const auto it = j_.find(std::string(key));
    if (it == j_.end()) throw ScenarioError(child(key), "missing field");
    return *it;
  }

  double number(std::string_view key) {
    const json& v = at(key);
    if (!v.is_number()) throw ScenarioError(child(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ScenarioError(child(key), "must be finite");
    return x;
  }

  int integer(std::string_view key) {
    const json& v = at(key);
    if (!v.is_number_integer()) throw ScenarioError(child(key), "expected an integer");
    return v.get<int>();
  }

  bool boolean(std::string_view key) {
    const json& v = at(key);
    if (!v.is_boolean()) throw ScenarioError(child(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(std::string_view key) {
    const json& v = at(key);
    if (!v.is_string()) throw ScenarioError(child(key), "expected a string");
    return v.get<std::string>();
  }

  const json& array(std::string_view key) {
    const json& v = at(key);
    if (!v.is_array()) throw ScenarioError(child(key), "expected an array");
    return v;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ScenarioError(path, message);
}

inline Vec2 read_point(const json& j, const std::string& path) {
  require(j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(), path,
          "expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline VehicleGeometry read_geometry(const json& j, const std::string& path) {
  Reader r(j, path);
  VehicleGeometry g{r.number("l_f"), r.number("l_r"), r.number("length"), r.number("width")};
  require(g.l_f > 0, r.child("l_f"), "must be > 0");
  require(g.l_r > 0, r.child("l_r"), "must be > 0");
  require(g.width > 0, r.child("width"), "must be > 0");
  require(g.length > 0 && g.l_f + g.l_r <= g.length, r.child("length"),
          "must be > 0 and at least l_f + l_r");
  r.finish();
  return g;
}

inline void merge_defaults(json& target, const json& defaults) {
  if (!target.is_object() || !defaults.is_object()) return;
  for (const auto& [key, value] : defaults.items()) {
    if (!target.contains(key)) {
      target[key] = value;
    } else if (value.is_object()) {
      merge_defaults(target[key], value);
    }
  }
}

}  // namespace detail

/// Reads and validates a scenario document. Omitted fields take their defaults; list
/// entries (traffic, events) must be complete apart from the optional actor fields.
inline Scenario scenario_from_json(json doc) {
  using detail::Reader;
  using detail::require;
  if (!doc.is_object()) throw ScenarioError("<root>", "expected an object");
  if (!doc.contains("schema_version")) throw ScenarioError("schema_version", "missing field");
  detail::merge_defaults(doc, to_json(Scenario{}));

  Scenario sc;
  Reader root(doc, "");
  sc.schema_version = root.integer("schema_version");
  require(sc.schema_version == kSchemaVersion, "schema_version",
          "unsupported version " + std::to_string(sc.schema_version));
  sc.name = root.string("name");
  sc.duration = root.number("duration");
  require(sc.duration > 0, "duration", "must be > 0");
  sc.plant_dt = root.number("plant_dt");
  require(sc.plant_dt > 0, "plant_dt", "must be > 0");
  sc.planner_period = root.number("planner_period");
  const double ratio = sc.planner_period / sc.plant_dt;
  require(sc.planner_period > 0 && ratio >= 1.0 - 1e-9 && std::abs(ratio - std::round(ratio)) < 1e-9,
          "planner_period", "must be a positive multiple of plant_dt");
  {
    const json& seed = root.at("seed");
    require(seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<long long>() >= 0),
            "seed", "expected a non-negative integer");
    sc.seed = seed.get<std::uint64_t>();
  }
  {
    Reader lag(root.at("steering_lag"), "steering_lag");
    sc.steering_lag = lag.boolean("enabled");
    sc.steering_tau = lag.number("tau");
    require(sc.steering_tau > 0, "steering_lag.tau", "must be > 0");
    lag.finish();
  }
  {
    Reader road(root.at("road"), "road");
    const int lanes = road.integer("lane_count");
    require(lanes >= 1, "road.lane_count", "must be >= 1");
    const double width = road.number("lane_width");
    require(width > 0, "road.lane_width", "must be > 0");
    std::vector<Vec2> line;
    const json& cl = road.array("centerline");
    for (std::size_t i = 0; i < cl.size(); ++i) {
      line.push_back(detail::read_point(cl[i], "road.centerline." + std::to_string(i)));
    }
    require(line.size() >= 2, "road.centerline", "needs at least two points");
    for (std::size_t i = 1; i < line.size(); ++i) {
      require(distance(line[i], line[i - 1]) > 0, "road.centerline." + std::to_string(i),
              "repeats the previous point");
    }
    road.finish();
    sc.road = RoadModel(lanes, width, std::move(line));
  }
  {
    Reader ego(root.at("ego"), "ego");
    Reader st(ego.at("state"), "ego.state");
    sc.ego.state = {st.number("x"), st.number("y"), st.number("psi"), st.number("v")};
    require(sc.ego.state.v >= 0, "ego.state.v", "must be >= 0");
    sc.ego.state.psi = wrap_angle(sc.ego.state.psi);
    st.finish();
    sc.ego.geom = detail::read_geometry(ego.at("geometry"), "ego.geometry");
    Reader lim(ego.at("limits"), "ego.limits");
    ControlLimits& l = sc.ego.limits;
    l = {lim.number("a_min"), lim.number("a_max"), lim.number("delta_min"), lim.number("delta_max")};
    require(l.a_min < 0, "ego.limits.a_min", "must be < 0");
    require(l.a_max > 0, "ego.limits.a_max", "must be > 0");
    require(l.delta_max > 0 && l.delta_max < 1.5, "ego.limits.delta_max", "must be in (0, 1.5)");
    require(l.delta_min == -l.delta_max, "ego.limits.delta_min", "must equal -delta_max");
    lim.finish();
    ego.finish();
  }
  {
    const json& traffic = root.array("traffic");
    std::set<int> ids;
    for (std::size_t i = 0; i < traffic.size(); ++i) {
      const std::string path = "traffic." + std::to_string(i);
      json item = traffic[i];
      if (item.is_object()) {
        detail::merge_defaults(item, {{"direction", 1},
                                      {"geometry", geometry_json(VehicleGeometry{})},
                                      {"profile", json::array()}});
      }
      Reader r(item, path);
      ActorSpec a;
      a.id = r.integer("id");
      require(ids.insert(a.id).second, r.child("id"), "duplicate id");
      a.lane = r.integer("lane");
      require(a.lane >= 0 && a.lane < sc.road.lane_count(), r.child("lane"), "no such lane");
      a.s0 = r.number("s0");
      a.speed = r.number("speed");
      require(a.speed >= 0, r.child("speed"), "must be >= 0");
      a.direction = r.integer("direction");
      require(a.direction == 1 || a.direction == -1, r.child("direction"), "must be 1 or -1");
      a.geom = detail::read_geometry(r.at("geometry"), r.child("geometry"));
      const json& prof = r.array("profile");
      for (std::size_t k = 0; k < prof.size(); ++k) {
        const std::string pp = r.child("profile") + "." + std::to_string(k);
        const Vec2 tv = detail::read_point(prof[k], pp);
        require(tv.y >= 0, pp, "speed must be >= 0");
        require(a.profile.empty() || tv.x > a.profile.back().t, pp, "times must increase");
        a.profile.push_back({tv.x, tv.y});
      }
      r.finish();
      sc.traffic.push_back(std::move(a));
    }
  }
  {
    const json& events = root.array("events");
    for (std::size_t i = 0; i < events.size(); ++i) {
      const std::string path = "events." + std::to_string(i);
      Reader r(events[i], path);
      TimedEvent ev;
      ev.t = r.number("t");
      require(ev.t >= 0, r.child("t"), "must be >= 0");
      const auto kind = parse_command_kind(r.string("kind"));
      require(kind.has_value(), r.child("kind"),
              "expected trigger_overtake, trigger_abort or spawn_oncoming");
      ev.kind = *kind;
      if (ev.kind == CommandKind::spawn_oncoming) {
        ev.speed = r.number("speed");
        require(ev.speed > 0, r.child("speed"), "must be > 0");
        ev.gap = r.number("gap");
        require(ev.gap > 0, r.child("gap"), "must be > 0");
      }
      require(sc.events.empty() || ev.t >= sc.events.back().t, r.child("t"),
              "events must be in time order");
      r.finish();
      sc.events.push_back(ev);
    }
  }
  {
    Reader r(root.at("behavior"), "behavior");
    BehaviorParams& b = sc.behavior;
    auto positive = [&](std::string_view key) {
      const double v = r.number(key);
      require(v > 0, r.child(key), "must be > 0");
      return v;
    };
    b.d_lanekeep = positive("d_lanekeep");
    b.d_follow_trigger = positive("d_follow_trigger");
    b.d_safe_overtake_zone = r.number("d_safe_overtake_zone");
    require(b.d_safe_overtake_zone >= 0, "behavior.d_safe_overtake_zone", "must be >= 0");
    b.dv_overtake = positive("dv_overtake");
    b.dv_abort = r.number("dv_abort");
    require(b.dv_abort >= 0, "behavior.dv_abort", "must be >= 0");
    b.ttc_abort = positive("ttc_abort");
    b.v_des = r.number("v_des");
    require(b.v_des >= 0, "behavior.v_des", "must be >= 0");
    b.v_max = positive("v_max");
    require(b.v_des <= b.v_max, "behavior.v_des", "must not exceed behavior.v_max");
    b.auto_overtake = r.boolean("auto_overtake");
    b.oncoming_range = positive("oncoming_range");
    b.home_lane = r.integer("home_lane");
    require(b.home_lane >= 0 && b.home_lane < sc.road.lane_count(), "behavior.home_lane",
            "no such lane");
    r.finish();
  }
  {
    Reader r(root.at("risk"), "risk");
    RiskParams& k = sc.risk;
    auto positive = [&](std::string_view key) {
      const double v = r.number(key);
      require(v > 0, r.child(key), "must be > 0");
      return v;
    };
    k.obstacle_gain = positive("obstacle_gain");
    k.obstacle_decay = positive("obstacle_decay");
    k.edge_gain = positive("edge_gain");
    k.edge_decay = positive("edge_decay");
    k.threshold = positive("threshold");
    k.cap = positive("cap");
    require(k.cap > k.threshold, "risk.cap", "must exceed risk.threshold");
    k.epsilon = positive("epsilon");
    k.triangle_min = positive("triangle_min");
    k.triangle_gain = r.number("triangle_gain");
    require(k.triangle_gain >= 0, "risk.triangle_gain", "must be >= 0");
    k.resolution = positive("resolution");
    k.radius = positive("radius");
    r.finish();
  }
  {
    Reader r(root.at("planner"), "planner");
    PlannerConfig& p = sc.planner;
    p.horizon = r.integer("horizon");
    require(p.horizon >= 1, "planner.horizon", "must be >= 1");
    p.dt = r.number("dt");
    require(p.dt > 0, "planner.dt", "must be > 0");
    p.inflation = r.number("inflation");
    require(p.inflation >= 1, "planner.inflation", "must be >= 1");
    p.exponent = r.integer("exponent");
    require(p.exponent >= 2 && p.exponent % 2 == 0, "planner.exponent", "must be an even integer >= 2");
    p.max_ellipses = r.integer("max_ellipses");
    require(p.max_ellipses >= 0, "planner.max_ellipses", "must be >= 0");
    p.state_bounds.lower(3) = r.number("v_min");
    p.state_bounds.upper(3) = r.number("v_max");
    require(p.state_bounds.lower(3) >= 0, "planner.v_min", "must be >= 0");
    require(p.state_bounds.upper(3) > p.state_bounds.lower(3), "planner.v_max",
            "must exceed planner.v_min");
    Reader s(r.at("solver"), "planner.solver");
    SolverOptions& o = p.solver;
    o.max_iterations = s.integer("max_iterations");
    require(o.max_iterations >= 1, "planner.solver.max_iterations", "must be >= 1");
    o.kkt_tolerance = s.number("kkt_tolerance");
    o.violation_tolerance = s.number("violation_tolerance");
    o.elastic_penalty = s.number("elastic_penalty");
    o.hessian_step = s.number("hessian_step");
    o.eigenvalue_floor = s.number("eigenvalue_floor");
    o.side_starts = s.boolean("side_starts");
    o.side_start_steer = s.number("side_start_steer");
    require(o.kkt_tolerance > 0, "planner.solver.kkt_tolerance", "must be > 0");
    require(o.violation_tolerance > 0, "planner.solver.violation_tolerance", "must be > 0");
    require(o.elastic_penalty > 0, "planner.solver.elastic_penalty", "must be > 0");
    require(o.hessian_step > 0, "planner.solver.hessian_step", "must be > 0");
    require(o.eigenvalue_floor > 0, "planner.solver.eigenvalue_floor", "must be > 0");
    require(o.side_start_steer > 0 && o.side_start_steer <= 1, "planner.solver.side_start_steer",
            "must be in (0, 1]");
    s.finish();
    r.finish();
  }
  root.finish();
  return sc;
}

/// Applies `path=value` to a document. Path segments are object keys or array indices;
/// the value is parsed as JSON when possible and kept as a string otherwise.
inline void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ScenarioError(std::string(assignment), "override must look like key=value");
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::string& k = keys[i];
    const bool last = i + 1 == keys.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(k, &used);
        if (used != k.size()) throw std::invalid_argument(k);
      } catch (const std::exception&) {
        throw ScenarioError(path, "'" + k + "' is not an array index");
      }
      if (idx >= node->size()) throw ScenarioError(path, "index " + k + " out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ScenarioError(path, "'" + k + "' indexes a scalar");
      node = &(*node)[k];
    }
    if (last) *node = value;
  }
}

/// Missing or unreadable scenario file.
class ScenarioFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline json read_scenario_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioFileError("cannot open scenario file '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ScenarioError("<root>", "not valid JSON");
  return doc;
}

inline Scenario load_scenario(const std::string& path,
                              const std::vector<std::string>& overrides = {}) {
  json doc = read_scenario_document(path);
  for (const std::string& o : overrides) apply_override(doc, o);
  return scenario_from_json(std::move(doc));
}

}  // namespace overtake
