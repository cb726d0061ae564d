#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "overtake/sim.hpp"

namespace overtake {

/// Column order of the per-step log.
inline constexpr const char* kTickCsvHeader =
    "t,x,y,psi,v,fsm,p_ref_x,p_ref_y,p_interim_x,p_interim_y,v_ref,a,delta,status,iterations,"
    "kkt_residual,emergency,min_clearance,lateral_excursion,min_g,g_values";

namespace detail {

inline std::string fmt(double v, const char* spec = "%.6f") {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  // Avoid "-0.000000" so that sign noise cannot make logs differ.
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

}  // namespace detail

inline void write_tick_csv(std::ostream& out, const std::vector<TickLog>& logs) {
  using detail::fmt;
  out << kTickCsvHeader << '\n';
  for (const TickLog& l : logs) {
    double min_g = std::numeric_limits<double>::infinity();
    std::string gs;
    for (std::size_t i = 0; i < l.g_values.size(); ++i) {
      min_g = std::min(min_g, l.g_values[i]);
      if (i) gs += ';';
      gs += fmt(l.g_values[i], "%.6g");
    }
    out << fmt(l.t, "%.3f") << ',' << fmt(l.ego.x) << ',' << fmt(l.ego.y) << ',' << fmt(l.ego.psi)
        << ',' << fmt(l.ego.v) << ',' << to_string(l.fsm) << ',' << fmt(l.p_ref.x) << ','
        << fmt(l.p_ref.y) << ',' << fmt(l.p_interim.x) << ',' << fmt(l.p_interim.y) << ','
        << fmt(l.v_ref) << ',' << fmt(l.control.a) << ',' << fmt(l.control.delta) << ','
        << to_string(l.status) << ',' << l.iterations << ',' << fmt(l.kkt_residual, "%.3e") << ','
        << (l.emergency ? 1 : 0) << ',' << fmt(l.min_clearance) << ','
        << fmt(l.lateral_excursion) << ',' << fmt(min_g, "%.6g") << ',' << gs << '\n';
  }
}

inline void write_actor_csv(std::ostream& out, const std::vector<TickLog>& logs) {
  using detail::fmt;
  out << "t,id,x,y,psi,v\n";
  for (const TickLog& l : logs) {
    for (const ActorState& a : l.actors) {
      out << fmt(l.t, "%.3f") << ',' << a.id << ',' << fmt(a.x) << ',' << fmt(a.y) << ','
          << fmt(a.psi) << ',' << fmt(a.v) << '\n';
    }
  }
}

inline nlohmann::json metrics_to_json(const RunMetrics& m) {
  auto num = [](double v) -> nlohmann::json {
    if (!std::isfinite(v)) return nullptr;
    return std::round(v * 1e6) / 1e6;
  };
  nlohmann::json timeline = nlohmann::json::array();
  for (const TimelineEntry& e : m.timeline) {
    timeline.push_back({{"state", std::string(to_string(e.state))}, {"t", num(e.t)}, {"cause", e.cause}});
  }
  return {{"collision_occurred", m.collision_occurred},
          {"min_clearance", num(m.min_clearance)},
          {"max_intrusion", num(m.max_intrusion)},
          {"intrusion_area", num(m.intrusion_area)},
          {"timeline", timeline},
          {"completion", m.completion},
          {"planner_ticks", m.planner_ticks},
          {"fallback_ticks", m.fallback_ticks},
          {"max_iter_ticks", m.max_iter_ticks},
          {"emergency_ticks", m.emergency_ticks},
          {"clamped_controls", m.clamped_controls},
          {"min_converged_g", num(m.min_converged_g)}};
}

/// Timeline as a compact state string, e.g. "LFOL".
inline std::string timeline_string(const RunMetrics& m) {
  std::string s;
  for (const TimelineEntry& e : m.timeline) s += to_string(e.state);
  return s;
}

/// Writes ticks.csv, actors.csv and metrics.json into `dir`, creating it if needed.
inline void write_run_outputs(const std::filesystem::path& dir, const RunResult& result) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("ticks.csv");
    write_tick_csv(f, result.logs);
  }
  {
    auto f = open("actors.csv");
    write_actor_csv(f, result.logs);
  }
  {
    auto f = open("metrics.json");
    f << metrics_to_json(result.metrics).dump(2) << '\n';
  }
}

}  // namespace overtake
