// Command-line front end: run, sweep, dump-riskmap, validate-scenario.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "overtake/bridge.hpp"
#include "overtake/output.hpp"
#include "overtake/reachability.hpp"
#include "overtake/scenario_io.hpp"
#include "overtake/sim.hpp"

namespace fs = std::filesystem;
using namespace overtake;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMissingFile = 2;
constexpr int kExitSchema = 3;

struct Common {
  std::string scenario;
  std::string out;
  std::vector<std::string> overrides;
};

fs::path output_dir(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv("OVERTAKE_OUT_DIR"); env && *env) return env;
  return "out";
}

void add_common(CLI::App* cmd, Common& c, bool with_out) {
  cmd->add_option("--scenario", c.scenario, "Scenario JSON file")->required();
  if (with_out) {
    cmd->add_option("--out", c.out, "Output directory (default: $OVERTAKE_OUT_DIR or ./out)");
  }
  cmd->add_option("--set", c.overrides, "Override a scenario field, e.g. behavior.v_des=12")
      ->take_all()
      ->allow_extra_args(false);
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int cmd_run(const Common& c, bool serve, int port, bool headless) {
  Scenario sc = load_scenario(c.scenario, c.overrides);
  if (serve) {
    BridgeOptions opt;
    opt.port = port;
    opt.autostart = headless;
    BridgeServer server(std::move(sc), opt);
    const int bound = server.bind();
    std::cerr << "bridge listening on 127.0.0.1:" << bound << std::endl;
    server.serve();
    return 0;
  }
  const RunResult result = run(sc);
  const fs::path dir = output_dir(c);
  write_run_outputs(dir, result);
  if (!headless) {
    const RunMetrics& m = result.metrics;
    std::printf("timeline %s completion=%s collision=%s min_clearance=%.3f max_intrusion=%.3f\n",
                timeline_string(m).c_str(), m.completion ? "true" : "false",
                m.collision_occurred ? "true" : "false", m.min_clearance, m.max_intrusion);
    std::printf("outputs written to %s\n", dir.string().c_str());
  }
  return 0;
}

int cmd_sweep(const Common& c, const std::string& v_des_list, const std::string& v_lv_list,
              int lead_index, bool headless) {
  const json base = read_scenario_document(c.scenario);
  const std::vector<double> v_des = parse_list(v_des_list);
  const std::vector<double> v_lv = parse_list(v_lv_list);
  const fs::path dir = output_dir(c);
  fs::create_directories(dir);
  std::ofstream table(dir / "sweep.csv", std::ios::binary);
  table << "v_des,v_lv,collision_occurred,completion,min_clearance,max_intrusion,timeline,"
           "fallback_ticks,max_iter_ticks\n";
  int collisions = 0;
  for (double vd : v_des) {
    for (double vl : v_lv) {
      json doc = base;
      for (const std::string& o : c.overrides) apply_override(doc, o);
      apply_override(doc, "behavior.v_des=" + json(vd).dump());
      apply_override(doc, "traffic." + std::to_string(lead_index) + ".speed=" + json(vl).dump());
      const Scenario sc = scenario_from_json(std::move(doc));
      const RunResult r = run(sc);
      const RunMetrics& m = r.metrics;
      collisions += m.collision_occurred ? 1 : 0;
      char row[256];
      std::snprintf(row, sizeof row, "%g,%g,%s,%s,%.6f,%.6f,%s,%d,%d\n", vd, vl,
                    m.collision_occurred ? "true" : "false", m.completion ? "true" : "false",
                    m.min_clearance, m.max_intrusion, timeline_string(m).c_str(), m.fallback_ticks,
                    m.max_iter_ticks);
      table << row;
      if (!headless) std::fputs(row, stdout);
    }
  }
  if (!headless) {
    std::printf("%zu runs, %d with collisions; table in %s\n", v_des.size() * v_lv.size(),
                collisions, (dir / "sweep.csv").string().c_str());
  }
  return 0;
}

int cmd_dump_riskmap(const Common& c, double at) {
  Scenario sc = load_scenario(c.scenario, c.overrides);
  Simulation sim(sc);
  do {
    sim.step();
  } while (!sim.done() && sim.last_plan().t + 1e-9 < at);
  const PlanSnapshot& plan = sim.last_plan();
  const fs::path dir = output_dir(c);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "riskmap.csv", std::ios::binary);
    write_grid_csv(f, plan.risk.grid);
  }
  {
    std::ofstream f(dir / "reachable.csv", std::ios::binary);
    write_polygon_csv(f, plan.reach.boundary);
  }
  {
    std::ofstream f(dir / "safe_reachable.csv", std::ios::binary);
    write_polygon_csv(f, plan.ssr.points);
  }
  std::printf("risk map at t=%.2f (%zu safe cells, %zu safe and reachable) written to %s\n", plan.t,
              plan.risk.safe.size(), plan.ssr.size(), dir.string().c_str());
  return 0;
}

int cmd_validate(const Common& c) {
  const Scenario sc = load_scenario(c.scenario, c.overrides);
  std::printf("%s: ok (schema_version %d, %zu actors, %zu events)\n", c.scenario.c_str(),
              sc.schema_version, sc.traffic.size(), sc.events.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop overtaking simulator"};
  app.require_subcommand(1);

  Common run_args, sweep_args, dump_args, validate_args;
  bool serve = false, headless = false;
  int port = 8765;
  auto* run_cmd = app.add_subcommand("run", "Run one scenario and write logs and metrics");
  add_common(run_cmd, run_args, true);
  run_cmd->add_flag("--serve", serve, "Expose the session over the bridge socket instead");
  run_cmd->add_option("--port", port, "Bridge port")->check(CLI::Range(1, 65535));
  run_cmd->add_flag("--headless", headless,
                    "No console summary; with --serve, start ticking as soon as a client connects");

  std::string v_des_list = "10,15,20", v_lv_list = "3,6,9";
  int lead_index = 0;
  bool sweep_headless = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of ego and lead-vehicle speeds");
  add_common(sweep_cmd, sweep_args, true);
  sweep_cmd->add_option("--v-des", v_des_list, "Comma-separated desired ego speeds");
  sweep_cmd->add_option("--v-lv", v_lv_list, "Comma-separated lead-vehicle speeds");
  sweep_cmd->add_option("--lead-index", lead_index, "Index of the lead vehicle in traffic");
  sweep_cmd->add_flag("--headless", sweep_headless, "No console output");

  double at = 0.0;
  auto* dump_cmd = app.add_subcommand("dump-riskmap", "Write the risk grid and sets of one tick");
  add_common(dump_cmd, dump_args, true);
  dump_cmd->add_option("--time", at, "Simulated time of the dumped tick (s)");

  auto* validate_cmd = app.add_subcommand("validate-scenario", "Check a scenario file");
  add_common(validate_cmd, validate_args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run_args, serve, port, headless);
    if (*sweep_cmd) return cmd_sweep(sweep_args, v_des_list, v_lv_list, lead_index, sweep_headless);
    if (*dump_cmd) return cmd_dump_riskmap(dump_args, at);
    if (*validate_cmd) return cmd_validate(validate_args);
  } catch (const ScenarioFileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const ScenarioError& e) {
    std::cerr << "schema violation: " << e.what() << '\n';
    return kExitSchema;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
