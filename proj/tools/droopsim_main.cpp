// droopsim: transient study tool for an islanded PV + battery microgrid
// behind a grid-forming converter with frequency-droop damping.
//
// Subcommands:
//   run       one simulation at droop.k_d, timeseries CSV + metrics line
//   sweep     one run per grid point, per-run CSVs, summary.csv, table.txt
//   size      constrained search over the grid, sizing_report.csv + table
//   fixtures  verify (or regenerate) the golden regression fixtures
//
// Exit codes: 0 success/settled, 1 configuration error, 2 run did not settle
// or was infeasible, 3 no feasible damping value.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "droopsim/config.hpp"
#include "droopsim/csv.hpp"
#include "droopsim/engine.hpp"
#include "droopsim/fixtures.hpp"
#include "droopsim/metrics.hpp"
#include "droopsim/sizing.hpp"

namespace fs = std::filesystem;
using namespace droopsim;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  unsigned jobs = 0;
};

Config load(const CommonArgs& args) {
  nlohmann::json root = nlohmann::json::object();
  std::string path = args.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("DROOPSIM_CONFIG")) path = env;
  }
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    try {
      root = nlohmann::json::parse(is, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
  }
  for (const auto& ov : args.overrides) apply_override(root, ov);
  Config cfg = load_config_json(root);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.jobs != 0) cfg.jobs = args.jobs;
  prepare(cfg);
  return cfg;
}

std::string kd_tag(double kd) { return "kd" + format_double(kd); }

void write_timeseries_file(const Config& cfg, double kd,
                           const std::vector<TimeSeriesRecord>& records) {
  fs::create_directories(cfg.out_dir);
  const fs::path path = fs::path(cfg.out_dir) / ("timeseries_" + kd_tag(kd) + ".csv");
  std::ostringstream os;
  write_timeseries_csv(os, records);
  write_file(path.string(), os.str());
}

void print_metrics_line(const RunMetrics& m) {
  char settle[32] = "-";
  if (m.settling_time)
    std::snprintf(settle, sizeof(settle), "%.3f s", *m.settling_time);
  std::printf(
      "k_d=%s status=%s freq_extremum=%.4f Hz rocof_max=%.4f Hz/s "
      "p_batt_peak=%.1f kW vdc_extremum=%.2f V settling=%s overshoot=%.4f Hz\n",
      format_double(m.k_d).c_str(), to_string(m.status), m.freq_extremum,
      m.rocof_max, m.p_batt_peak / 1e3, m.vdc_extremum, settle, m.overshoot);
}

int cmd_run(const CommonArgs& args) {
  const Config cfg = load(args);
  Engine engine(cfg.scenario, cfg.models);
  const RunResult run = engine.run();
  write_timeseries_file(cfg, cfg.models.droop.k_d, run.records);

  MetricsConfig mc = cfg.metrics_template();
  mc.k_d = cfg.models.droop.k_d;
  const RunMetrics m = summarize(run, mc);
  print_metrics_line(m);
  if (run.status == RunStatus::infeasible)
    std::printf("infeasible: %s at t=%s s\n", run.reason.c_str(),
                format_double(run.fault_time).c_str());
  return run.status == RunStatus::settled ? 0 : 2;
}

int cmd_sweep(const CommonArgs& args) {
  const Config cfg = load(args);
  const auto runs = run_grid(cfg.kd_grid, cfg.scenario, cfg.models,
                             cfg.metrics_template(), cfg.jobs);
  std::vector<RunMetrics> rows;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    write_timeseries_file(cfg, cfg.kd_grid[k], runs[k].first.records);
    rows.push_back(runs[k].second);
  }
  std::ostringstream os;
  write_summary_csv(os, rows);
  write_file((fs::path(cfg.out_dir) / "summary.csv").string(), os.str());

  std::string table = render_summary_table(rows);
  table += "\nconditions: constant irradiance " +
           format_double(cfg.scenario.g_irr) + " W/m2, cell temperature " +
           format_double(cfg.scenario.t_cell) + " K\n";
  write_file((fs::path(cfg.out_dir) / "table.txt").string(), table);
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_size(const CommonArgs& args) {
  const Config cfg = load(args);
  const auto report =
      sweep(cfg.kd_grid, cfg.scenario, cfg.models, cfg.constraints, cfg.jobs);

  fs::create_directories(cfg.out_dir);
  std::ostringstream os;
  os << "k_d,freq_extremum_hz,rocof_max_hz_per_s,p_batt_peak_w,vdc_extremum_v,"
        "settling_time_s,overshoot_hz,status,energy_wh,limited_s,feasible,"
        "recommended,power_rating_w,energy_rating_wh\n";
  for (const auto& ev : report.per_kd) {
    const bool recommended = report.recommended_kd &&
                             ev.k_d >= report.recommended_kd->first &&
                             ev.k_d <= report.recommended_kd->second &&
                             ev.safety_ok;
    os << format_double(ev.k_d) << ',' << format_double(ev.metrics.freq_extremum)
       << ',' << format_double(ev.metrics.rocof_max) << ','
       << format_double(ev.metrics.p_batt_peak) << ','
       << format_double(ev.metrics.vdc_extremum) << ','
       << (ev.metrics.settling_time ? format_double(*ev.metrics.settling_time)
                                    : std::string{})
       << ',' << format_double(ev.metrics.overshoot) << ','
       << to_string(ev.metrics.status) << ',' << format_double(ev.energy_wh)
       << ',' << format_double(ev.limited_seconds) << ','
       << (ev.feasible ? '1' : '0') << ',' << (recommended ? '1' : '0') << ','
       << format_double(report.battery_power_rating) << ','
       << format_double(report.battery_energy_rating) << '\n';
  }
  write_file((fs::path(cfg.out_dir) / "sizing_report.csv").string(), os.str());

  std::vector<RunMetrics> rows;
  for (const auto& ev : report.per_kd) rows.push_back(ev.metrics);
  std::fputs(render_summary_table(rows).c_str(), stdout);
  if (report.recommended_kd) {
    std::printf(
        "recommended k_d interval: [%s, %s]\n"
        "battery power rating: %.1f kW (margin %.2f)\n"
        "battery energy rating: %.3f kWh (margin %.2f)\n",
        format_double(report.recommended_kd->first).c_str(),
        format_double(report.recommended_kd->second).c_str(),
        report.battery_power_rating / 1e3, cfg.constraints.margin,
        report.battery_energy_rating / 1e3, cfg.constraints.margin);
    return 0;
  }
  std::printf("no feasible damping value under the given constraints\n");
  return 3;
}

int cmd_fixtures(const CommonArgs& args, const std::string& dir, bool regen) {
  (void)args;
  if (regen) {
    regenerate_fixtures(dir);
    std::printf("fixtures regenerated in %s\n", dir.c_str());
    return 0;
  }
  const auto report = verify_fixtures(dir);
  if (report.pass) {
    std::printf("fixtures: all pass\n");
    return 0;
  }
  for (const auto& f : report.failures)
    std::printf("fixture mismatch: column=%s row=%d expected=%s actual=%s (%s)\n",
                f.column.c_str(), f.row, format_double(f.expected).c_str(),
                format_double(f.actual).c_str(), f.note.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"islanded PV + battery microgrid frequency-droop study"};
  app.require_subcommand(1);

  CommonArgs args;
  app.add_option("--config", args.config_path,
                 "configuration file (JSON, // comments allowed); "
                 "DROOPSIM_CONFIG is used when omitted");
  app.add_option("--out", args.out_dir, "output directory");
  app.add_option("--set", args.overrides,
                 "override a config value, e.g. --set droop.k_d=90")
      ->take_all();
  app.add_option("--jobs", args.jobs, "sweep worker count (0 = all cores)");

  auto* run = app.add_subcommand("run", "single simulation at droop.k_d");
  auto* sweepcmd = app.add_subcommand("sweep", "simulate every sweep.kd_grid point");
  auto* size = app.add_subcommand("size", "constrained k_d and battery sizing search");
  auto* fixtures = app.add_subcommand("fixtures", "verify golden fixtures");
  std::string fixture_dir = "fixtures/golden";
  bool regen = false;
  fixtures->add_option("--dir", fixture_dir, "fixture directory");
  fixtures->add_flag("--regenerate", regen, "rewrite the expected outputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(args);
    if (sweepcmd->parsed()) return cmd_sweep(args);
    if (size->parsed()) return cmd_size(args);
    if (fixtures->parsed()) return cmd_fixtures(args, fixture_dir, regen);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const InvalidParams& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const NoEquilibrium& e) {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
