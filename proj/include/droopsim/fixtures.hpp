#pragma once

// Golden regression fixtures: a pinned config snapshot plus the summary it
// must reproduce, compared column by column under per-column tolerances.
// Fixtures are regenerated only by an explicit command; any drift is a
// failure.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "droopsim/config.hpp"
#include "droopsim/csv.hpp"
#include "droopsim/sizing.hpp"

namespace droopsim {

struct FixtureFailure {
  std::string column;
  int row = 0;
  double expected = 0.0;
  double actual = 0.0;
  std::string note;
};

struct FixtureReport {
  bool pass = false;
  std::vector<FixtureFailure> failures;
};

inline std::vector<RunMetrics> compute_summary(const Config& cfg) {
  const auto runs =
      run_grid(cfg.kd_grid, cfg.scenario, cfg.models, cfg.metrics_template(),
               cfg.jobs);
  std::vector<RunMetrics> rows;
  rows.reserve(runs.size());
  for (const auto& [run, metrics] : runs) rows.push_back(metrics);
  return rows;
}

inline FixtureReport verify_fixtures(const std::string& fixture_dir) {
  namespace fs = std::filesystem;
  FixtureReport report;
  const fs::path dir(fixture_dir);
  const fs::path cfg_path = dir / "config.json";
  const fs::path expected_path = dir / "summary.csv";
  const fs::path tol_path = dir / "tolerances.json";

  for (const auto& p : {cfg_path, expected_path, tol_path}) {
    if (!fs::exists(p)) {
      report.failures.push_back({p.filename().string(), 0, 0, 0, "missing fixture file"});
    }
  }
  if (!report.failures.empty()) return report;

  Config cfg = load_config_file(cfg_path.string());
  prepare(cfg);

  nlohmann::json tol;
  {
    std::ifstream is(tol_path);
    tol = nlohmann::json::parse(is, nullptr, true, true);
  }

  std::ifstream es(expected_path);
  std::string header;
  std::getline(es, header);
  if (header != kSummaryHeader) {
    report.failures.push_back({"header", 0, 0, 0, "unexpected summary header"});
    return report;
  }
  std::vector<std::vector<std::string>> expected_rows;
  std::string line;
  while (std::getline(es, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 8) cells.push_back("");
    expected_rows.push_back(cells);
  }

  const auto rows = compute_summary(cfg);
  if (rows.size() != expected_rows.size()) {
    report.failures.push_back({"rows", 0, double(expected_rows.size()),
                               double(rows.size()), "row count mismatch"});
    return report;
  }

  const char* columns[] = {"k_d",
                           "freq_extremum_hz",
                           "rocof_max_hz_per_s",
                           "p_batt_peak_w",
                           "vdc_extremum_v",
                           "settling_time_s",
                           "overshoot_hz",
                           "status"};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& m = rows[r];
    const double actual_num[] = {m.k_d,
                                 m.freq_extremum,
                                 m.rocof_max,
                                 m.p_batt_peak,
                                 m.vdc_extremum,
                                 m.settling_time ? *m.settling_time : 0.0,
                                 m.overshoot};
    for (int col = 0; col < 7; ++col) {
      const std::string& cell = expected_rows[r][col];
      if (col == 5 && cell.empty()) {
        if (m.settling_time)
          report.failures.push_back({columns[col], int(r), 0.0,
                                     *m.settling_time,
                                     "expected unsettled run"});
        continue;
      }
      const double want = parse_double(cell);
      const double rel_tol = tol.value(columns[col], 1e-9);
      const double scale = std::max(std::abs(want), 1.0);
      if (std::abs(actual_num[col] - want) > rel_tol * scale)
        report.failures.push_back(
            {columns[col], int(r), want, actual_num[col], "value drift"});
    }
    if (expected_rows[r][7] != to_string(m.status))
      report.failures.push_back(
          {"status", int(r), 0, 0,
           "expected " + expected_rows[r][7] + " got " + to_string(m.status)});
  }
  report.pass = report.failures.empty();
  return report;
}

inline void regenerate_fixtures(const std::string& fixture_dir) {
  namespace fs = std::filesystem;
  const fs::path dir(fixture_dir);
  Config cfg = load_config_file((dir / "config.json").string());
  prepare(cfg);
  const auto rows = compute_summary(cfg);
  std::ostringstream os;
  write_summary_csv(os, rows);
  write_file((dir / "summary.csv").string(), os.str());
}

}  // namespace droopsim
