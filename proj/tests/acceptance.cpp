// Acceptance suite. Each criterion prints one PASS/FAIL line; the whole
// binary fails if any criterion fails.

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "droopsim/config.hpp"
#include "droopsim/csv.hpp"
#include "droopsim/engine.hpp"
#include "droopsim/fixtures.hpp"
#include "droopsim/metrics.hpp"
#include "droopsim/sizing.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace droopsim;

namespace {

struct Criterion {
  std::string name;
  bool ok = true;
  explicit Criterion(std::string n) : name(std::move(n)) {}
  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      std::printf("        failed: %s\n", what.c_str());
    }
  }
  ~Criterion() {
    std::printf("ACCEPT %-4s %s\n", name.c_str(), ok ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
};

Config shipped_defaults() {
  Config cfg = load_config_file(std::string(DROOPSIM_SOURCE_DIR) +
                                "/configs/default.json");
  prepare(cfg);
  return cfg;
}

// The default grid runs are shared by criteria 3, 4, 5, 7 and 8.
const std::vector<std::pair<RunResult, RunMetrics>>& default_grid_runs() {
  static const auto runs = [] {
    const Config cfg = shipped_defaults();
    return run_grid(cfg.kd_grid, cfg.scenario, cfg.models,
                    cfg.metrics_template(), 0);
  }();
  return runs;
}

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cli(const std::string& cli_args) {
  const std::string cmd = std::string(DROOPSIM_CLI_PATH) + " " + cli_args + " 2>&1";
  CmdResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe))
    r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST_CASE("C1 pv quantitative", "[acceptance]") {
  Criterion c("C1");
  const auto t0 = std::chrono::steady_clock::now();

  const Config cfg = shipped_defaults();
  const auto& p = cfg.models.pv;
  const auto& d = cfg.models.pv_fit;

  const auto sc = solve_iv(d, p, 0.0, p.g_n, p.t_n);
  c.expect(std::abs(sc.current / p.n_p - 8.2) < 1e-9,
           "module short-circuit current is not 8.2 A");

  const auto oc = solve_iv(d, p, p.n_s * 32.9, p.g_n, p.t_n);
  c.expect(std::abs(oc.current) < 1e-9 * p.i_scn * p.n_p,
           "module open-circuit point is not 32.9 V");

  const auto [v_mpp, p_mpp] = oracles::dense_scan_mpp(d, p, p.g_n, p.t_n);
  c.expect(std::abs(p_mpp / (p.n_p * p.n_s) - 200.14) < 0.01 * 200.14,
           "module peak power off 200.14 W by more than 1%");
  c.expect(std::abs(v_mpp / p.n_s - 26.3) <= 0.3,
           "module peak voltage outside 26.3 +- 0.3 V");
  c.expect(std::abs(p_mpp - p.n_p * p.n_s * 200.14) <
               0.01 * p.n_p * p.n_s * 200.14,
           "array peak power off Np*Ns*200.14 W by more than 1%");

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(elapsed < 1.0, "runtime exceeded 1 s");
  REQUIRE(c.ok);
}

TEST_CASE("C2 battery closed form", "[acceptance]") {
  Criterion c("C2");
  const BatteryParams p;

  BatteryState fresh{0.0, 0.0, 0.0, 0.0};
  c.expect(terminal_voltage(p, fresh) == p.e0 + p.a_exp,
           "unloaded fresh pack must read exactly e0 + a_exp");

  BatteryState s{};
  const double dt = p.t_filter / 3000.0;
  for (int k = 0; k < 3000; ++k) s = battery_step(p, s, 100.0, dt);
  c.expect(std::abs(s.i_star - 63.2) < 0.01 * 63.2,
           "filtered current must reach 63.2% of the step at t_filter");
  REQUIRE(c.ok);
}

TEST_CASE("C3 droop steady state", "[acceptance]") {
  Criterion c("C3");
  const Config cfg = shipped_defaults();
  const auto& runs = default_grid_runs();

  for (std::size_t k = 1; k < cfg.kd_grid.size(); ++k) {  // 60, 90, 140
    const double kd = cfg.kd_grid[k];
    const auto& rec = runs[k].first.records;
    const double omega_ss = rec.back().freq_hz / cfg.models.droop.f_base;
    const double p_out_ss = rec.back().p_inv_w / cfg.models.droop.s_base;
    const double fixed_point =
        cfg.models.droop.omega_ref + (cfg.models.droop.p_ref - p_out_ss) / kd;
    c.expect(std::abs(omega_ss - fixed_point) < 1e-4,
             "k_d=" + format_double(kd) + ": settled frequency " +
                 format_double(omega_ss) + " pu is off the fixed point " +
                 format_double(fixed_point) + " pu");
  }
  REQUIRE(c.ok);
}

TEST_CASE("C4 trend suite over the damping grid", "[acceptance]") {
  Criterion c("C4");
  const auto t0 = std::chrono::steady_clock::now();
  const auto& runs = default_grid_runs();
  const auto& m0 = runs[0].second;
  const auto& m60 = runs[1].second;
  const auto& m90 = runs[2].second;
  const auto& m140 = runs[3].second;

  c.expect(m0.rocof_max > m60.rocof_max && m60.rocof_max > m90.rocof_max &&
               m90.rocof_max > m140.rocof_max,
           "rocof_max must be strictly decreasing in k_d");
  c.expect(m0.p_batt_peak < m60.p_batt_peak &&
               m60.p_batt_peak < m90.p_batt_peak &&
               m90.p_batt_peak < m140.p_batt_peak,
           "p_batt_peak must be strictly increasing in k_d");
  c.expect(std::abs(m60.freq_extremum - 60.0) > std::abs(m90.freq_extremum - 60.0) &&
               std::abs(m90.freq_extremum - 60.0) >
                   std::abs(m140.freq_extremum - 60.0),
           "settled frequency deviation must decrease in k_d");
  c.expect(m60.settling_time.has_value() && m90.settling_time.has_value() &&
               m140.settling_time.has_value(),
           "damped runs must settle");
  if (m60.settling_time && m90.settling_time && m140.settling_time)
    c.expect(*m60.settling_time <= *m90.settling_time &&
                 *m90.settling_time <= *m140.settling_time,
             "settling time must be non-decreasing in k_d");
  const double sag0 = 1500.0 - m0.vdc_extremum;
  const double sag60 = 1500.0 - m60.vdc_extremum;
  const double sag90 = 1500.0 - m90.vdc_extremum;
  const double sag140 = 1500.0 - m140.vdc_extremum;
  c.expect(sag0 < sag60 && sag60 < sag90 && sag90 < sag140,
           "dc-link excursion must be monotone in k_d");
  c.expect(m0.status != RunStatus::settled, "zero damping must not settle");

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(elapsed < 30.0, "grid evaluation exceeded 30 s");
  REQUIRE(c.ok);
}

TEST_CASE("C5 calibration partition", "[acceptance]") {
  Criterion c("C5");
  const auto& runs = default_grid_runs();
  c.expect(runs[0].second.rocof_max > 1.5,
           "k_d=0 rocof must exceed the 1.5 Hz/s pole-slipping floor");
  for (std::size_t k = 1; k < runs.size(); ++k)
    c.expect(runs[k].second.rocof_max < 1.0,
             "k_d=" + format_double(runs[k].second.k_d) +
                 " rocof must stay below 1.0 Hz/s");
  REQUIRE(c.ok);
}

TEST_CASE("C6 sizing recommendation", "[acceptance]") {
  Criterion c("C6");
  const Config cfg = shipped_defaults();

  SizingConstraints sc = cfg.constraints;
  const std::vector<double> grid{1.0, 20.0, 40.0, 60.0, 80.0, 90.0, 110.0, 140.0};
  const auto report = sweep(grid, cfg.scenario, cfg.models, sc, 0);
  c.expect(report.recommended_kd.has_value(), "no recommendation on defaults");
  if (report.recommended_kd) {
    const auto [lo, hi] = *report.recommended_kd;
    c.expect(lo <= 90.0 && hi >= 60.0,
             "recommended interval [" + format_double(lo) + ", " +
                 format_double(hi) + "] misses [60, 90]");
  }

  const std::string out =
      (fs::temp_directory_path() / "droopsim_accept_size").string();
  const auto cli = run_cli("--config " + std::string(DROOPSIM_SOURCE_DIR) +
                           "/configs/default.json --out " + out + " size");
  c.expect(cli.exit_code == 0, "cmd_size on defaults must succeed");
  c.expect(cli.output.find("recommended k_d interval") != std::string::npos,
           "cmd_size must print a recommendation");

  const auto cli_nf = run_cli("--config " + std::string(DROOPSIM_SOURCE_DIR) +
                              "/configs/default.json --out " + out +
                              " --set constraints.rocof_limit=0 size");
  c.expect(cli_nf.exit_code == 3, "rocof_limit=0 must exit with code 3");
  REQUIRE(c.ok);
}

TEST_CASE("C7 numerical integrity", "[acceptance]") {
  Criterion c("C7");
  const Config cfg = shipped_defaults();

  // Convergence order, measured against dt/16 references with the state
  // observed mid-transient.
  auto terminal = [&](double dt) {
    Scenario sc = cfg.scenario;
    sc.t_end = 2.05;
    sc.dt = dt;
    sc.record_decimation = 1 << 30;
    Engine e(sc, cfg.models);
    auto s = e.initialize_equilibrium();
    const auto n = static_cast<std::int64_t>(std::llround(sc.t_end / dt));
    const auto ev = static_cast<std::int64_t>(std::llround(cfg.models.mppt_period / dt));
    for (std::int64_t k = 0; k < n; ++k) {
      if (k > 0 && k % ev == 0) e.mppt_update(s);
      s = e.step(s, e.load_demand_at_step(k));
      s.t = (k + 1) * dt;
    }
    return s;
  };
  auto err = [](const PlantState& a, const PlantState& b) {
    double w = 0.0;
    w = std::max(w, std::abs(a.droop.omega - b.droop.omega));
    w = std::max(w, std::abs(a.vdc - b.vdc) / 1500.0);
    w = std::max(w, std::abs(a.p_out - b.p_out));
    w = std::max(w, std::abs(a.p_batt - b.p_batt) / 1e6);
    return w;
  };
  const double e_coarse = err(terminal(1e-3), terminal(1e-3 / 16));
  const double e_fine = err(terminal(5e-4), terminal(5e-4 / 16));
  c.expect(e_coarse / e_fine >= 8.0,
           "halving dt must shrink the error at least 8x (got " +
               format_double(e_coarse / e_fine) + ")");

  // Energy bookkeeping on the default k_d = 60 run.
  const auto& rec = default_grid_runs()[1].first.records;
  std::vector<double> t, net;
  for (const auto& r : rec) {
    t.push_back(r.t);
    net.push_back(r.p_pv_w + r.p_batt_w - r.p_inv_w);
  }
  const double integral = oracles::trapezoid(t, net);
  const double cap_energy =
      0.5 * cfg.scenario.c_dc *
      (rec.back().vdc_v * rec.back().vdc_v - rec.front().vdc_v * rec.front().vdc_v);
  const double disturbance = (cfg.scenario.load_final - cfg.scenario.load_initial) *
                             (cfg.scenario.t_end - cfg.scenario.t_step);
  c.expect(std::abs(integral - cap_energy) < 1e-3 * std::abs(disturbance),
           "dc-link energy bookkeeping error above 0.1% of disturbance energy");

  // Determinism, including across sweep worker counts.
  {
    Engine e(cfg.scenario, cfg.models);
    const auto a = e.run();
    const auto b = e.run();
    bool same = a.records.size() == b.records.size();
    for (std::size_t k = 0; same && k < a.records.size(); ++k)
      same = a.records[k].freq_hz == b.records[k].freq_hz &&
             a.records[k].vdc_v == b.records[k].vdc_v &&
             a.records[k].p_batt_w == b.records[k].p_batt_w;
    c.expect(same, "reruns must be bit-identical");

    const auto serial = run_grid(cfg.kd_grid, cfg.scenario, cfg.models,
                                 cfg.metrics_template(), 1);
    const auto parallel = run_grid(cfg.kd_grid, cfg.scenario, cfg.models,
                                   cfg.metrics_template(), 4);
    bool same_sweep = serial.size() == parallel.size();
    for (std::size_t k = 0; same_sweep && k < serial.size(); ++k) {
      same_sweep = serial[k].second.rocof_max == parallel[k].second.rocof_max &&
                   serial[k].second.p_batt_peak == parallel[k].second.p_batt_peak;
      const auto& ra = serial[k].first.records;
      const auto& rb = parallel[k].first.records;
      same_sweep = same_sweep && ra.size() == rb.size();
      for (std::size_t i = 0; same_sweep && i < ra.size(); i += 997)
        same_sweep = ra[i].freq_hz == rb[i].freq_hz && ra[i].vdc_v == rb[i].vdc_v;
    }
    c.expect(same_sweep, "parallel sweep must match the serial sweep bit-for-bit");
  }
  REQUIRE(c.ok);
}

TEST_CASE("C8 oracle equivalence", "[acceptance]") {
  Criterion c("C8");

  // Synthetic ramp through the metrics path. On a binary time grid every
  // sample of 60 - 0.5*t is exact, so the result must be exactly 0.5; on a
  // decimal grid the only slack is the round-off of the samples themselves.
  std::vector<TimeSeriesRecord> ramp_bin;
  for (int k = 0; k <= 5120; ++k) {
    TimeSeriesRecord r;
    r.t = k * 0.0009765625;  // 2^-10
    r.freq_hz = 60.0 - 0.5 * r.t;
    ramp_bin.push_back(r);
  }
  for (double w : {0.001953125, 0.03125, 0.25, 0.5, 1.0, 2.0})
    c.expect(rocof(ramp_bin, w, 0.0) == 0.5,
             "binary-grid ramp rocof must be exactly 0.5 Hz/s at window " +
                 format_double(w));

  std::vector<TimeSeriesRecord> ramp_dec;
  for (int k = 0; k <= 5000; ++k) {
    TimeSeriesRecord r;
    r.t = k * 1e-3;
    r.freq_hz = 60.0 - 0.5 * r.t;
    ramp_dec.push_back(r);
  }
  for (double w : {0.002, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0})
    c.expect(std::abs(rocof(ramp_dec, w, 0.0) - 0.5) < 5e-11,
             "decimal-grid ramp rocof must equal 0.5 Hz/s at window " +
                 format_double(w));

  // Energy requirement against an independent trapezoid over the emitted CSV.
  const Config cfg = shipped_defaults();
  const auto& run90 = default_grid_runs()[2].first;
  std::ostringstream os;
  write_timeseries_csv(os, run90.records);
  std::istringstream is(os.str());
  const auto roundtrip = read_timeseries_csv(is);

  double p_base = roundtrip.front().p_batt_w;
  for (const auto& r : roundtrip) {
    if (r.t >= cfg.scenario.t_step) break;
    p_base = r.p_batt_w;
  }
  std::vector<double> t, y;
  for (const auto& r : roundtrip) {
    if (r.t < cfg.scenario.t_step) continue;
    t.push_back(r.t);
    y.push_back(std::max(r.p_batt_w - p_base, 0.0));
  }
  const double independent = oracles::trapezoid(t, y) / 3600.0;
  const double lib = energy_requirement(run90.records, cfg.scenario.t_step);
  c.expect(std::abs(lib - independent) <= 1e-4 * std::max(independent, 1e-9),
           "energy_requirement must match the CSV trapezoid within 0.01%");
  REQUIRE(c.ok);
}
