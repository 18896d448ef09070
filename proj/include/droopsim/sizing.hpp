#pragma once

// Constrained search over the damping-coefficient grid: one run per k_d,
// feasibility screening against protection limits, and a recommended k_d
// interval with the battery power/energy rating it implies.

#include <atomic>
#include <cmath>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "droopsim/engine.hpp"
#include "droopsim/errors.hpp"
#include "droopsim/metrics.hpp"

namespace droopsim {

struct SizingConstraints {
  double freq_band = 0.5;        // Hz, allowed steady deviation about nominal
  double rocof_limit = 1.5;      // Hz/s
  double ufls_threshold = 59.5;  // Hz
  double vdc_band = 50.0;        // V about vdc_ref
  double margin = 1.2;           // rating margin factor
  double rocof_safety = 1.5;     // required headroom below rocof_limit
  double limit_transient_tol = 0.05;  // s of tolerated converter limiting
};

inline void validate(const SizingConstraints& c) {
  auto fail = [](const char* what) { throw InvalidParams(std::string("constraints: ") + what); };
  if (!(c.freq_band > 0.0)) fail("freq_band must be positive");
  if (c.rocof_limit < 0.0) fail("rocof_limit must be non-negative");
  if (!(c.ufls_threshold > 0.0)) fail("ufls_threshold must be positive");
  if (!(c.vdc_band > 0.0)) fail("vdc_band must be positive");
  if (c.margin < 1.0) fail("margin must be at least 1");
  if (!(c.rocof_safety >= 1.0)) fail("rocof_safety must be at least 1");
  if (c.limit_transient_tol < 0.0) fail("limit_transient_tol must be non-negative");
}

struct KdEvaluation {
  double k_d = 0.0;
  RunMetrics metrics;
  double energy_wh = 0.0;        // post-event discharge energy above baseline
  double limited_seconds = 0.0;  // post-event time at the converter limit
  bool feasible = false;
  bool safety_ok = false;        // rocof clears the safety factor as well
};

struct SizingReport {
  std::vector<KdEvaluation> per_kd;           // ascending k_d
  std::vector<double> feasible_kd;
  std::optional<std::pair<double, double>> recommended_kd;
  double battery_power_rating = 0.0;   // W, margined
  double battery_energy_rating = 0.0;  // Wh, margined
};

// Post-event battery discharge energy above the pre-event operating point.
inline double energy_requirement(const std::vector<TimeSeriesRecord>& records,
                                 double t_event) {
  if (records.size() < 2) return 0.0;
  double p_base = records.front().p_batt_w;
  for (const auto& r : records) {
    if (r.t >= t_event) break;
    p_base = r.p_batt_w;
  }
  double joules = 0.0;
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& a = records[k - 1];
    const auto& b = records[k];
    if (b.t <= t_event) continue;
    const double fa = std::max(a.p_batt_w - p_base, 0.0);
    const double fb = std::max(b.p_batt_w - p_base, 0.0);
    joules += 0.5 * (fa + fb) * (b.t - a.t);
  }
  return joules / 3600.0;
}

inline double limited_duration(const std::vector<TimeSeriesRecord>& records,
                               double t_event) {
  double seconds = 0.0;
  for (std::size_t k = 1; k < records.size(); ++k) {
    if (records[k].t <= t_event) continue;
    if (records[k].limited) seconds += records[k].t - records[k - 1].t;
  }
  return seconds;
}

// Run one engine instance per grid point, in grid order regardless of worker
// scheduling.
inline std::vector<std::pair<RunResult, RunMetrics>> run_grid(
    const std::vector<double>& kd_grid, const Scenario& scenario,
    const ModelParams& models, const MetricsConfig& metrics_template,
    unsigned jobs = 0) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(kd_grid.size()));

  std::vector<std::pair<RunResult, RunMetrics>> results(kd_grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= kd_grid.size()) return;
      auto m = models;
      m.droop.k_d = kd_grid[idx];
      Engine engine(scenario, m);
      RunResult run = engine.run();
      MetricsConfig cfg = metrics_template;
      cfg.k_d = kd_grid[idx];
      cfg.t_event = scenario.t_step;
      cfg.vdc_ref = scenario.vdc_ref;
      cfg.f_nominal = m.droop.f_base;
      RunMetrics mx = summarize(run, cfg);
      results[idx] = {std::move(run), mx};
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < jobs; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

inline SizingReport sweep(const std::vector<double>& kd_grid,
                          const Scenario& scenario, const ModelParams& models,
                          const SizingConstraints& constraints,
                          unsigned jobs = 0) {
  if (kd_grid.empty()) throw InvalidParams("sizing: empty k_d grid");
  for (std::size_t k = 0; k < kd_grid.size(); ++k) {
    if (kd_grid[k] < 0.0) throw InvalidParams("sizing: negative k_d");
    if (k > 0 && kd_grid[k] <= kd_grid[k - 1])
      throw InvalidParams("sizing: k_d grid must be strictly ascending");
  }
  validate(constraints);

  MetricsConfig tmpl;
  const auto runs = run_grid(kd_grid, scenario, models, tmpl, jobs);

  SizingReport report;
  report.per_kd.resize(kd_grid.size());
  for (std::size_t k = 0; k < kd_grid.size(); ++k) {
    const auto& [run, metrics] = runs[k];
    KdEvaluation ev;
    ev.k_d = kd_grid[k];
    ev.metrics = metrics;
    ev.energy_wh = energy_requirement(run.records, scenario.t_step);
    ev.limited_seconds = limited_duration(run.records, scenario.t_step);

    const double f0 = models.droop.f_base;
    const bool freq_ok =
        std::abs(metrics.freq_extremum - f0) <= constraints.freq_band &&
        metrics.freq_extremum >= constraints.ufls_threshold;
    const bool vdc_ok =
        std::abs(metrics.vdc_extremum - scenario.vdc_ref) <= constraints.vdc_band;
    ev.feasible = metrics.status == RunStatus::settled &&
                  metrics.rocof_max < constraints.rocof_limit && freq_ok &&
                  vdc_ok && ev.limited_seconds <= constraints.limit_transient_tol;
    ev.safety_ok =
        ev.feasible &&
        metrics.rocof_max * constraints.rocof_safety <= constraints.rocof_limit;
    if (ev.feasible) report.feasible_kd.push_back(ev.k_d);
    report.per_kd[k] = ev;
  }

  // Recommendation: the contiguous run of safety-passing grid points that
  // contains the cheapest battery among them (ties resolve to the smallest
  // k_d, which is also where the monotone peak-power trend puts the optimum).
  std::size_t best = kd_grid.size();
  for (std::size_t k = 0; k < report.per_kd.size(); ++k) {
    const auto& ev = report.per_kd[k];
    if (!ev.safety_ok) continue;
    if (best == kd_grid.size() ||
        ev.metrics.p_batt_peak < report.per_kd[best].metrics.p_batt_peak)
      best = k;
  }
  if (best < kd_grid.size()) {
    std::size_t lo = best, hi = best;
    while (lo > 0 && report.per_kd[lo - 1].safety_ok) --lo;
    while (hi + 1 < report.per_kd.size() && report.per_kd[hi + 1].safety_ok) ++hi;
    report.recommended_kd = {kd_grid[lo], kd_grid[hi]};
    double peak = 0.0, energy = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      peak = std::max(peak, report.per_kd[k].metrics.p_batt_peak);
      energy = std::max(energy, report.per_kd[k].energy_wh);
    }
    report.battery_power_rating = peak * constraints.margin;
    report.battery_energy_rating = energy * constraints.margin;
  }
  return report;
}

}  // namespace droopsim
