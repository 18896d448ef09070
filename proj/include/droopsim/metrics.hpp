#pragma once

// Scalar metrics extracted from a simulated trajectory: frequency extremum,
// windowed RoCoF, peak battery power, DC-link extremum, settling time and
// overshoot. All metrics are pure functions of the record list and the
// metrics configuration.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "droopsim/engine.hpp"
#include "droopsim/errors.hpp"

namespace droopsim {

struct MetricsConfig {
  double k_d = 0.0;
  double t_event = 2.0;        // s
  double vdc_ref = 1500.0;     // V
  double f_nominal = 60.0;     // Hz
  double rocof_window = 0.3;   // s
  double settling_band = 0.02; // Hz
};

struct RunMetrics {
  double k_d = 0.0;
  double freq_extremum = 0.0;  // Hz, signed value farthest from nominal
  double rocof_max = 0.0;      // Hz/s
  double p_batt_peak = 0.0;    // W
  double vdc_extremum = 0.0;   // V, value farthest from vdc_ref
  std::optional<double> settling_time;  // s past the event; absent if unsettled
  double overshoot = 0.0;      // Hz beyond the final value
  RunStatus status = RunStatus::settled;
};

// Maximum sliding-window frequency slope, evaluated over windows that lie
// entirely after the event.
inline double rocof(const std::vector<TimeSeriesRecord>& records, double window,
                    double t_event) {
  if (records.size() < 3) throw InsufficientData("rocof: too few records");
  const double sample_dt = records[1].t - records[0].t;
  if (window < 2.0 * sample_dt)
    throw InsufficientData("rocof: window below two sample intervals");
  if (records.back().t - std::max(records.front().t, t_event) < window)
    throw InsufficientData("rocof: trajectory shorter than the window");

  double worst = 0.0;
  std::size_t a = 0;
  for (std::size_t b = 0; b < records.size(); ++b) {
    const double t_tail = records[b].t - window;
    if (t_tail < t_event) continue;
    while (a + 1 < records.size() && records[a + 1].t <= t_tail + 1e-12) ++a;
    const double span = records[b].t - records[a].t;
    if (span <= 0.0) continue;
    worst = std::max(worst,
                     std::abs(records[b].freq_hz - records[a].freq_hz) / span);
  }
  return worst;
}

// Time of the last band exit relative to the event. Absent when the
// trajectory does not hold the band through the trailing fifth of the
// post-event horizon.
inline std::optional<double> settling_time(
    const std::vector<TimeSeriesRecord>& records, double band, double t_event) {
  if (records.empty()) return std::nullopt;
  if (!(band > 0.0)) throw InvalidParams("settling_time: band must be positive");
  const double f_final = records.back().freq_hz;
  const double t_last = records.back().t;
  if (t_last <= t_event) return std::nullopt;
  const double t_trailing = t_last - 0.2 * (t_last - t_event);

  double last_exit = t_event;
  bool trailing_ok = true;
  for (const auto& r : records) {
    if (r.t < t_event) continue;
    const bool outside = std::abs(r.freq_hz - f_final) > band;
    if (outside) last_exit = r.t;
    if (outside && r.t >= t_trailing) trailing_ok = false;
  }
  if (!trailing_ok) return std::nullopt;
  return last_exit - t_event;
}

inline RunMetrics summarize(const RunResult& run, const MetricsConfig& cfg) {
  RunMetrics m;
  m.k_d = cfg.k_d;
  m.status = run.status;
  const auto& rec = run.records;
  if (rec.empty()) return m;

  double worst_f = 0.0, worst_v = 0.0;
  m.freq_extremum = cfg.f_nominal;
  m.vdc_extremum = cfg.vdc_ref;
  for (const auto& r : rec) {
    if (r.t < cfg.t_event) continue;
    if (std::abs(r.freq_hz - cfg.f_nominal) >= worst_f) {
      worst_f = std::abs(r.freq_hz - cfg.f_nominal);
      m.freq_extremum = r.freq_hz;
    }
    if (std::abs(r.vdc_v - cfg.vdc_ref) >= worst_v) {
      worst_v = std::abs(r.vdc_v - cfg.vdc_ref);
      m.vdc_extremum = r.vdc_v;
    }
    m.p_batt_peak = std::max(m.p_batt_peak, std::abs(r.p_batt_w));
  }

  try {
    m.rocof_max = rocof(rec, cfg.rocof_window, cfg.t_event);
  } catch (const InsufficientData&) {
    m.rocof_max = 0.0;
  }

  if (run.status == RunStatus::settled)
    m.settling_time = settling_time(rec, cfg.settling_band, cfg.t_event);

  const double f_final = rec.back().freq_hz;
  for (const auto& r : rec) {
    if (r.t < cfg.t_event) continue;
    m.overshoot = std::max(m.overshoot, std::abs(r.freq_hz - f_final));
  }
  return m;
}

}  // namespace droopsim
