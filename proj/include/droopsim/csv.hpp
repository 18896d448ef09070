#pragma once

// CSV and table writers. Numeric fields use shortest round-trip formatting,
// so parsing the text back reproduces the doubles exactly.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "droopsim/engine.hpp"
#include "droopsim/errors.hpp"
#include "droopsim/metrics.hpp"

namespace droopsim {

inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{}) throw ConfigError("csv: bad numeric field '" + s + "'");
  return v;
}

inline constexpr const char* kTimeseriesHeader =
    "t,freq_hz,p_load_w,p_pv_w,p_batt_w,p_inv_w,vdc_v,soc,limited";

inline void write_timeseries_csv(std::ostream& os,
                                 const std::vector<TimeSeriesRecord>& records) {
  os << kTimeseriesHeader << '\n';
  for (const auto& r : records) {
    os << format_double(r.t) << ',' << format_double(r.freq_hz) << ','
       << format_double(r.p_load_w) << ',' << format_double(r.p_pv_w) << ','
       << format_double(r.p_batt_w) << ',' << format_double(r.p_inv_w) << ','
       << format_double(r.vdc_v) << ',' << format_double(r.soc) << ','
       << (r.limited ? '1' : '0') << '\n';
  }
}

inline std::vector<TimeSeriesRecord> read_timeseries_csv(std::istream& is) {
  std::vector<TimeSeriesRecord> out;
  std::string line;
  if (!std::getline(is, line) || line != kTimeseriesHeader)
    throw ConfigError("csv: unexpected timeseries header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw ConfigError("csv: malformed timeseries row");
    TimeSeriesRecord r;
    r.t = parse_double(cells[0]);
    r.freq_hz = parse_double(cells[1]);
    r.p_load_w = parse_double(cells[2]);
    r.p_pv_w = parse_double(cells[3]);
    r.p_batt_w = parse_double(cells[4]);
    r.p_inv_w = parse_double(cells[5]);
    r.vdc_v = parse_double(cells[6]);
    r.soc = parse_double(cells[7]);
    r.limited = cells[8] == "1";
    out.push_back(r);
  }
  return out;
}

inline constexpr const char* kSummaryHeader =
    "k_d,freq_extremum_hz,rocof_max_hz_per_s,p_batt_peak_w,vdc_extremum_v,"
    "settling_time_s,overshoot_hz,status";

inline void write_summary_row(std::ostream& os, const RunMetrics& m) {
  os << format_double(m.k_d) << ',' << format_double(m.freq_extremum) << ','
     << format_double(m.rocof_max) << ',' << format_double(m.p_batt_peak) << ','
     << format_double(m.vdc_extremum) << ','
     << (m.settling_time ? format_double(*m.settling_time) : std::string{})
     << ',' << format_double(m.overshoot) << ',' << to_string(m.status) << '\n';
}

inline void write_summary_csv(std::ostream& os,
                              const std::vector<RunMetrics>& rows) {
  os << kSummaryHeader << '\n';
  for (const auto& m : rows) write_summary_row(os, m);
}

// Fixed-width comparison table over the swept damping grid.
inline std::string render_summary_table(const std::vector<RunMetrics>& rows) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%8s %12s %14s %15s %12s %13s %15s %-12s\n",
                "Kd", "Freq [Hz]", "RoCoF [Hz/s]", "Pbattery [kW]", "Vdc [V]",
                "Settling [s]", "Overshoot [Hz]", "Status");
  os << line;
  for (const auto& m : rows) {
    char settle[32] = "-";
    if (m.settling_time) std::snprintf(settle, sizeof(settle), "%.3f", *m.settling_time);
    std::snprintf(line, sizeof(line),
                  "%8.6g %12.4f %14.3f %15.1f %12.2f %13s %15.4f %-12s\n", m.k_d,
                  m.freq_extremum, m.rocof_max, m.p_batt_peak / 1e3,
                  m.vdc_extremum, settle, m.overshoot, to_string(m.status));
    os << line;
  }
  return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  os << content;
}

}  // namespace droopsim
