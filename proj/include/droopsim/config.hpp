#pragma once

// Configuration loading. The file format is JSON with // comments allowed,
// organised in sections that mirror the model parameter structs. Every field
// is optional and falls back to the shipped default; unknown sections or keys
// are rejected with their path. Dotted overrides ("droop.k_d=90") apply on
// top of the file.

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "droopsim/engine.hpp"
#include "droopsim/errors.hpp"
#include "droopsim/metrics.hpp"
#include "droopsim/sizing.hpp"

namespace droopsim {

struct Config {
  ModelParams models;
  Scenario scenario;
  SizingConstraints constraints;
  double rocof_window = 0.3;    // s
  double settling_band = 0.02;  // Hz
  std::vector<double> kd_grid{0.0, 60.0, 90.0, 140.0};
  unsigned jobs = 0;  // 0 = hardware concurrency
  std::string out_dir = "out";
  double pv_fit_tol = 1e-3;
  double pv_ideality = 1.3;

  MetricsConfig metrics_template() const {
    MetricsConfig c;
    c.t_event = scenario.t_step;
    c.vdc_ref = scenario.vdc_ref;
    c.f_nominal = models.droop.f_base;
    c.rocof_window = rocof_window;
    c.settling_band = settling_band;
    return c;
  }
};

namespace cfgdetail {

using json = nlohmann::json;

inline void expect_keys(const json& j, const std::string& section,
                        const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" +
                        (section.empty() ? it.key() : section + "." + it.key()) +
                        "'");
  }
}

template <typename T>
void read(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + section + "." + key + "'");
  }
}

inline void require_positive(double v, const std::string& path) {
  if (!(v > 0.0)) throw ConfigError("'" + path + "' must be positive");
}

inline void apply_json(Config& c, const json& root) {
  expect_keys(root, "",
              {"pv", "battery", "droop", "vsc", "scenario", "sweep",
               "constraints", "output"});

  if (root.contains("pv")) {
    const auto& j = root["pv"];
    expect_keys(j, "pv",
                {"k_v", "k_i", "v_ocn", "i_scn", "p_max_e", "i_mp", "v_mp",
                 "n_p", "n_s", "t_n", "g_n", "cells_per_module", "ideality",
                 "fit_tol", "mppt_step_v", "mppt_period"});
    auto& p = c.models.pv;
    read(j, "pv", "k_v", p.k_v);
    read(j, "pv", "k_i", p.k_i);
    read(j, "pv", "v_ocn", p.v_ocn);
    read(j, "pv", "i_scn", p.i_scn);
    read(j, "pv", "p_max_e", p.p_max_e);
    read(j, "pv", "i_mp", p.i_mp);
    read(j, "pv", "v_mp", p.v_mp);
    read(j, "pv", "n_p", p.n_p);
    read(j, "pv", "n_s", p.n_s);
    read(j, "pv", "t_n", p.t_n);
    read(j, "pv", "g_n", p.g_n);
    read(j, "pv", "cells_per_module", p.cells_per_module);
    read(j, "pv", "ideality", c.pv_ideality);
    read(j, "pv", "fit_tol", c.pv_fit_tol);
    read(j, "pv", "mppt_step_v", c.models.mppt_step_v);
    read(j, "pv", "mppt_period", c.models.mppt_period);
  }

  if (root.contains("battery")) {
    const auto& j = root["battery"];
    expect_keys(j, "battery",
                {"e0", "r_internal", "k_pol", "q_cap", "a_exp", "b_exp",
                 "t_filter", "p_rating", "soc_init", "kp_dclink", "ki_dclink",
                 "t_converter"});
    auto& p = c.models.battery;
    read(j, "battery", "e0", p.e0);
    read(j, "battery", "r_internal", p.r_internal);
    read(j, "battery", "k_pol", p.k_pol);
    read(j, "battery", "q_cap", p.q_cap);
    read(j, "battery", "a_exp", p.a_exp);
    read(j, "battery", "b_exp", p.b_exp);
    read(j, "battery", "t_filter", p.t_filter);
    read(j, "battery", "p_rating", p.p_rating);
    read(j, "battery", "soc_init", p.soc_init);
    read(j, "battery", "kp_dclink", p.kp_dclink);
    read(j, "battery", "ki_dclink", p.ki_dclink);
    read(j, "battery", "t_converter", p.t_converter);
  }

  if (root.contains("droop")) {
    const auto& j = root["droop"];
    expect_keys(j, "droop",
                {"p_ref", "k_d", "omega_ref", "t_a", "s_base", "f_base",
                 "t_freq_meas"});
    auto& p = c.models.droop;
    read(j, "droop", "p_ref", p.p_ref);
    read(j, "droop", "k_d", p.k_d);
    read(j, "droop", "omega_ref", p.omega_ref);
    read(j, "droop", "t_a", p.t_a);
    read(j, "droop", "s_base", p.s_base);
    read(j, "droop", "f_base", p.f_base);
    read(j, "droop", "t_freq_meas", p.t_freq_meas);
  }

  if (root.contains("vsc")) {
    const auto& j = root["vsc"];
    expect_keys(j, "vsc", {"kp_v", "ki_v", "t_i", "i_max", "v_ac_ref"});
    auto& p = c.models.vsc;
    read(j, "vsc", "kp_v", p.kp_v);
    read(j, "vsc", "ki_v", p.ki_v);
    read(j, "vsc", "t_i", p.t_i);
    read(j, "vsc", "i_max", p.i_max);
    read(j, "vsc", "v_ac_ref", p.v_ac_ref);
  }

  if (root.contains("scenario")) {
    const auto& j = root["scenario"];
    expect_keys(j, "scenario",
                {"t_end", "dt", "load_initial", "load_final", "t_step",
                 "vdc_ref", "record_decimation", "c_dc", "load_kpf",
                 "irradiance", "cell_temp_k"});
    auto& p = c.scenario;
    read(j, "scenario", "t_end", p.t_end);
    read(j, "scenario", "dt", p.dt);
    read(j, "scenario", "load_initial", p.load_initial);
    read(j, "scenario", "load_final", p.load_final);
    read(j, "scenario", "t_step", p.t_step);
    read(j, "scenario", "vdc_ref", p.vdc_ref);
    read(j, "scenario", "record_decimation", p.record_decimation);
    read(j, "scenario", "c_dc", p.c_dc);
    read(j, "scenario", "load_kpf", p.load_kpf);
    read(j, "scenario", "irradiance", p.g_irr);
    read(j, "scenario", "cell_temp_k", p.t_cell);
  }

  if (root.contains("sweep")) {
    const auto& j = root["sweep"];
    expect_keys(j, "sweep", {"kd_grid", "jobs"});
    read(j, "sweep", "kd_grid", c.kd_grid);
    read(j, "sweep", "jobs", c.jobs);
  }

  if (root.contains("constraints")) {
    const auto& j = root["constraints"];
    expect_keys(j, "constraints",
                {"freq_band", "rocof_limit", "ufls_threshold", "vdc_band",
                 "margin", "rocof_safety", "limit_transient_tol",
                 "rocof_window", "settling_band"});
    auto& p = c.constraints;
    read(j, "constraints", "freq_band", p.freq_band);
    read(j, "constraints", "rocof_limit", p.rocof_limit);
    read(j, "constraints", "ufls_threshold", p.ufls_threshold);
    read(j, "constraints", "vdc_band", p.vdc_band);
    read(j, "constraints", "margin", p.margin);
    read(j, "constraints", "rocof_safety", p.rocof_safety);
    read(j, "constraints", "limit_transient_tol", p.limit_transient_tol);
    read(j, "constraints", "rocof_window", c.rocof_window);
    read(j, "constraints", "settling_band", c.settling_band);
  }

  if (root.contains("output")) {
    const auto& j = root["output"];
    expect_keys(j, "output", {"dir"});
    read(j, "output", "dir", c.out_dir);
  }
}

}  // namespace cfgdetail

// Field-level checks with config paths, ahead of the module invariants.
inline void validate_paths(const Config& c) {
  using cfgdetail::require_positive;
  require_positive(c.scenario.load_initial, "scenario.load_initial");
  require_positive(c.scenario.load_final, "scenario.load_final");
  require_positive(c.scenario.dt, "scenario.dt");
  require_positive(c.scenario.vdc_ref, "scenario.vdc_ref");
  require_positive(c.models.droop.s_base, "droop.s_base");
  require_positive(c.models.droop.f_base, "droop.f_base");
  require_positive(c.models.battery.q_cap, "battery.q_cap");
  require_positive(c.rocof_window, "constraints.rocof_window");
  require_positive(c.settling_band, "constraints.settling_band");
  if (c.models.droop.k_d < 0.0) throw ConfigError("'droop.k_d' must be non-negative");
}

// Re-validate against module invariants and produce the derived PV fit.
inline void prepare(Config& c) {
  validate_paths(c);
  try {
    validate(c.scenario);
    validate(c.models.battery);
    validate(c.models.droop);
    validate(c.models.vsc);
    validate(c.constraints);
    c.models.pv_fit =
        fit_single_diode(c.models.pv, c.pv_fit_tol, c.pv_ideality);
  } catch (const InvalidParams& e) {
    throw ConfigError(e.what());
  } catch (const NonConvergence& e) {
    throw ConfigError(e.what());
  }
}

inline Config load_config_json(const nlohmann::json& root) {
  Config c;
  cfgdetail::apply_json(c, root);
  return c;
}

inline Config load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return load_config_json(root);
}

// Apply one "section.key=value" override.
inline void apply_override(nlohmann::json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size())
    throw ConfigError("override key must be section.key: " + spec);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;  // plain string
  }
  root[path.substr(0, dot)][path.substr(dot + 1)] = parsed;
}

}  // namespace droopsim
