#pragma once

// Fixed-step deterministic integration of the coupled DC-link / battery / PV
// / droop system under a timed load-step scenario.
//
// Continuous states, advanced together by one classical RK4 step:
//   omega, theta, omega_meas1, omega_meas   droop and its frequency transducer
//   p_out                                   delivered converter power (pu)
//   vreg_integ                              AC voltage-loop integrator
//   vdc, dclink_integ                       DC-link voltage and regulator
//   p_batt                                  battery converter lag state (W)
//   it, i_star                              battery charge counter and filter
//
// Discrete actions between steps: the MPPT perturb-and-observe update on its
// own period, and the load-step switch at t_step. Scenario inputs are frozen
// over each step, so identical configurations give bit-identical runs.
//
// AC-side closure: the converter's power demand is the droop reference plus
// the damping-path power plus an outer voltage-loop PI correction. The bus
// voltage is the algebraic slack between delivered power and the load's
// impedance-like consumption, and the load carries a frequency-sensitivity
// term k_pf typical of motor-heavy demand:
//
//   consumed(v, omega) = p_dem * v^2 * (1 + k_pf*(omega - omega_ref))
//
// Power conservation through the converter makes the DC draw equal the
// delivered AC power; the battery regulator balances the link.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "droopsim/battery.hpp"
#include "droopsim/droop.hpp"
#include "droopsim/errors.hpp"
#include "droopsim/pv.hpp"

namespace droopsim {

struct Scenario {
  double t_end = 10.0;          // s
  double dt = 1e-4;             // s
  double load_initial = 2.6e6;  // W
  double load_final = 3.4e6;    // W
  double t_step = 2.0;          // s
  double vdc_ref = 1500.0;      // V
  int record_decimation = 10;
  double c_dc = 0.1;            // F, DC-link capacitance
  double load_kpf = 2.0;        // pu load per pu frequency deviation
  double g_irr = 1000.0;        // W/m^2, constant irradiance over the run
  double t_cell = 298.15;       // K, constant cell temperature over the run
};

inline void validate(const Scenario& s) {
  auto fail = [](const char* what) { throw InvalidParams(std::string("scenario: ") + what); };
  if (!(s.dt > 0.0) || s.dt > 1e-3) fail("dt must be in (0, 1e-3]");
  if (!(s.t_step < s.t_end)) fail("t_step must precede t_end");
  if (!(s.load_initial > 0.0)) fail("load_initial must be positive");
  if (!(s.load_final > 0.0)) fail("load_final must be positive");
  if (!(s.vdc_ref > 0.0)) fail("vdc_ref must be positive");
  if (s.record_decimation < 1) fail("record_decimation must be at least 1");
  if (!(s.c_dc > 0.0)) fail("c_dc must be positive");
  if (s.load_kpf < 0.0) fail("load_kpf must be non-negative");
}

struct ModelParams {
  PvArrayParams pv;
  PvDerivedParams pv_fit;      // produced by fit_single_diode
  double mppt_step_v = 2.0;    // V, array-level perturbation
  double mppt_period = 0.01;   // s
  BatteryParams battery;
  DroopParams droop;
  VscControlParams vsc;
};

struct PlantState {
  DroopState droop;
  BatteryState battery;
  MpptState mppt;
  double p_out = 0.0;       // pu, delivered converter power
  double vreg_integ = 0.0;  // AC voltage-loop integrator
  double vdc = 1500.0;      // V
  double dclink_integ = 0.0;
  double p_batt = 0.0;      // W, battery power through the converter lag
  double p_pv = 0.0;        // W, held between MPPT updates
  double t = 0.0;
};

struct TimeSeriesRecord {
  double t = 0.0;
  double freq_hz = 0.0;
  double p_load_w = 0.0;
  double p_pv_w = 0.0;
  double p_batt_w = 0.0;
  double p_inv_w = 0.0;
  double vdc_v = 0.0;
  double soc = 0.0;
  bool limited = false;
};

enum class RunStatus { settled, non_settling, infeasible };

struct RunResult {
  std::vector<TimeSeriesRecord> records;
  RunStatus status = RunStatus::settled;
  std::string reason;     // populated for infeasible runs
  double fault_time = 0.0;
};

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::settled: return "settled";
    case RunStatus::non_settling: return "non-settling";
    case RunStatus::infeasible: return "infeasible";
  }
  return "?";
}

namespace detail {

struct Deriv {
  double omega = 0, theta = 0, m1 = 0, m = 0;
  double p_out = 0, vreg = 0;
  double vdc = 0, dcint = 0, p_batt = 0;
  double it = 0, i_star = 0;
};

}  // namespace detail

class Engine {
 public:
  Engine(Scenario scenario, ModelParams models)
      : sc_(scenario), m_(models) {
    droopsim::validate(sc_);
    droopsim::validate(m_.pv);
    droopsim::validate(m_.battery);
    droopsim::validate(m_.droop);
    droopsim::validate(m_.vsc);
    if (!(m_.mppt_step_v > 0.0) || !(m_.mppt_period > 0.0))
      throw InvalidParams("mppt: step and period must be positive");
    voc_array_ = array_open_circuit_voltage(m_.pv_fit, m_.pv, sc_.g_irr, sc_.t_cell);
  }

  const Scenario& scenario() const { return sc_; }
  const ModelParams& models() const { return m_; }

  double load_demand_w(double t) const {
    return t < sc_.t_step ? sc_.load_initial : sc_.load_final;
  }

  // Bus voltage that balances delivered power against the impedance-like
  // load at the present frequency.
  double bus_voltage(double p_out_pu, double p_dem_pu, double omega) const {
    const double sens =
        std::max(0.1, 1.0 + sc_.load_kpf * (omega - m_.droop.omega_ref));
    const double ratio = std::max(p_out_pu, 1e-9) / (p_dem_pu * sens);
    return std::sqrt(std::max(ratio, 1e-6));
  }

  struct CommandBreakdown {
    double p_demand_pu = 0.0;
    double p_limited_pu = 0.0;
    double v_ac = 1.0;
    bool limited = false;
    double p_batt_cmd_w = 0.0;
    bool batt_saturated = false;
  };

  CommandBreakdown commands(const PlantState& s, double p_dem_w) const {
    CommandBreakdown c;
    const double p_dem_pu = p_dem_w / m_.droop.s_base;
    c.v_ac = bus_voltage(s.p_out, p_dem_pu, s.droop.omega);
    const double e_v = m_.vsc.v_ac_ref - c.v_ac;
    c.p_demand_pu = m_.droop.p_ref + droop_damping_power(m_.droop, s.droop) +
                    m_.vsc.kp_v * e_v + m_.vsc.ki_v * s.vreg_integ;
    const double cap = m_.vsc.i_max * c.v_ac;
    c.p_limited_pu = std::clamp(c.p_demand_pu, -cap, cap);
    c.limited = c.p_limited_pu != c.p_demand_pu;

    const double err_dc = sc_.vdc_ref - s.vdc;
    const double unsat = m_.battery.kp_dclink * err_dc +
                         m_.battery.ki_dclink * s.dclink_integ;
    c.p_batt_cmd_w = std::clamp(unsat, -m_.battery.p_rating, m_.battery.p_rating);
    c.batt_saturated = c.p_batt_cmd_w != unsat;
    return c;
  }

  detail::Deriv derivatives(const PlantState& s, double p_dem_w) const {
    detail::Deriv d;
    const auto c = commands(s, p_dem_w);
    const double e_v = m_.vsc.v_ac_ref - c.v_ac;

    // Droop block.
    d.omega = (m_.droop.p_ref - s.p_out + droop_damping_power(m_.droop, s.droop)) /
              m_.droop.t_a;
    d.theta = s.droop.omega * 2.0 * std::numbers::pi * m_.droop.f_base;
    d.m1 = (s.droop.omega - s.droop.omega_meas1) / m_.droop.t_freq_meas;
    d.m = (s.droop.omega_meas1 - s.droop.omega_meas) / m_.droop.t_freq_meas;

    // Converter delivery lag and voltage-loop integrator with anti-windup.
    d.p_out = (c.p_limited_pu - s.p_out) / m_.vsc.t_i;
    const bool v_winding = c.limited && ((c.p_demand_pu > c.p_limited_pu && e_v > 0.0) ||
                                         (c.p_demand_pu < c.p_limited_pu && e_v < 0.0));
    d.vreg = v_winding ? 0.0 : e_v;

    // DC link: the converter draws the delivered AC power.
    const double p_inv_w = s.p_out * m_.droop.s_base;
    d.vdc = (s.p_pv + s.p_batt - p_inv_w) / (sc_.c_dc * s.vdc);
    const double err_dc = sc_.vdc_ref - s.vdc;
    const bool dc_winding = c.batt_saturated &&
                            ((c.p_batt_cmd_w > 0.0 && err_dc > 0.0) ||
                             (c.p_batt_cmd_w < 0.0 && err_dc < 0.0));
    d.dcint = dc_winding ? 0.0 : err_dc;
    d.p_batt = (c.p_batt_cmd_w - s.p_batt) / m_.battery.t_converter;

    // Battery pack response to the delivered battery power.
    const double i_batt = battery_current_for_power(m_.battery, s.battery, s.p_batt);
    d.it = i_batt / 3600.0;
    d.i_star = (i_batt - s.battery.i_star) / m_.battery.t_filter;
    return d;
  }

  // One RK4 step with the load demand held constant over the interval. The
  // caller decides the demand from its step index so the event lands on the
  // same absolute instant at every step size.
  PlantState step(const PlantState& s) const { return step(s, load_demand_w(s.t)); }

  PlantState step(const PlantState& s, double p_dem_w) const {
    const double dt = sc_.dt;

    auto advance = [&](const PlantState& base, const detail::Deriv& d, double h) {
      PlantState r = base;
      r.droop.omega += h * d.omega;
      r.droop.theta += h * d.theta;
      r.droop.omega_meas1 += h * d.m1;
      r.droop.omega_meas += h * d.m;
      r.p_out += h * d.p_out;
      r.vreg_integ += h * d.vreg;
      r.vdc += h * d.vdc;
      r.dclink_integ += h * d.dcint;
      r.p_batt += h * d.p_batt;
      r.battery.it += h * d.it;
      r.battery.i_star += h * d.i_star;
      return r;
    };

    const auto k1 = derivatives(s, p_dem_w);
    const auto k2 = derivatives(advance(s, k1, dt / 2), p_dem_w);
    const auto k3 = derivatives(advance(s, k2, dt / 2), p_dem_w);
    const auto k4 = derivatives(advance(s, k3, dt), p_dem_w);

    PlantState n = s;
    auto blend = [&](double a, double b, double c, double d4) {
      return dt / 6.0 * (a + 2.0 * b + 2.0 * c + d4);
    };
    n.droop.omega += blend(k1.omega, k2.omega, k3.omega, k4.omega);
    n.droop.theta += blend(k1.theta, k2.theta, k3.theta, k4.theta);
    n.droop.omega_meas1 += blend(k1.m1, k2.m1, k3.m1, k4.m1);
    n.droop.omega_meas += blend(k1.m, k2.m, k3.m, k4.m);
    n.p_out += blend(k1.p_out, k2.p_out, k3.p_out, k4.p_out);
    n.vreg_integ += blend(k1.vreg, k2.vreg, k3.vreg, k4.vreg);
    n.vdc += blend(k1.vdc, k2.vdc, k3.vdc, k4.vdc);
    n.dclink_integ += blend(k1.dcint, k2.dcint, k3.dcint, k4.dcint);
    n.p_batt += blend(k1.p_batt, k2.p_batt, k3.p_batt, k4.p_batt);
    n.battery.it = std::max(0.0, n.battery.it + blend(k1.it, k2.it, k3.it, k4.it));
    n.battery.i_star += blend(k1.i_star, k2.i_star, k3.i_star, k4.i_star);
    n.droop.theta = wrap_angle(n.droop.theta);
    n.t = s.t + dt;

    // Refresh the dependent battery pair for observers.
    n.battery.i = battery_current_for_power(m_.battery, n.battery, n.p_batt);
    n.battery.v_term = battery_emf(m_.battery, n.battery.it, n.battery.i_star) -
                       m_.battery.r_internal * n.battery.i;
    return n;
  }

  // Perturb-and-observe update against the current conditions; the array is
  // assumed to operate at the commanded voltage between updates.
  void mppt_update(PlantState& s) const {
    const auto op = solve_iv(m_.pv_fit, m_.pv, s.mppt.v_ref, sc_.g_irr, sc_.t_cell);
    s.mppt = mppt_step(s.mppt, op);
    const auto next = solve_iv(m_.pv_fit, m_.pv, s.mppt.v_ref, sc_.g_irr, sc_.t_cell);
    s.p_pv = next.power;
  }

  // Algebraic pre-event equilibrium. The droop fixed point, the voltage loop
  // and the DC-link regulator are all solved directly; the battery charge
  // counter is the only state that keeps drifting (it integrates current by
  // definition), so the verification step checks the fast states.
  PlantState initialize_equilibrium() const {
    PlantState s;
    const double p_dem_w = sc_.load_initial;
    const double p_dem_pu = p_dem_w / m_.droop.s_base;

    // Joint fixed point of the droop law and the frequency-sensitive load:
    //   k_d*(omega_ref - omega) = p_out - p_ref
    //   p_out = p_dem*(1 + k_pf*(omega - omega_ref))   (bus voltage at 1 pu)
    double d_omega = 0.0;  // omega - omega_ref
    const double kd = m_.droop.k_d;
    const double denom = kd + sc_.load_kpf * p_dem_pu;
    const double mismatch = p_dem_pu - m_.droop.p_ref;
    if (kd > 1e-12) {
      d_omega = -mismatch / denom;
    } else if (std::abs(mismatch) > 1e-9) {
      throw NoEquilibrium(
          "engine: zero damping requires p_ref to match the initial load");
    }
    const double omega0 = m_.droop.omega_ref + d_omega;
    const double p_out0 = p_dem_pu * (1.0 + sc_.load_kpf * d_omega);

    s.droop.omega = omega0;
    s.droop.omega_meas1 = omega0;
    s.droop.omega_meas = omega0;
    s.droop.theta = 0.0;
    s.p_out = p_out0;
    // Voltage loop integrator carries whatever the droop command misses.
    s.vreg_integ = (p_out0 - m_.droop.p_ref - kd * (m_.droop.omega_ref - omega0)) /
                   m_.vsc.ki_v;

    // PV at its maximum power point under the run's constant conditions.
    double best_v = 0.0, best_p = 0.0;
    const int scan = 20000;
    for (int k = 0; k <= scan; ++k) {
      const double v = voc_array_ * k / scan;
      const auto op = solve_iv(m_.pv_fit, m_.pv, v, sc_.g_irr, sc_.t_cell);
      if (op.power > best_p) { best_p = op.power; best_v = v; }
    }
    s.mppt.v_ref = best_v;
    s.mppt.step = m_.mppt_step_v;
    s.mppt.period = m_.mppt_period;
    s.mppt.v_max = voc_array_;
    s.mppt.last_voltage = best_v;
    s.mppt.last_power = best_p;
    s.p_pv = best_p;

    // DC link at the reference; the battery covers the residual.
    s.vdc = sc_.vdc_ref;
    const double p_inv_w = p_out0 * m_.droop.s_base;
    const double p_batt0 = p_inv_w - best_p;
    if (std::abs(p_batt0) > m_.battery.p_rating)
      throw NoEquilibrium("engine: initial load exceeds battery rating headroom");
    s.p_batt = p_batt0;
    s.dclink_integ = p_batt0 / m_.battery.ki_dclink;

    s.battery.it = (1.0 - m_.battery.soc_init) * m_.battery.q_cap;
    const double i0 = battery_current_for_power(m_.battery, s.battery, p_batt0);
    s.battery.i_star = i0;
    s.battery.i = i0;
    s.battery.v_term = battery_emf(m_.battery, s.battery.it, s.battery.i_star) -
                       m_.battery.r_internal * i0;
    s.t = 0.0;

    // Verify: one step must leave the fast states essentially unchanged.
    const auto probe = step(s);
    auto rel = [](double a, double b, double scale) {
      return std::abs(a - b) / std::max(std::abs(scale), 1e-12);
    };
    const bool ok = rel(probe.droop.omega, s.droop.omega, 1.0) < 1e-8 &&
                    rel(probe.p_out, s.p_out, 1.0) < 1e-8 &&
                    rel(probe.vdc, s.vdc, sc_.vdc_ref) < 1e-8 &&
                    rel(probe.p_batt, s.p_batt, m_.battery.p_rating) < 1e-8;
    if (!ok) throw NoEquilibrium("engine: equilibrium verification failed");
    return s;
  }

  // Load demand by step index; the event lands on its exact grid instant at
  // every step size.
  double load_demand_at_step(std::int64_t k) const {
    const std::int64_t k_event =
        static_cast<std::int64_t>(std::llround(sc_.t_step / sc_.dt));
    return k < k_event ? sc_.load_initial : sc_.load_final;
  }

  RunResult run() const {
    RunResult out;
    PlantState s = initialize_equilibrium();

    const double dt = sc_.dt;
    const std::int64_t n_steps = static_cast<std::int64_t>(std::llround(sc_.t_end / dt));
    const std::int64_t mppt_every =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(m_.mppt_period / dt)));

    auto emit = [&](const PlantState& st, double p_dem_w) {
      const auto c = commands(st, p_dem_w);
      TimeSeriesRecord r;
      r.t = st.t;
      r.freq_hz = st.droop.omega * m_.droop.f_base;
      r.p_load_w = p_dem_w;
      r.p_pv_w = st.p_pv;
      r.p_batt_w = st.p_batt;
      r.p_inv_w = st.p_out * m_.droop.s_base;
      r.vdc_v = st.vdc;
      r.soc = 1.0 - st.battery.it / m_.battery.q_cap;
      r.limited = c.limited;
      out.records.push_back(r);
    };

    emit(s, load_demand_at_step(0));
    for (std::int64_t k = 0; k < n_steps; ++k) {
      if (k > 0 && k % mppt_every == 0) mppt_update(s);
      try {
        s = step(s, load_demand_at_step(k));
        s.t = (k + 1) * dt;
      } catch (const CapacityExhausted& e) {
        out.status = RunStatus::infeasible;
        out.reason = e.what();
        out.fault_time = s.t;
        break;
      }
      // Stability and feasibility flags.
      if (!(s.droop.omega > 0.9 && s.droop.omega < 1.1)) {
        out.status = RunStatus::infeasible;
        out.reason = "unstable: omega left (0.9, 1.1) pu";
        out.fault_time = s.t;
        break;
      }
      if (s.battery.it >= 0.999 * m_.battery.q_cap) {
        out.status = RunStatus::infeasible;
        out.reason = "capacity exhausted";
        out.fault_time = s.t;
        break;
      }
      if ((k + 1) % sc_.record_decimation == 0) emit(s, load_demand_at_step(k + 1));
    }

    if (out.status != RunStatus::infeasible) {
      out.status = settled_after_event(out) ? RunStatus::settled
                                            : RunStatus::non_settling;
    }
    return out;
  }

 private:
  // A run settles when the post-event frequency stays inside a +-0.02 Hz band
  // around its final value for the trailing fifth of the horizon.
  bool settled_after_event(const RunResult& r) const {
    if (r.records.empty()) return false;
    const double f_final = r.records.back().freq_hz;
    const double t_last = r.records.back().t;
    const double t_from = t_last - 0.2 * (t_last - sc_.t_step);
    for (const auto& rec : r.records) {
      if (rec.t < t_from) continue;
      if (std::abs(rec.freq_hz - f_final) > 0.02) return false;
    }
    return true;
  }

  Scenario sc_;
  ModelParams m_;
  double voc_array_ = 0.0;
};

}  // namespace droopsim
