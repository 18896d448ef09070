#pragma once

// Generic lithium-ion terminal-voltage model (Tremblay/Dessaint family) with
// extracted-capacity and filtered-current state, plus the PI regulator that
// turns a DC-link voltage error into a battery power command.
//
// Terminal voltage, discharge-positive current convention:
//
//   v = e0 - r*i - k_pol*(q/(q - it))*(i_star/q) + a_exp*exp(-b_exp*it)
//
// The polarization term is normalised by the pack capacity so k_pol keeps a
// convenient magnitude for utility-scale packs; the same expression covers
// charge and discharge.

#include <algorithm>
#include <cmath>
#include <utility>

#include "droopsim/errors.hpp"

namespace droopsim {

struct BatteryParams {
  double e0 = 700.0;        // V, no-load constant voltage
  double r_internal = 0.02; // ohm
  double k_pol = 0.5;       // V, polarization voltage constant
  double q_cap = 1000.0;    // Ah
  double a_exp = 50.0;      // V, exponential-zone amplitude
  double b_exp = 0.05;      // 1/Ah, exponential capacity constant
  double t_filter = 30.0;   // s, low-frequency current filter time constant
  double p_rating = 2.0e6;  // W, converter power rating
  double soc_init = 0.8;    // initial state of charge
  // DC-link regulator gains and the converter actuation lag.
  double kp_dclink = 2.5e4; // W/V
  double ki_dclink = 2.0e5; // W/(V*s)
  double t_converter = 0.005; // s
};

struct BatteryState {
  double it = 0.0;     // Ah, extracted capacity
  double i_star = 0.0; // A, low-pass-filtered current
  double i = 0.0;      // A, instantaneous current (discharge positive)
  double v_term = 0.0; // V
};

inline void validate(const BatteryParams& p) {
  auto fail = [](const char* what) { throw InvalidParams(std::string("battery: ") + what); };
  if (!(p.e0 > 0.0)) fail("e0 must be positive");
  if (!(p.q_cap > 0.0)) fail("q_cap must be positive");
  if (!(p.t_filter > 0.0)) fail("t_filter must be positive");
  if (!(p.p_rating > 0.0)) fail("p_rating must be positive");
  if (p.r_internal < 0.0 || p.k_pol < 0.0 || p.a_exp < 0.0 || p.b_exp < 0.0)
    fail("r_internal, k_pol, a_exp, b_exp must be non-negative");
  if (!(p.soc_init > 0.0) || p.soc_init > 1.0) fail("soc_init must be in (0, 1]");
  if (!(p.kp_dclink >= 0.0) || !(p.ki_dclink >= 0.0)) fail("regulator gains must be non-negative");
  if (!(p.t_converter > 0.0)) fail("t_converter must be positive");
}

// Open-circuit part of the terminal voltage: everything except the ohmic drop.
inline double battery_emf(const BatteryParams& p, double it, double i_star) {
  return p.e0 - p.k_pol * i_star / (p.q_cap - it) + p.a_exp * std::exp(-p.b_exp * it);
}

inline double terminal_voltage(const BatteryParams& p, const BatteryState& s) {
  if (s.it >= 0.999 * p.q_cap)
    throw CapacityExhausted("battery: extracted capacity reached 99.9% of q_cap");
  return battery_emf(p, s.it, s.i_star) - p.r_internal * s.i;
}

// Advance the capacity counter and current filter one step under a commanded
// current, then refresh the terminal voltage.
inline BatteryState battery_step(const BatteryParams& p, const BatteryState& s,
                                 double i_cmd, double dt) {
  if (!(dt > 0.0)) throw InvalidParams("battery: dt must be positive");
  BatteryState n = s;
  n.it = std::max(0.0, s.it + i_cmd * dt / 3600.0);
  n.i_star = s.i_star + (dt / p.t_filter) * (i_cmd - s.i_star);
  n.i = i_cmd;
  n.v_term = terminal_voltage(p, n);
  return n;
}

// PI regulator for the DC-link voltage. Positive output discharges the
// battery into the link. The integrator freezes whenever the command is
// saturated and the error would push it further.
inline std::pair<double, double> dclink_regulator_step(const BatteryParams& p,
                                                       double vdc_meas,
                                                       double vdc_ref,
                                                       double integ,
                                                       double dt) {
  if (!(vdc_ref > 0.0)) throw InvalidParams("battery: vdc_ref must be positive");
  const double err = vdc_ref - vdc_meas;
  const double unsat = p.kp_dclink * err + p.ki_dclink * (integ + err * dt);
  const double cmd = std::clamp(unsat, -p.p_rating, p.p_rating);
  const bool winding = (unsat > p.p_rating && err > 0.0) ||
                       (unsat < -p.p_rating && err < 0.0);
  const double integ_next = winding ? integ : integ + err * dt;
  return {cmd, integ_next};
}

// Current that delivers the requested electrical power at the present state,
// from p = i * (emf - r*i). Closed form; the smaller quadratic root is the
// physical branch for discharge and extends smoothly through charging.
inline double battery_current_for_power(const BatteryParams& p,
                                        const BatteryState& s, double power) {
  const double emf = battery_emf(p, s.it, s.i_star);
  if (p.r_internal <= 0.0) return power / emf;
  const double disc = emf * emf - 4.0 * p.r_internal * power;
  if (disc < 0.0)
    throw CapacityExhausted("battery: requested power beyond deliverable maximum");
  return (emf - std::sqrt(disc)) / (2.0 * p.r_internal);
}

}  // namespace droopsim
