#pragma once

// Frequency-droop damping law for a grid-forming converter, plus the averaged
// VSC power-delivery chain.
//
// The generated frequency obeys the damped swing form
//
//   t_a * domega/dt = p_ref - p_out + k_d * (omega_ref - omega_meas)
//
// with all powers in per-unit on s_base and omega in per-unit on f_base.
// omega_meas is the converter's own measured frequency: the damping path sees
// the generated frequency through a two-stage transducer filter (t_freq_meas
// per stage). The filter has unit DC gain, so the settled state is the exact
// fixed point omega = omega_ref + (p_ref - p_out)/k_d; transiently it carries
// the phase lag that a physical frequency measurement introduces, which is
// what makes heavier damping progressively more oscillatory.
//
// The same damping signal k_d*(omega_ref - omega_meas) doubles as the power
// the droop asks the converter to inject on top of p_ref; the engine feeds
// that command through the VSC chain.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "droopsim/errors.hpp"

namespace droopsim {

struct DroopParams {
  double p_ref = 2.6e6 / 3.5e6;  // pu, reference active power
  double k_d = 60.0;             // pu power per pu frequency
  double omega_ref = 1.0;        // pu
  double t_a = 5.6;              // s, virtual acceleration time constant
  double s_base = 3.5e6;         // VA
  double f_base = 60.0;          // Hz
  double t_freq_meas = 0.02;     // s, per stage of the frequency transducer
};

struct DroopState {
  double omega = 1.0;       // pu, generated frequency
  double theta = 0.0;       // rad, electrical angle, wrapped to (-pi, pi]
  double omega_meas1 = 1.0; // pu, transducer first stage
  double omega_meas = 1.0;  // pu, transducer output (damping path input)
};

struct VscControlParams {
  double kp_v = 0.1;    // outer voltage-loop proportional gain
  double ki_v = 60.0;   // outer voltage-loop integral gain (1/s)
  double t_i = 0.002;   // s, inner current-loop equivalent lag
  double i_max = 1.2;   // pu, converter current limit
  double v_ac_ref = 1.0;
};

inline void validate(const DroopParams& p) {
  auto fail = [](const char* what) { throw InvalidParams(std::string("droop: ") + what); };
  if (!(p.t_a > 0.0)) fail("t_a must be positive");
  if (!(p.s_base > 0.0)) fail("s_base must be positive");
  if (!(p.f_base > 0.0)) fail("f_base must be positive");
  if (p.k_d < 0.0) fail("k_d must be non-negative");
  if (!(p.t_freq_meas > 0.0)) fail("t_freq_meas must be positive");
}

inline void validate(const VscControlParams& p) {
  auto fail = [](const char* what) { throw InvalidParams(std::string("vsc: ") + what); };
  if (!(p.kp_v >= 0.0) || !(p.ki_v > 0.0)) fail("voltage-loop gains must be positive");
  if (!(p.t_i > 0.0)) fail("t_i must be positive");
  if (p.i_max < 1.0) fail("i_max must be at least 1.0 pu");
  if (!(p.v_ac_ref > 0.0)) fail("v_ac_ref must be positive");
}

inline double wrap_angle(double theta) {
  theta = std::fmod(theta + std::numbers::pi, 2.0 * std::numbers::pi);
  if (theta <= 0.0) theta += 2.0 * std::numbers::pi;
  return theta - std::numbers::pi;
}

// Damping-path power signal, shared between the swing equation and the
// converter power command.
inline double droop_damping_power(const DroopParams& p, const DroopState& s) {
  return p.k_d * (p.omega_ref - s.omega_meas);
}

namespace detail {

struct DroopDeriv {
  double d_omega, d_theta, d_m1, d_m;
};

inline DroopDeriv droop_deriv(const DroopParams& p, const DroopState& s,
                              double p_out) {
  DroopDeriv d;
  d.d_omega = (p.p_ref - p_out + droop_damping_power(p, s)) / p.t_a;
  d.d_theta = s.omega * 2.0 * std::numbers::pi * p.f_base;
  d.d_m1 = (s.omega - s.omega_meas1) / p.t_freq_meas;
  d.d_m = (s.omega_meas1 - s.omega_meas) / p.t_freq_meas;
  return d;
}

}  // namespace detail

// One RK4 step of the droop states with the measured output power held over
// the interval; the engine integrates the same derivatives inside its coupled
// step.
inline DroopState droop_step(const DroopParams& p, const DroopState& s,
                             double p_out, double dt) {
  if (!(dt > 0.0)) throw InvalidParams("droop: dt must be positive");
  auto add = [](const DroopState& base, const detail::DroopDeriv& d, double h) {
    DroopState r = base;
    r.omega += h * d.d_omega;
    r.theta += h * d.d_theta;
    r.omega_meas1 += h * d.d_m1;
    r.omega_meas += h * d.d_m;
    return r;
  };
  const auto k1 = detail::droop_deriv(p, s, p_out);
  const auto k2 = detail::droop_deriv(p, add(s, k1, dt / 2), p_out);
  const auto k3 = detail::droop_deriv(p, add(s, k2, dt / 2), p_out);
  const auto k4 = detail::droop_deriv(p, add(s, k3, dt), p_out);
  DroopState n = s;
  n.omega += dt / 6.0 * (k1.d_omega + 2 * k2.d_omega + 2 * k3.d_omega + k4.d_omega);
  n.theta += dt / 6.0 * (k1.d_theta + 2 * k2.d_theta + 2 * k3.d_theta + k4.d_theta);
  n.omega_meas1 += dt / 6.0 * (k1.d_m1 + 2 * k2.d_m1 + 2 * k3.d_m1 + k4.d_m1);
  n.omega_meas += dt / 6.0 * (k1.d_m + 2 * k2.d_m + 2 * k3.d_m + k4.d_m);
  n.theta = wrap_angle(n.theta);
  if (!(n.omega > 0.9 && n.omega < 1.1))
    throw Unstable("droop: omega left the (0.9, 1.1) pu band");
  return n;
}

struct VscChainState {
  double p_out = 0.0;  // pu, delivered power
};

struct VscChainResult {
  VscChainState state;
  bool limited = false;
};

// Delivered power follows the demand through the inner-loop lag, clamped to
// the converter's current capability at the present AC voltage.
inline VscChainResult vsc_chain_step(const VscControlParams& p,
                                     const VscChainState& s, double v_ac_meas,
                                     double p_demand, double dt) {
  if (!(dt > 0.0)) throw InvalidParams("vsc: dt must be positive");
  const double cap = p.i_max * std::max(v_ac_meas, 0.0);
  const double target = std::clamp(p_demand, -cap, cap);
  VscChainResult r;
  r.limited = target != p_demand;
  // RK4 on the scalar lag, matching the engine's integrator.
  const double a = 1.0 / p.t_i;
  auto f = [&](double x) { return a * (target - x); };
  const double k1 = f(s.p_out);
  const double k2 = f(s.p_out + 0.5 * dt * k1);
  const double k3 = f(s.p_out + 0.5 * dt * k2);
  const double k4 = f(s.p_out + dt * k3);
  r.state.p_out = s.p_out + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  return r;
}

}  // namespace droopsim
