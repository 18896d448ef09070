#pragma once

// Single-diode photovoltaic array model with datasheet-driven parameter
// extraction and a perturb-and-observe MPPT controller.
//
// The module I-V relation is the implicit five-parameter equation
//
//   i = i_pv - i_0*(exp((v + i*r_s)/(a*v_t)) - 1) - (v + i*r_s)/r_p
//
// fitted so the curve reproduces the datasheet short-circuit point, the
// open-circuit point and the experimental maximum power. The extraction
// follows the classic iterative scheme (Villalva et al.): sweep r_s upward
// from zero, pin r_p at each step so the curve passes through the maximum
// power point, and stop when the curve's peak power equals the experimental
// value. Temperature and irradiance corrections use the datasheet k_v/k_i
// coefficients. Arrays scale the module curve by n_s in voltage and n_p in
// current.

#include <algorithm>
#include <cmath>
#include <string>

#include "droopsim/errors.hpp"

namespace droopsim {

inline constexpr double kBoltzmann = 1.380649e-23;   // J/K
inline constexpr double kElectronCharge = 1.602176634e-19;  // C

struct PvArrayParams {
  double k_v = -0.123;     // V/K, open-circuit voltage temperature coefficient
  double k_i = 0.0032;     // A/K, short-circuit current temperature coefficient
  double v_ocn = 32.9;     // V, module open-circuit voltage at nominal conditions
  double i_scn = 8.2;      // A, module short-circuit current at nominal conditions
  double p_max_e = 200.14; // W, experimental module maximum power
  double i_mp = 7.61;      // A, module current at maximum power
  double v_mp = 26.3;      // V, module voltage at maximum power
  int n_p = 500;           // parallel module count
  int n_s = 24;            // series module count
  double t_n = 298.15;     // K, nominal cell temperature
  double g_n = 1000.0;     // W/m^2, nominal irradiance
  // Series cell count inside one module. Not part of the usual headline
  // datasheet row but required to form the thermal voltage; 54 is the
  // KC200GT value.
  int cells_per_module = 54;
};

struct PvDerivedParams {
  double i_pv_n = 0.0;  // A, nominal photo-current
  double i_0 = 0.0;     // A, diode saturation current at nominal temperature
  double a = 1.3;       // diode ideality constant
  double r_s = 0.0;     // ohm, series resistance
  double r_p = 0.0;     // ohm, parallel resistance
  double v_t_n = 0.0;   // V, nominal thermal voltage of the module cell string
};

struct PvOperatingPoint {
  double voltage = 0.0;      // V, array terminal voltage
  double current = 0.0;      // A, array current
  double power = 0.0;        // W
  double irradiance = 0.0;   // W/m^2
  double temperature = 0.0;  // K
};

struct MpptState {
  double v_ref = 0.0;        // V, commanded array voltage
  double step = 2.0;         // V, perturbation step (array level)
  double last_power = 0.0;   // W
  double last_voltage = 0.0; // V
  double period = 0.01;      // s, update period
  double v_max = 0.0;        // V, clamp ceiling (array open-circuit voltage)
  int direction = +1;        // current perturbation direction
};

inline void validate(const PvArrayParams& p) {
  auto fail = [](const std::string& what) { throw InvalidParams("pv: " + what); };
  if (!(p.v_ocn > 0.0)) fail("v_ocn must be positive");
  if (!(p.i_scn > 0.0)) fail("i_scn must be positive");
  if (!(p.p_max_e > 0.0)) fail("p_max_e must be positive");
  if (p.n_p <= 0 || p.n_s <= 0) fail("n_p and n_s must be positive");
  if (!(p.v_mp < p.v_ocn)) fail("v_mp must be below v_ocn");
  if (!(p.i_mp < p.i_scn)) fail("i_mp must be below i_scn");
  if (!(p.t_n > 0.0) || !(p.g_n > 0.0)) fail("t_n and g_n must be positive");
  if (p.cells_per_module <= 0) fail("cells_per_module must be positive");
  const double self = std::abs(p.v_mp * p.i_mp - p.p_max_e) / p.p_max_e;
  if (self >= 0.01) fail("datasheet MPP inconsistent: v_mp*i_mp deviates from p_max_e by >1%");
}

namespace detail {

// Saturation current pinned so the module curve crosses zero exactly at the
// open-circuit voltage, given photo-current and shunt resistance.
inline double diode_i0(double i_pv, double v_oc, double r_p, double a_vt) {
  return (i_pv - v_oc / r_p) / std::expm1(v_oc / a_vt);
}

// Photo-current pinned so the curve passes exactly through (0, i_sc).
inline double photo_current(double i_sc, double i_0, double r_s, double r_p,
                            double a_vt) {
  return i_sc * (1.0 + r_s / r_p) + i_0 * std::expm1(i_sc * r_s / a_vt);
}

struct ModuleCurve {
  double i_pv, i_0, r_s, r_p, a_vt;
};

// Solve the implicit diode equation for module current at module voltage v.
// The residual is monotone decreasing in i, so a bracketed Newton iteration
// with bisection fallback always converges.
inline double module_current(const ModuleCurve& c, double v, double i_tol) {
  double lo = 0.0;
  double hi = std::max(c.i_pv, 1e-12);
  auto residual = [&](double i) {
    return c.i_pv - c.i_0 * std::expm1((v + i * c.r_s) / c.a_vt) -
           (v + i * c.r_s) / c.r_p - i;
  };
  double f_lo = residual(lo);
  if (f_lo <= 0.0) return 0.0;  // at or beyond open circuit
  double x = std::min(hi, std::max(lo, c.i_pv - v / c.r_p));
  for (int iter = 0; iter < 200; ++iter) {
    const double f = residual(x);
    if (std::abs(f) < i_tol) return x;
    const double dfdx = -c.i_0 * (c.r_s / c.a_vt) *
                            std::exp((v + x * c.r_s) / c.a_vt) -
                        c.r_s / c.r_p - 1.0;
    if (f > 0.0) lo = x; else hi = x;
    double next = x - f / dfdx;
    if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

inline double module_voc(const ModuleCurve& c, double v_hint) {
  if (c.i_pv <= 0.0) return 0.0;
  double lo = 0.0, hi = std::max(v_hint * 1.5, 1.0);
  auto residual = [&](double v) {
    return c.i_pv - c.i_0 * std::expm1(v / c.a_vt) - v / c.r_p;
  };
  while (residual(hi) > 0.0) hi *= 2.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (residual(mid) > 0.0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Peak of v*i(v) on [0, voc]; the power curve is unimodal so a golden-section
// search is enough.
inline std::pair<double, double> module_peak_power(const ModuleCurve& c,
                                                   double voc, double i_tol) {
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = 0.0, hi = voc;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  auto power = [&](double v) { return v * module_current(c, v, i_tol); };
  double f1 = power(x1), f2 = power(x2);
  for (int iter = 0; iter < 120; ++iter) {
    if (f1 < f2) {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = power(x2);
    } else {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = power(x1);
    }
  }
  const double v_best = 0.5 * (lo + hi);
  return {v_best, power(v_best)};
}

// r_p choice that forces the curve through (v_mp, p_max_e/v_mp) for a given
// r_s. Returns a negative value when no positive solution exists.
inline double rp_for_mpp(const PvArrayParams& p, double i_pv, double i_0,
                         double r_s, double a_vt) {
  const double i_mp = p.p_max_e / p.v_mp;
  const double v_d = p.v_mp + i_mp * r_s;
  const double denom =
      p.v_mp * i_pv - p.v_mp * i_0 * std::expm1(v_d / a_vt) - p.p_max_e;
  if (denom <= 0.0) return -1.0;
  return p.v_mp * v_d / denom;
}

}  // namespace detail

// Fit the five-parameter single-diode module model to the datasheet points.
// The r_s sweep brackets the power-matching condition and then bisects; the
// boundary conditions (short-circuit and open-circuit crossing) hold exactly
// at every candidate by construction of i_pv and i_0.
inline PvDerivedParams fit_single_diode(const PvArrayParams& p,
                                        double tol = 1e-3,
                                        double ideality = 1.3) {
  validate(p);
  if (!(tol > 0.0) || tol > 1e-2) throw InvalidParams("pv: tol must be in (0, 1e-2]");
  if (ideality < 1.0 || ideality > 1.5)
    throw InvalidParams("pv: ideality constant outside [1.0, 1.5]");

  const double v_t_n = p.cells_per_module * kBoltzmann * p.t_n / kElectronCharge;
  const double a_vt = ideality * v_t_n;
  const double i_tol = 1e-12 * p.i_scn;

  // Peak-power mismatch for a candidate r_s, with i_pv/i_0/r_p slaved to the
  // boundary conditions and the MPP crossing.
  auto peak_error = [&](double r_s, detail::ModuleCurve* out) -> double {
    double i_pv = p.i_scn;
    double i_0 = 0.0, r_p = 0.0;
    for (int k = 0; k < 8; ++k) {
      r_p = detail::rp_for_mpp(p, i_pv, i_0, r_s, a_vt);
      if (r_p <= r_s || r_p <= 0.0) return std::nan("");
      i_0 = detail::diode_i0(i_pv, p.v_ocn, r_p, a_vt);
      if (i_0 <= 0.0) return std::nan("");
      i_pv = detail::photo_current(p.i_scn, i_0, r_s, r_p, a_vt);
    }
    detail::ModuleCurve c{i_pv, i_0, r_s, r_p, a_vt};
    if (out) *out = c;
    const auto [v_pk, p_pk] = detail::module_peak_power(c, p.v_ocn, i_tol);
    (void)v_pk;
    return p_pk - p.p_max_e;
  };

  const double rs_step = 1e-3;
  const int rs_cap = 2000;
  double rs_lo = 0.0;
  double err_lo = peak_error(rs_lo, nullptr);
  if (std::isnan(err_lo))
    throw NonConvergence("pv fit: datasheet points admit no single-diode curve");
  if (err_lo < -tol * p.p_max_e)
    throw NonConvergence("pv fit: requested maximum power above the ideal curve");

  double rs_hi = rs_lo, err_hi = err_lo;
  if (std::abs(err_lo) > tol * p.p_max_e) {
    bool bracketed = false;
    for (int k = 1; k <= rs_cap; ++k) {
      rs_hi = k * rs_step;
      err_hi = peak_error(rs_hi, nullptr);
      if (std::isnan(err_hi))
        throw NonConvergence("pv fit: r_s sweep left the feasible region");
      if (err_hi <= 0.0) { bracketed = true; break; }
      rs_lo = rs_hi;
      err_lo = err_hi;
    }
    if (!bracketed)
      throw NonConvergence("pv fit: r_s sweep exhausted without matching p_max_e");
    for (int k = 0; k < 80; ++k) {
      const double mid = 0.5 * (rs_lo + rs_hi);
      const double err = peak_error(mid, nullptr);
      if (std::isnan(err))
        throw NonConvergence("pv fit: bisect left the feasible region");
      if (std::abs(err) <= tol * p.p_max_e * 0.1) { rs_lo = rs_hi = mid; break; }
      if (err > 0.0) rs_lo = mid; else rs_hi = mid;
    }
  }

  const double r_s = 0.5 * (rs_lo + rs_hi);
  detail::ModuleCurve c{};
  const double final_err = peak_error(r_s, &c);
  if (std::isnan(final_err) || std::abs(final_err) > tol * p.p_max_e)
    throw NonConvergence("pv fit: could not match p_max_e within tolerance");

  PvDerivedParams d;
  d.i_pv_n = c.i_pv;
  d.i_0 = c.i_0;
  d.a = ideality;
  d.r_s = c.r_s;
  d.r_p = c.r_p;
  d.v_t_n = v_t_n;
  return d;
}

// Array open-circuit voltage at the given conditions.
inline double array_open_circuit_voltage(const PvDerivedParams& d,
                                         const PvArrayParams& p,
                                         double irradiance,
                                         double temperature) {
  if (irradiance < 0.0) throw OutOfRange("pv: negative irradiance");
  if (!(temperature > 0.0)) throw OutOfRange("pv: temperature must be positive");
  const double dT = temperature - p.t_n;
  const double v_t = d.v_t_n * temperature / p.t_n;
  const double a_vt = d.a * v_t;
  const double a_vt_n = d.a * d.v_t_n;
  const double i_pv = (d.i_pv_n + p.k_i * dT) * irradiance / p.g_n;
  // Scale the fitted saturation current with the usual k_v/k_i boundary-point
  // correction, normalised so nominal conditions reproduce the fit exactly.
  const double i_0 = d.i_0 * ((p.i_scn + p.k_i * dT) / p.i_scn) *
                     (std::expm1(p.v_ocn / a_vt_n) /
                      std::expm1((p.v_ocn + p.k_v * dT) / a_vt));
  detail::ModuleCurve c{i_pv, i_0, d.r_s, d.r_p, a_vt};
  return p.n_s * detail::module_voc(c, p.v_ocn);
}

// Array current/power at a terminal voltage under the given conditions.
inline PvOperatingPoint solve_iv(const PvDerivedParams& d,
                                 const PvArrayParams& p, double voltage,
                                 double irradiance, double temperature) {
  if (voltage < 0.0) throw OutOfRange("pv: negative voltage");
  if (irradiance < 0.0) throw OutOfRange("pv: negative irradiance");
  if (!(temperature > 0.0)) throw OutOfRange("pv: temperature must be positive");

  const double dT = temperature - p.t_n;
  const double v_t = d.v_t_n * temperature / p.t_n;
  const double a_vt = d.a * v_t;
  const double a_vt_n = d.a * d.v_t_n;
  const double i_pv = (d.i_pv_n + p.k_i * dT) * irradiance / p.g_n;
  const double i_0 = d.i_0 * ((p.i_scn + p.k_i * dT) / p.i_scn) *
                     (std::expm1(p.v_ocn / a_vt_n) /
                      std::expm1((p.v_ocn + p.k_v * dT) / a_vt));
  detail::ModuleCurve c{i_pv, i_0, d.r_s, d.r_p, a_vt};

  const double v_mod = voltage / p.n_s;
  const double voc_mod = detail::module_voc(c, p.v_ocn);
  if (v_mod > voc_mod * (1.0 + 1e-9) + 1e-12)
    throw OutOfRange("pv: voltage above open-circuit voltage at these conditions");

  const double i_tol = 1e-9 * p.i_scn;
  const double i_mod = (i_pv <= 0.0)
                           ? 0.0
                           : detail::module_current(c, std::min(v_mod, voc_mod), i_tol);
  PvOperatingPoint op;
  op.voltage = voltage;
  op.current = std::max(0.0, p.n_p * i_mod);
  op.power = op.voltage * op.current;
  op.irradiance = irradiance;
  op.temperature = temperature;
  return op;
}

// One perturb-and-observe update: keep the perturbation direction when power
// rose since the previous cycle, otherwise reverse, then move v_ref one step.
inline MpptState mppt_step(const MpptState& s, const PvOperatingPoint& measured) {
  MpptState n = s;
  const double d_power = measured.power - s.last_power;
  const double d_voltage = measured.voltage - s.last_voltage;
  int move = s.direction;
  if (d_voltage != 0.0) move = (d_voltage > 0.0) ? +1 : -1;
  n.direction = (d_power >= 0.0) ? move : -move;
  n.v_ref = std::clamp(s.v_ref + n.direction * s.step, 0.0, s.v_max);
  n.last_power = measured.power;
  n.last_voltage = measured.voltage;
  return n;
}

}  // namespace droopsim
