#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "droopsim/battery.hpp"

using namespace droopsim;

namespace {
BatteryParams defaults() { return BatteryParams{}; }
}

TEST_CASE("terminal voltage closed-form points", "[battery]") {
  const auto p = defaults();

  SECTION("fresh unloaded pack reads e0 + a_exp") {
    BatteryState s{0.0, 0.0, 0.0, 0.0};
    CHECK(terminal_voltage(p, s) == Catch::Approx(p.e0 + p.a_exp).epsilon(1e-15));
  }

  SECTION("exponential zone decays toward e0") {
    BatteryState s{500.0, 0.0, 0.0, 0.0};
    CHECK(terminal_voltage(p, s) == Catch::Approx(p.e0).epsilon(1e-9));
  }

  SECTION("loaded point matches direct arithmetic") {
    BatteryState s{100.0, 200.0, 200.0, 0.0};
    const double expected = 700.0 - 0.02 * 200.0 -
                            0.5 * (1000.0 / 900.0) * 200.0 / 1000.0 +
                            50.0 * std::exp(-0.05 * 100.0);
    CHECK(terminal_voltage(p, s) == Catch::Approx(expected).epsilon(1e-15));
  }

  SECTION("capacity guard") {
    BatteryState s{999.5, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(terminal_voltage(p, s), CapacityExhausted);
  }
}

TEST_CASE("battery step dynamics", "[battery]") {
  const auto p = defaults();

  SECTION("zero command leaves it fixed and decays the filter") {
    BatteryState s{50.0, 120.0, 120.0, 0.0};
    auto n = s;
    for (int k = 0; k < 1000; ++k) n = battery_step(p, n, 0.0, 0.5);
    CHECK(n.it == 50.0);
    CHECK(std::abs(n.i_star) < 1.0e-3);
  }

  SECTION("unit conversion: 360 A for 10 s extracts exactly 1 Ah") {
    BatteryState s{};
    auto n = s;
    for (int k = 0; k < 1000; ++k) n = battery_step(p, n, 360.0, 0.01);
    CHECK(n.it == Catch::Approx(1.0).epsilon(1e-12));
  }

  SECTION("filter step response hits 63.2% at t_filter") {
    BatteryState s{};
    auto n = s;
    const double dt = p.t_filter / 3000.0;
    const int steps = 3000;
    for (int k = 0; k < steps; ++k) n = battery_step(p, n, 100.0, dt);
    CHECK(n.i_star == Catch::Approx(63.2).epsilon(0.01));
  }

  SECTION("charging floors extracted capacity at zero") {
    BatteryState s{0.001, 0.0, 0.0, 0.0};
    const auto n = battery_step(p, s, -3600.0 * 10, 1.0);
    CHECK(n.it == 0.0);
  }
}

TEST_CASE("charge bookkeeping matches the accumulated current", "[battery]") {
  const auto p = defaults();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> iu(-400.0, 400.0);

  BatteryState s{200.0, 0.0, 0.0, 0.0};
  auto n = s;
  double integral = 0.0;  // rectangle rule, mirroring the step definition
  const double dt = 0.05;
  for (int k = 0; k < 4000; ++k) {
    const double i = iu(rng);
    integral += i * dt / 3600.0;
    n = battery_step(p, n, i, dt);
  }
  CHECK(n.it - s.it == Catch::Approx(integral).margin(1e-9));
}

TEST_CASE("terminal voltage is monotone and affine where claimed", "[battery]") {
  const auto p = defaults();

  SECTION("strictly decreasing in extracted capacity under load") {
    double prev = 1e9;
    for (double it = 0.0; it <= 600.0; it += 50.0) {
      BatteryState s{it, 150.0, 150.0, 0.0};
      const double v = terminal_voltage(p, s);
      CHECK(v < prev);
      prev = v;
    }
  }

  SECTION("affine in instantaneous current with slope -r") {
    BatteryState a{100.0, 50.0, 10.0, 0.0};
    BatteryState b = a;
    b.i = 310.0;
    const double dv = terminal_voltage(p, b) - terminal_voltage(p, a);
    CHECK(dv / (b.i - a.i) == Catch::Approx(-p.r_internal).epsilon(1e-12));
  }

  SECTION("affine in filtered current with the polarization slope") {
    BatteryState a{100.0, 50.0, 10.0, 0.0};
    BatteryState b = a;
    b.i_star = 450.0;
    const double dv = terminal_voltage(p, b) - terminal_voltage(p, a);
    const double slope = -p.k_pol * (p.q_cap / (p.q_cap - a.it)) / p.q_cap;
    CHECK(dv / (b.i_star - a.i_star) == Catch::Approx(slope).epsilon(1e-12));
  }
}

TEST_CASE("dc-link regulator", "[battery]") {
  const auto p = defaults();

  SECTION("no error, no command") {
    const auto [cmd, integ] = dclink_regulator_step(p, 1500.0, 1500.0, 0.0, 1e-3);
    CHECK(cmd == 0.0);
    CHECK(integ == 0.0);
  }

  SECTION("sagging link discharges the battery") {
    const auto [cmd, integ] = dclink_regulator_step(p, 1490.0, 1500.0, 0.0, 1e-3);
    CHECK(cmd > 0.0);
    CHECK(integ > 0.0);
  }

  SECTION("sustained error ramps at ki*err until saturation, then freezes") {
    const double err = 20.0;
    const double dt = 1e-3;
    double integ = 0.0;
    double cmd = 0.0;
    double t = 0.0;
    // Before saturation the command is kp*err + ki*err*t.
    for (int k = 0; k < 100; ++k) {
      std::tie(cmd, integ) = dclink_regulator_step(p, 1500.0 - err, 1500.0, integ, dt);
      t += dt;
      const double expected = p.kp_dclink * err + p.ki_dclink * err * t;
      if (expected < p.p_rating) CHECK(cmd == Catch::Approx(expected).epsilon(1e-12));
    }
    // Push far past saturation; the integrator must hold.
    double frozen = -1.0;
    for (int k = 0; k < 3000; ++k) {
      std::tie(cmd, integ) = dclink_regulator_step(p, 1500.0 - err, 1500.0, integ, dt);
      if (cmd >= p.p_rating) {
        if (frozen < 0.0) frozen = integ;
        CHECK(integ == frozen);
      }
    }
    CHECK(cmd == p.p_rating);
  }
}

TEST_CASE("regulator holds the link inside one percent in closed loop", "[battery]") {
  // Minimal plant: capacitor fed by the battery command against a fixed draw.
  const auto p = defaults();
  const double c_dc = 0.1;
  const double draw = 0.8e6;  // inside the rating
  double vdc = 1450.0;
  double integ = 0.0;
  const double dt = 1e-4;
  for (int k = 0; k < 200000; ++k) {
    const auto [cmd, integ2] = dclink_regulator_step(p, vdc, 1500.0, integ, dt);
    integ = integ2;
    vdc += dt * (cmd - draw) / (c_dc * vdc);
  }
  CHECK(std::abs(vdc - 1500.0) / 1500.0 < 0.01);
}

TEST_CASE("current solve inverts power at the terminals", "[battery]") {
  const auto p = defaults();
  BatteryState s{200.0, 300.0, 0.0, 0.0};
  for (double power : {-1.5e6, -2e5, 0.0, 3e5, 1.0e6, 1.9e6}) {
    const double i = battery_current_for_power(p, s, power);
    BatteryState probe = s;
    probe.i = i;
    CHECK(i * terminal_voltage(p, probe) == Catch::Approx(power).margin(1e-6));
  }
}

TEST_CASE("parameter validation", "[battery]") {
  auto p = defaults();
  p.q_cap = 0.0;
  CHECK_THROWS_AS(validate(p), InvalidParams);
  auto q = defaults();
  q.soc_init = 1.5;
  CHECK_THROWS_AS(validate(q), InvalidParams);
}
