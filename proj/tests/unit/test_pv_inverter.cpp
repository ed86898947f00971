#include <cmath>
#include <random>

#include "cvrsim/error.hpp"
#include "cvrsim/pv_inverter.hpp"
#include "doctest.h"

using namespace cvrsim;

namespace {

PvUnit unit(double kva, double peak_kw, bool volt_var) {
  PvUnit u;
  u.id = "PV1";
  u.bus = "N1";
  u.phases = PhaseSet::single(Phase::A);
  u.peak_kw = peak_kw;
  u.limits = InverterLimits::for_rating(kva);
  if (volt_var) u.mode = VoltVar{};
  return u;
}

}  // namespace

TEST_CASE("default volt-var curve and limits") {
  const VoltVarCurve c;
  CHECK(c.points[0] == VoltVarCurve::Point{0.92, 0.44});
  CHECK(c.points[1] == VoltVarCurve::Point{0.98, 0.0});
  CHECK(c.points[2] == VoltVarCurve::Point{1.02, 0.0});
  CHECK(c.points[3] == VoltVarCurve::Point{1.08, -0.44});
  CHECK(c.v_ref == 1.0);
  CHECK(c.v_l == 0.9);
  CHECK(c.v_h == 1.1);
  CHECK(check_volt_var_curve(c).empty());
  const InverterLimits l = InverterLimits::for_rating(10.0);
  CHECK(l.kvar_max == doctest::Approx(4.4));
  CHECK(l.kvar_max_abs == doctest::Approx(4.4));
  CHECK(l.cut_in_pct == 5.0);
  CHECK(l.cut_out_pct == 5.0);
  CHECK(l.pmin_no_vars_pct == 5.0);
  CHECK(l.pmin_kvar_max_pct == 20.0);
  CHECK(check_inverter_limits(l).empty());
}

TEST_CASE("volt-var curve values") {
  const VoltVarCurve c;
  CHECK(volt_var_q(c, 1.00) == 0.0);
  CHECK(volt_var_q(c, 0.92) == 0.44);
  CHECK(volt_var_q(c, 0.98) == 0.0);
  CHECK(volt_var_q(c, 1.02) == 0.0);
  CHECK(volt_var_q(c, 1.08) == -0.44);
  CHECK(volt_var_q(c, 0.95) == doctest::Approx(0.22).epsilon(1e-12));
  CHECK(volt_var_q(c, 1.05) == doctest::Approx(-0.22).epsilon(1e-12));
  CHECK(volt_var_q(c, 0.5) == 0.44);
  CHECK(volt_var_q(c, 1.5) == -0.44);
}

TEST_CASE("volt-var curve is continuous and non-increasing") {
  const VoltVarCurve c;
  double prev = volt_var_q(c, 0.85);
  for (int k = 1; k <= 300; ++k) {
    const double v = 0.85 + 1e-3 * k;
    const double q = volt_var_q(c, v);
    CHECK(q <= prev);
    CHECK(prev - q <= 0.44 / 0.06 * 1e-3 + 1e-12);
    prev = q;
  }
}

TEST_CASE("curve validation rejects disordered points") {
  VoltVarCurve c;
  c.points[1].v = 0.91;
  CHECK_FALSE(check_volt_var_curve(c).empty());
  InverterLimits l = InverterLimits::for_rating(10.0);
  l.cut_out_pct = 6.0;
  CHECK_FALSE(check_inverter_limits(l).empty());
  PvUnit u = unit(10.0, 11.0, false);
  CHECK_FALSE(check_pv_unit(u).empty());
}

TEST_CASE("active power with cut-in and cut-out hysteresis") {
  PvUnit u = unit(10.0, 10.0, false);
  CHECK(available_active_power(u, 0.0) == 0.0);
  CHECK_FALSE(u.online);
  CHECK(available_active_power(u, 0.04) == 0.0);
  CHECK_FALSE(u.online);
  CHECK(available_active_power(u, 0.06) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(u.online);
  CHECK(available_active_power(u, 0.045) == 0.0);
  CHECK_FALSE(u.online);

  PvUnit h = unit(10.0, 10.0, false);
  h.limits.cut_in_pct = 8.0;
  h.limits.cut_out_pct = 3.0;
  CHECK(available_active_power(h, 0.05) == 0.0);
  CHECK(available_active_power(h, 0.08) == doctest::Approx(0.8));
  CHECK(available_active_power(h, 0.05) == doctest::Approx(0.5));
  CHECK(available_active_power(h, 0.03) == doctest::Approx(0.3));
  CHECK(available_active_power(h, 0.029) == 0.0);
  CHECK(available_active_power(h, 0.05) == 0.0);
}

TEST_CASE("reactive capability envelope") {
  const InverterLimits l = InverterLimits::for_rating(10.0);
  CHECK(reactive_capability(l, 2.0).q_max == doctest::Approx(4.4).epsilon(1e-12));
  CHECK(reactive_capability(l, 2.0).q_min == doctest::Approx(-4.4).epsilon(1e-12));
  const ReactiveRange low = reactive_capability(l, 0.4);
  CHECK(low.q_min == 0.0);
  CHECK(low.q_max == 0.0);
  CHECK(reactive_capability(l, 9.0).q_max == doctest::Approx(std::sqrt(19.0)).epsilon(1e-12));
  CHECK(reactive_capability(l, 9.0).q_max == doctest::Approx(4.3589).epsilon(1e-5));
  CHECK(reactive_capability(l, 1.25).q_max == doctest::Approx(4.4 * 0.5).epsilon(1e-12));
  CHECK(reactive_capability(l, 0.5).q_max == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(reactive_capability(l, 10.0).q_max == 0.0);
  CHECK_THROWS_AS(reactive_capability(l, -0.1), Error);
  CHECK_THROWS_AS(reactive_capability(l, 10.1), Error);
}

TEST_CASE("reactive capability is continuous above the no-vars threshold") {
  const InverterLimits l = InverterLimits::for_rating(10.0);
  double prev = reactive_capability(l, 0.5).q_max;
  for (int k = 1; k <= 9400; ++k) {
    const double p = 0.5 + 1e-3 * k;
    const double q = reactive_capability(l, p).q_max;
    CHECK(std::abs(q - prev) < 0.01);
    prev = q;
  }
}

TEST_CASE("inverter output in both modes") {
  PvUnit pf = unit(10.0, 10.0, false);
  for (double v : {0.9, 1.0, 1.1}) {
    const InverterOutput o = inverter_output(pf, v, 0.5);
    CHECK(o.p == doctest::Approx(5.0));
    CHECK(o.q == 0.0);
  }
  PvUnit vv = unit(10.0, 10.0, true);
  CHECK(inverter_output(vv, 0.92, 0.5).q == doctest::Approx(4.4).epsilon(1e-12));
  CHECK(inverter_output(vv, 0.92, 0.99).q == doctest::Approx(std::sqrt(100.0 - 98.01)).epsilon(1e-12));
  CHECK(inverter_output(vv, 0.92, 0.99).q == doctest::Approx(1.4107).epsilon(1e-4));
  CHECK(inverter_output(vv, 1.0, 0.5).q == 0.0);
  CHECK(inverter_output(vv, 1.08, 0.5).q == doctest::Approx(-4.4).epsilon(1e-12));

  PvUnit three = unit(30.0, 30.0, true);
  three.phases = PhaseSet::all();
  const InverterOutput o = inverter_output(three, 0.95, 0.5);
  CHECK(o.p == doctest::Approx(5.0));
  CHECK(o.q == doctest::Approx(0.22 * 30.0 / 3.0).epsilon(1e-12));
  CHECK(reactive_command(three, 0.95, 15.0) == doctest::Approx(6.6).epsilon(1e-12));
}

TEST_CASE("reactive output never exceeds the capability bound") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 5000; ++k) {
    const double kva = 1.0 + 99.0 * u(rng);
    PvUnit vv = unit(kva, kva * (0.5 + 0.5 * u(rng)), true);
    vv.online = true;
    const double v = 0.85 + 0.3 * u(rng);
    const double m = u(rng);
    const InverterOutput o = inverter_output(vv, v, m);
    const double p_total = o.p;
    const double bound = std::min(0.44 * kva, std::sqrt(std::max(0.0, kva * kva - p_total * p_total)));
    CHECK(std::abs(o.q) <= bound * (1.0 + 1e-12));
  }
}
