#include <cmath>
#include <random>

#include "cvrsim/error.hpp"
#include "cvrsim/zip_load.hpp"
#include "doctest.h"

using namespace cvrsim;

namespace {

ZipLoad make_load(double p0, double q0, ZipCoefficients c = {}) {
  ZipLoad l;
  l.bus = "N1";
  l.p0 = p0;
  l.q0 = q0;
  l.p_coef = c;
  l.q_coef = c;
  return l;
}

}  // namespace

TEST_CASE("zip evaluate at rated voltage returns rated power exactly") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const double z = u(rng), i = u(rng) * (1.0 - z);
    ZipLoad l = make_load(1000.0 * u(rng), 500.0 * u(rng), {z, i, 1.0 - z - i});
    l.v0 = 0.9 + 0.2 * u(rng);
    const LoadPower s = evaluate(l, l.v0);
    CHECK(s.p == l.p0);
    CHECK(s.q == l.q0);
  }
  CHECK(evaluate(make_load(100.0, 0.0), 1.0).p == 100.0);
}

TEST_CASE("zip evaluate matches hand-computed values at 0.95 p.u.") {
  const ZipLoad l = make_load(100.0, 40.0, {0.5, 0.3, 0.2});
  const LoadPower s = evaluate(l, 0.95);
  CHECK(s.p == doctest::Approx(100.0 * (0.5 * 0.9025 + 0.3 * 0.95 + 0.2)).epsilon(1e-14));
  CHECK(s.p == doctest::Approx(93.625).epsilon(1e-12));
  CHECK(s.q == doctest::Approx(37.45).epsilon(1e-12));
}

TEST_CASE("zip evaluate rejects non-positive voltage") {
  const ZipLoad l = make_load(10.0, 1.0);
  CHECK_THROWS_AS(evaluate(l, 0.0), Error);
  CHECK_THROWS_AS(evaluate(l, -0.5), Error);
  CHECK_THROWS_AS(sensitivity(l, 0.0), Error);
}

TEST_CASE("zip sensitivity") {
  CHECK(sensitivity(make_load(100.0, 0.0, {0.5, 0.3, 0.2}), 1.0) == doctest::Approx(130.0).epsilon(1e-14));
  for (double v : {0.5, 0.9, 1.0, 1.1}) CHECK(sensitivity(make_load(100.0, 0.0, {0.0, 0.0, 1.0}), v) == 0.0);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = 1e-6;
  for (int k = 0; k < 500; ++k) {
    const double z = u(rng), i = u(rng) * (1.0 - z);
    ZipLoad l = make_load(1.0 + 999.0 * u(rng), 0.0, {z, i, 1.0 - z - i});
    l.v0 = 0.95 + 0.1 * u(rng);
    const double v = 0.85 + 0.3 * u(rng);
    const double fd = (evaluate(l, v + h).p - evaluate(l, v - h).p) / (2.0 * h);
    const double an = sensitivity(l, v);
    CHECK(std::abs(fd - an) <= 1e-6 * std::abs(an));
  }
}

TEST_CASE("zip evaluate is monotone in voltage for non-negative z and i") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double z = u(rng), i = u(rng) * (1.0 - z);
    const ZipLoad l = make_load(50.0, 20.0, {z, i, 1.0 - z - i});
    double prev = -1.0;
    for (double v = 0.8; v <= 1.2; v += 0.001) {
      const double p = evaluate(l, v).p;
      CHECK(p >= prev);
      prev = p;
    }
  }
}

TEST_CASE("zip load validation") {
  CHECK(check_zip_load(make_load(10.0, 2.0)).empty());
  CHECK_FALSE(check_zip_load(make_load(-1.0, 0.0)).empty());
  CHECK_FALSE(check_zip_load(make_load(10.0, 0.0, {0.5, 0.3, 0.1})).empty());
  ZipLoad q_bad = make_load(10.0, 1.0);
  q_bad.q_coef = {0.4, 0.4, 0.4};
  CHECK_FALSE(check_zip_load(q_bad).empty());
  ZipLoad v0_bad = make_load(10.0, 1.0);
  v0_bad.v0 = 0.0;
  CHECK_FALSE(check_zip_load(v0_bad).empty());
  const ZipCoefficients d;
  CHECK(d.z == 0.5);
  CHECK(d.i == 0.3);
  CHECK(d.p == 0.2);
}
