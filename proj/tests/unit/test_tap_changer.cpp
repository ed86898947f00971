#include "cvrsim/error.hpp"
#include "cvrsim/tap_changer.hpp"
#include "doctest.h"

using namespace cvrsim;

TEST_CASE("tap to ratio anchors") {
  const OltcConfig c;
  CHECK(c.step() == doctest::Approx(0.00625).epsilon(1e-15));
  CHECK(tap_to_ratio(c, 0) == 1.0);
  CHECK(tap_to_ratio(c, 16) == 1.1);
  CHECK(tap_to_ratio(c, -16) == 0.9);
  CHECK(tap_to_ratio(c, 8) == doctest::Approx(1.05).epsilon(1e-15));
  CHECK(tap_to_ratio(c, -8) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(tap_to_ratio(c, -8) >= 0.95 - 1e-15);
}

TEST_CASE("tap to ratio is strictly increasing and range-checked") {
  const OltcConfig c;
  for (int t = c.min_tap; t < c.max_tap; ++t) CHECK(tap_to_ratio(c, t) < tap_to_ratio(c, t + 1));
  CHECK_THROWS_AS(tap_to_ratio(c, 17), Error);
  CHECK_THROWS_AS(tap_to_ratio(c, -17), Error);
  const PhaseReal r = taps_to_ratios(c, {-1, 0, 1});
  CHECK(r[0] < 1.0);
  CHECK(r[1] == 1.0);
  CHECK(r[2] > 1.0);
}

TEST_CASE("oltc config validation") {
  CHECK(check_oltc_config({}).empty());
  OltcConfig bad;
  bad.min_tap = 5;
  bad.max_tap = 5;
  CHECK_FALSE(check_oltc_config(bad).empty());
  OltcConfig bad_v;
  bad_v.v_at_min = 1.2;
  CHECK_FALSE(check_oltc_config(bad_v).empty());
  OltcConfig offset;
  offset.min_tap = -8;
  offset.max_tap = 24;
  CHECK_FALSE(check_oltc_config(offset).empty());
}
