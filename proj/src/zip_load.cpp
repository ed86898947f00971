#include "cvrsim/zip_load.hpp"

#include <cmath>

#include "cvrsim/error.hpp"

namespace cvrsim {

namespace {

double polynomial(const ZipCoefficients& c, double ratio) {
  return c.z * ratio * ratio + c.i * ratio + c.p;
}

void require_positive_voltage(double v) {
  if (!(v > 0.0)) throw Error("ZIP load evaluated at non-positive voltage " + std::to_string(v));
}

}  // namespace

std::string check_zip_load(const ZipLoad& load) {
  if (std::abs(load.p_coef.z + load.p_coef.i + load.p_coef.p - 1.0) > kZipSumTolerance)
    return "active-power ZIP coefficients must sum to 1";
  if (std::abs(load.q_coef.z + load.q_coef.i + load.q_coef.p - 1.0) > kZipSumTolerance)
    return "reactive-power ZIP coefficients must sum to 1";
  if (!(load.p0 >= 0.0)) return "p0 must be non-negative";
  if (!(load.v0 > 0.0)) return "v0 must be positive";
  if (!std::isfinite(load.q0)) return "q0 must be finite";
  return {};
}

LoadPower evaluate(const ZipLoad& load, double v) {
  require_positive_voltage(v);
  if (v == load.v0) return {load.p0, load.q0};
  const double ratio = v / load.v0;
  return {load.p0 * polynomial(load.p_coef, ratio), load.q0 * polynomial(load.q_coef, ratio)};
}

double sensitivity(const ZipLoad& load, double v) {
  require_positive_voltage(v);
  return load.p0 * (2.0 * load.p_coef.z * v / (load.v0 * load.v0) + load.p_coef.i / load.v0);
}

}  // namespace cvrsim
