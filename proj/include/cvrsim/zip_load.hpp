#pragma once

#include <string>

#include "cvrsim/phase.hpp"

namespace cvrsim {

struct ZipCoefficients {
  double z = 0.5;
  double i = 0.3;
  double p = 0.2;

  friend bool operator==(const ZipCoefficients&, const ZipCoefficients&) = default;
};

// Wye-connected, single-phase, voltage-dependent customer load.
struct ZipLoad {
  std::string bus;
  Phase phase = Phase::A;
  double p0 = 0.0;  // kW at rated voltage
  double q0 = 0.0;  // kvar at rated voltage
  ZipCoefficients p_coef;
  ZipCoefficients q_coef;
  double v0 = 1.0;  // rated voltage, p.u.

  friend bool operator==(const ZipLoad&, const ZipLoad&) = default;
};

struct LoadPower {
  double p = 0.0;  // kW
  double q = 0.0;  // kvar
};

inline constexpr double kZipSumTolerance = 1e-12;

// Empty string when the load is well-formed, otherwise the first violated invariant.
std::string check_zip_load(const ZipLoad& load);

// P = p0 [zp (v/v0)^2 + ip (v/v0) + pp], Q analogous. Throws Error for v <= 0.
LoadPower evaluate(const ZipLoad& load, double v);

// dP/dV in kW per p.u.
double sensitivity(const ZipLoad& load, double v);

}  // namespace cvrsim
