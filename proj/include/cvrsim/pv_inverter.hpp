#pragma once

#include <array>
#include <string>
#include <variant>

#include "cvrsim/phase.hpp"

namespace cvrsim {

// Piecewise-linear volt-var characteristic. q is a fraction of nameplate kVA,
// positive when the inverter injects reactive power.
struct VoltVarCurve {
  struct Point {
    double v;
    double q;
    friend bool operator==(const Point&, const Point&) = default;
  };
  std::array<Point, 4> points{{{0.92, 0.44}, {0.98, 0.0}, {1.02, 0.0}, {1.08, -0.44}}};
  double v_ref = 1.0;
  double v_l = 0.9;
  double v_h = 1.1;

  friend bool operator==(const VoltVarCurve&, const VoltVarCurve&) = default;
};

struct InverterLimits {
  double kva = 0.0;
  double kvar_max = 0.0;      // injection limit
  double kvar_max_abs = 0.0;  // absorption limit (magnitude)
  double cut_in_pct = 5.0;
  double cut_out_pct = 5.0;
  double pmin_no_vars_pct = 5.0;
  double pmin_kvar_max_pct = 20.0;

  // Category B defaults: both reactive limits at 0.44 kVA.
  static InverterLimits for_rating(double kva);

  friend bool operator==(const InverterLimits&, const InverterLimits&) = default;
};

struct ConstantPowerFactor {
  double pf = 1.0;
  friend bool operator==(const ConstantPowerFactor&, const ConstantPowerFactor&) = default;
};

struct VoltVar {
  VoltVarCurve curve;
  friend bool operator==(const VoltVar&, const VoltVar&) = default;
};

using InverterMode = std::variant<ConstantPowerFactor, VoltVar>;

struct PvUnit {
  std::string id;
  std::string bus;
  PhaseSet phases = PhaseSet::all();
  double peak_kw = 0.0;
  InverterLimits limits;
  InverterMode mode = ConstantPowerFactor{};
  bool online = false;

  bool is_volt_var() const noexcept { return std::holds_alternative<VoltVar>(mode); }

  friend bool operator==(const PvUnit&, const PvUnit&) = default;
};

struct ReactiveRange {
  double q_min = 0.0;  // kvar, <= 0
  double q_max = 0.0;  // kvar, >= 0
};

struct InverterOutput {
  double p = 0.0;  // kW per phase
  double q = 0.0;  // kvar per phase
};

std::string check_volt_var_curve(const VoltVarCurve& curve);
std::string check_inverter_limits(const InverterLimits& limits);
std::string check_pv_unit(const PvUnit& unit);

// Applies cut-in/cut-out hysteresis and updates unit.online. Returns kW.
double available_active_power(PvUnit& unit, double irradiance_multiplier);

// Reactive envelope at active output p (kW). Throws Error when p is outside [0, kva].
ReactiveRange reactive_capability(const InverterLimits& limits, double p);

// Commanded reactive power in p.u. of kVA.
double volt_var_q(const VoltVarCurve& curve, double v);

// Total unit reactive command (kvar) at voltage v and active output p_total (kW),
// before dividing over phases. Zero for constant-PF units.
double reactive_command(const PvUnit& unit, double v, double p_total);

// Per-phase output at voltage v; updates the unit's online state.
InverterOutput inverter_output(PvUnit& unit, double v, double irradiance_multiplier);

}  // namespace cvrsim
