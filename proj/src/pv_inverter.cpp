#include "cvrsim/pv_inverter.hpp"

#include <algorithm>
#include <cmath>

#include "cvrsim/error.hpp"

namespace cvrsim {

InverterLimits InverterLimits::for_rating(double kva) {
  InverterLimits limits;
  limits.kva = kva;
  limits.kvar_max = 0.44 * kva;
  limits.kvar_max_abs = 0.44 * kva;
  return limits;
}

std::string check_volt_var_curve(const VoltVarCurve& curve) {
  const auto& pt = curve.points;
  if (!(pt[0].v < pt[1].v && pt[1].v <= pt[2].v && pt[2].v < pt[3].v))
    return "volt-var voltages must satisfy V1 < V2 <= V3 < V4";
  if (!(pt[0].q >= pt[1].q && pt[1].q >= pt[2].q && pt[2].q >= pt[3].q))
    return "volt-var reactive points must be non-increasing";
  return {};
}

std::string check_inverter_limits(const InverterLimits& limits) {
  if (!(limits.kva > 0.0)) return "inverter kva must be positive";
  if (limits.kvar_max < 0.0 || limits.kvar_max_abs < 0.0) return "kvar limits must be non-negative";
  if (!(limits.cut_out_pct >= 0.0 && limits.cut_out_pct <= limits.cut_in_pct))
    return "cut-out must lie in [0, cut-in]";
  if (!(limits.pmin_no_vars_pct <= limits.pmin_kvar_max_pct))
    return "PminNoVars must not exceed PminkvarMax";
  return {};
}

std::string check_pv_unit(const PvUnit& unit) {
  if (unit.phases.empty()) return "PV unit has no phases";
  if (!(unit.peak_kw >= 0.0)) return "PV peak_kw must be non-negative";
  if (auto msg = check_inverter_limits(unit.limits); !msg.empty()) return msg;
  if (unit.peak_kw > unit.limits.kva) return "PV peak_kw exceeds inverter kva";
  if (const auto* vv = std::get_if<VoltVar>(&unit.mode)) return check_volt_var_curve(vv->curve);
  if (std::get<ConstantPowerFactor>(unit.mode).pf != 1.0) return "only unity power factor is supported";
  return {};
}

double available_active_power(PvUnit& unit, double irradiance_multiplier) {
  const double raw = unit.peak_kw * irradiance_multiplier;
  const double pct = 100.0 * raw / unit.limits.kva;
  if (unit.online) {
    if (pct < unit.limits.cut_out_pct) unit.online = false;
  } else if (pct >= unit.limits.cut_in_pct && raw > 0.0) {
    unit.online = true;
  }
  return unit.online ? raw : 0.0;
}

namespace {

// Envelope magnitude for one side of the capability curve.
double envelope(const InverterLimits& limits, double p, double side_max) {
  const double p_pct = 100.0 * p / limits.kva;
  double bound;
  if (p_pct < limits.pmin_no_vars_pct) {
    return 0.0;
  } else if (p_pct < limits.pmin_kvar_max_pct) {
    const double span = limits.pmin_kvar_max_pct - limits.pmin_no_vars_pct;
    bound = side_max * (p_pct - limits.pmin_no_vars_pct) / span;
  } else {
    bound = side_max;
  }
  const double circle = std::sqrt(std::max(0.0, limits.kva * limits.kva - p * p));
  return std::min(bound, circle);
}

}  // namespace

ReactiveRange reactive_capability(const InverterLimits& limits, double p) {
  if (!(p >= 0.0 && p <= limits.kva))
    throw Error("active power " + std::to_string(p) + " kW outside inverter range [0, kva]");
  return {-envelope(limits, p, limits.kvar_max_abs), envelope(limits, p, limits.kvar_max)};
}

double volt_var_q(const VoltVarCurve& curve, double v) {
  const auto& pt = curve.points;
  if (v <= pt[0].v) return pt[0].q;
  if (v >= pt[3].v) return pt[3].q;
  for (std::size_t k = 0; k + 1 < pt.size(); ++k) {
    if (v <= pt[k + 1].v) {
      const double dv = pt[k + 1].v - pt[k].v;
      if (dv == 0.0) return pt[k + 1].q;
      const double t = (v - pt[k].v) / dv;
      return pt[k].q + t * (pt[k + 1].q - pt[k].q);
    }
  }
  return pt[3].q;
}

double reactive_command(const PvUnit& unit, double v, double p_total) {
  const auto* vv = std::get_if<VoltVar>(&unit.mode);
  if (vv == nullptr) return 0.0;
  const double target = volt_var_q(vv->curve, v) * unit.limits.kva;
  const ReactiveRange range = reactive_capability(unit.limits, p_total);
  return std::clamp(target, range.q_min, range.q_max);
}

InverterOutput inverter_output(PvUnit& unit, double v, double irradiance_multiplier) {
  if (!(v > 0.0)) throw Error("inverter evaluated at non-positive voltage");
  const double p = available_active_power(unit, irradiance_multiplier);
  const double q = reactive_command(unit, v, p);
  const double n = unit.phases.size();
  return {p / n, q / n};
}

}  // namespace cvrsim
