#include "cvrsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cvrsim {

double total_energy(const TimeSeriesResult& result) {
  double e = 0.0;
  for (const HourRecord& h : result.hours) e += h.load_p;  // one-hour steps
  return e;
}

double loss_energy(const TimeSeriesResult& result) {
  double e = 0.0;
  for (const HourRecord& h : result.hours) e += h.losses_p;
  return e;
}

double mean_substation_voltage(const TimeSeriesResult& result, Phase phase) {
  if (result.hours.empty()) return 0.0;
  double sum = 0.0;
  for (const HourRecord& h : result.hours) sum += h.substation_voltage[index(phase)];
  return sum / static_cast<double>(result.hours.size());
}

double mean_substation_voltage(const TimeSeriesResult& result) {
  if (result.hours.empty()) return 0.0;
  double sum = 0.0;
  for (const HourRecord& h : result.hours)
    sum += (h.substation_voltage[0] + h.substation_voltage[1] + h.substation_voltage[2]) / 3.0;
  return sum / static_cast<double>(result.hours.size());
}

namespace {

double mean_load_weighted_voltage(const TimeSeriesResult& result) {
  const FeederNetwork network = scenario_base_feeder(result.config);
  double sum = 0.0;
  for (const HourRecord& h : result.hours) {
    double weighted = 0.0, weight = 0.0;
    for (const ZipLoad& load : network.loads) {
      const int bus = network.find_bus(load.bus);
      weighted += load.p0 * h.bus_voltages.at(bus)[index(load.phase)];
      weight += load.p0;
    }
    sum += weight > 0.0 ? weighted / weight : 0.0;
  }
  return result.hours.empty() ? 0.0 : sum / static_cast<double>(result.hours.size());
}

}  // namespace

double cvr_factor(const TimeSeriesResult& base, const TimeSeriesResult& cvr, VoltageReference reference) {
  if (base.hours.size() != cvr.hours.size() || base.hours.empty())
    throw Error("CVR factor needs two results of equal, non-zero length");
  if (!same_scenario_except_cvr(base.config, cvr.config))
    throw Error("CVR factor needs the same scenario with and without CVR ('" + base.config.name + "' vs '" +
                cvr.config.name + "')");
  const double e_base = total_energy(base);
  const double e_cvr = total_energy(cvr);
  const double v_base = reference == VoltageReference::Substation ? mean_substation_voltage(base)
                                                                   : mean_load_weighted_voltage(base);
  const double v_cvr = reference == VoltageReference::Substation ? mean_substation_voltage(cvr)
                                                                  : mean_load_weighted_voltage(cvr);
  const double dv_pct = (v_base - v_cvr) / v_base * 100.0;
  if (dv_pct == 0.0) throw UndefinedCvrFactor("CVR factor undefined: no voltage reduction");
  if (!(e_base > 0.0)) throw UndefinedCvrFactor("CVR factor undefined: base energy is zero");
  const double de_pct = (e_base - e_cvr) / e_base * 100.0;
  return de_pct / dv_pct;
}

VoltageDistribution voltage_distribution(const TimeSeriesResult& result, int hour) {
  if (hour < 0 || hour >= static_cast<int>(result.hours.size()))
    throw Error("hour " + std::to_string(hour) + " outside the simulated day");
  const HourRecord& h = result.hours[hour];
  VoltageDistribution d;
  for (std::size_t b = 0; b < result.bus_ids.size(); ++b) {
    for (Phase p : kAllPhases) {
      if (!result.bus_phases[b].contains(p)) continue;
      d.bus.push_back(result.bus_ids[b]);
      d.phase.push_back(p);
      d.voltage.push_back(h.bus_voltages[b][index(p)]);
    }
  }
  if (d.voltage.empty()) return d;
  const auto [lo, hi] = std::minmax_element(d.voltage.begin(), d.voltage.end());
  d.min = *lo;
  d.max = *hi;
  double sum = 0.0;
  for (double v : d.voltage) sum += v;
  d.mean = sum / static_cast<double>(d.voltage.size());
  d.spread = d.max - d.min;
  return d;
}

SummaryMetrics summarize(const TimeSeriesResult& result, const TimeSeriesResult* base) {
  SummaryMetrics s;
  s.total_customer_energy = total_energy(result);
  s.total_line_loss_energy = loss_energy(result);
  for (Phase p : kAllPhases) s.mean_substation_voltage_by_phase[index(p)] = mean_substation_voltage(result, p);
  s.mean_substation_voltage = mean_substation_voltage(result);
  s.min_network_voltage = std::numeric_limits<double>::infinity();
  s.max_network_voltage = 0.0;
  for (const HourRecord& h : result.hours) {
    s.min_network_voltage = std::min(s.min_network_voltage, h.min_voltage);
    s.max_network_voltage = std::max(s.max_network_voltage, h.max_voltage);
    if (!h.feasible) s.infeasible_hours.push_back(h.hour);
  }
  if (result.hours.empty()) s.min_network_voltage = 0.0;
  if (base != nullptr && result.config.cvr_enabled && !base->config.cvr_enabled) {
    try {
      s.cvr_factor = cvr_factor(*base, result);
    } catch (const Error&) {
      s.cvr_factor.reset();
    }
  }
  return s;
}

}  // namespace cvrsim
