#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cvrsim/error.hpp"
#include "cvrsim/scenario.hpp"

namespace cvrsim {

// Raised when the voltage reduction between the two runs is zero.
class UndefinedCvrFactor : public Error {
 public:
  using Error::Error;
};

// Customer energy over the day (kWh); PV output is not counted.
double total_energy(const TimeSeriesResult& result);

double loss_energy(const TimeSeriesResult& result);

// Day mean of the phase-averaged substation voltage.
double mean_substation_voltage(const TimeSeriesResult& result);

// Day mean of the substation voltage on one phase.
double mean_substation_voltage(const TimeSeriesResult& result, Phase phase);

enum class VoltageReference { Substation, LoadWeighted };

// (dE% / dV%) between a CVR-off base and a CVR-on run of the same scenario.
// Throws Error for mismatched configurations, UndefinedCvrFactor when dV = 0.
double cvr_factor(const TimeSeriesResult& base, const TimeSeriesResult& cvr,
                  VoltageReference reference = VoltageReference::Substation);

struct VoltageDistribution {
  std::vector<std::string> bus;
  std::vector<Phase> phase;
  std::vector<double> voltage;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double spread = 0.0;
};

VoltageDistribution voltage_distribution(const TimeSeriesResult& result, int hour);

struct SummaryMetrics {
  double total_customer_energy = 0.0;   // kWh
  double total_line_loss_energy = 0.0;  // kWh
  PhaseReal mean_substation_voltage_by_phase{};
  double mean_substation_voltage = 0.0;
  double min_network_voltage = 0.0;
  double max_network_voltage = 0.0;
  std::optional<double> cvr_factor;
  std::vector<int> infeasible_hours;
};

// cvr_factor is filled when `base` is the CVR-off counterpart and defined.
SummaryMetrics summarize(const TimeSeriesResult& result, const TimeSeriesResult* base = nullptr);

}  // namespace cvrsim
