#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cvrsim/network.hpp"
#include "cvrsim/oltc_cvr.hpp"
#include "cvrsim/power_flow.hpp"

namespace cvrsim {

enum class AllocationKind { Head, Dispersed, End };
enum class ControlMode { PowerFactor, VoltVar };

inline constexpr std::array<AllocationKind, 3> kAllAllocations{AllocationKind::Head, AllocationKind::Dispersed,
                                                               AllocationKind::End};
inline constexpr std::array<ControlMode, 2> kAllModes{ControlMode::PowerFactor, ControlMode::VoltVar};

std::string to_string(AllocationKind kind);
std::string to_string(ControlMode mode);
std::optional<AllocationKind> parse_allocation(std::string_view text);
std::optional<ControlMode> parse_control_mode(std::string_view text);

inline constexpr int kHoursPerDay = 24;
using HourlyProfile = std::array<double, kHoursPerDay>;

// Residential double-hump shape, 1.0 at hour 18.
HourlyProfile default_load_profile();
// Clear-sky bell, sunrise at hour 6, 1.0 at hour 13, sunset at hour 19.
HourlyProfile default_pv_profile();

// First hour holding the maximum load multiplier.
int system_peak_hour(const HourlyProfile& load_profile);

// Conductor matrix (ohms per mile) used by the synthetic feeder.
ImpedanceMatrix default_line_impedance();

struct SynthesisParams {
  std::array<int, 3> buses_per_feeder{96, 84, 59};
  std::array<double, 3> load_shares{0.40, 0.35, 0.25};
  double total_length_miles = 23.0;
  double total_load_kw = 16000.0;  // rated load, all customers
  double load_power_factor = 0.95;
  double mainline_fraction = 0.4;
  int max_lateral_buses = 6;
  // Lightly loaded remote extension per feeder, branching off the mainline.
  int tail_buses = 4;
  double tail_attach_fraction = 0.25;  // position along the mainline
  double tail_length_weight = 10.0;    // segment length relative to other segments
  double tail_load_weight = 0.25;      // customer size relative to other customers
  ImpedanceMatrix impedance_per_mile = default_line_impedance();
  double system_mva_base = 10.0;
  double primary_kv = 69.0;
  double secondary_kv = 13.8;
  double transformer_kva = 20000.0;
  std::uint64_t seed = 1;

  friend bool operator==(const SynthesisParams&, const SynthesisParams&) = default;
};

// Three radial feeders behind one substation. Each feeder is a mainline with
// laterals plus a long, lightly loaded tail; one single-phase customer per
// primary bus with phases assigned round-robin.
FeederNetwork synthesize_feeder(const SynthesisParams& params);

// Adds PV units to a copy of the network; penetration is relative to the
// system peak load at the peak hour of load_profile.
FeederNetwork allocate_pv(const FeederNetwork& network, AllocationKind allocation, double penetration_pct,
                          ControlMode mode, const HourlyProfile& load_profile, int units_per_feeder = 1);

struct ScenarioConfig {
  std::string name = "scenario";
  // Explicit feeder; when null the feeder is synthesized from `synthesis`.
  std::shared_ptr<const FeederNetwork> feeder;
  // Where the explicit feeder came from (file path); identifies it when the
  // network itself is not loaded.
  std::string feeder_label;
  SynthesisParams synthesis;
  AllocationKind allocation = AllocationKind::Dispersed;
  double penetration_pct = 60.0;
  ControlMode mode = ControlMode::VoltVar;
  bool cvr_enabled = true;
  HourlyProfile load_profile = default_load_profile();
  HourlyProfile pv_profile = default_pv_profile();
  int units_per_feeder = 1;
  int snapshot_hour = 13;
  std::uint64_t seed = 1;  // overrides synthesis.seed when the feeder is synthesized
  OltcConfig oltc;
  CvrConstraints constraints;
  SolveOptions solve;
};

std::string check_scenario_config(const ScenarioConfig& config);

// True when every field matches except cvr_enabled and name.
bool same_scenario_except_cvr(const ScenarioConfig& a, const ScenarioConfig& b);

// Builds the feeder the scenario runs on (synthesized or explicit) before PV.
FeederNetwork scenario_base_feeder(const ScenarioConfig& config);

struct HourRecord {
  int hour = 0;
  double load_multiplier = 0.0;
  double irradiance = 0.0;
  PhaseTaps taps{0, 0, 0};
  bool feasible = false;
  PhaseReal substation_voltage{};
  std::vector<PhaseReal> bus_voltages;  // magnitude per bus-phase, 0 on absent phases
  double load_p = 0.0;                  // kW
  double load_q = 0.0;                  // kvar
  double pv_p = 0.0;
  double pv_q = 0.0;
  double losses_p = 0.0;
  PhaseComplex source{};  // kVA per phase
  double min_voltage = 0.0;
  double max_voltage = 0.0;
  int failed_probes = 0;
};

struct TimeSeriesResult {
  ScenarioConfig config;
  std::vector<std::string> bus_ids;
  std::vector<PhaseSet> bus_phases;
  std::vector<HourRecord> hours;
};

// Runs the 24 hours in order; PV cut-in state carries across hours. Throws
// Error naming the hour if a solve fails; infeasible hours are recorded.
TimeSeriesResult run_scenario(const ScenarioConfig& config);

struct MatrixEntry {
  std::optional<TimeSeriesResult> result;
  std::string error;

  bool ok() const noexcept { return result.has_value(); }
};

// Output order matches input order; failures are isolated per scenario.
std::vector<MatrixEntry> run_matrix(const std::vector<ScenarioConfig>& configs, int parallel = 1);

// Allocation x mode x {CVR on, off} for each penetration level.
std::vector<ScenarioConfig> scenario_grid(const ScenarioConfig& base, const std::vector<double>& penetrations = {60.0});

}  // namespace cvrsim
