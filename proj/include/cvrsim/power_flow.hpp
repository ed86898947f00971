#pragma once

#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cvrsim/network.hpp"
#include "cvrsim/tap_changer.hpp"

namespace cvrsim {

struct SolveOptions {
  double tolerance = 1e-6;  // p.u. voltage mismatch between sweeps
  int max_sweeps = 100;
  int max_control_iterations = 50;
  double control_damping = 0.5;

  friend bool operator==(const SolveOptions&, const SolveOptions&) = default;
};

std::string check_solve_options(const SolveOptions& options);

// Per-bus, per-phase complex power injected into the network (kW + j kvar).
using Injections = std::vector<PhaseComplex>;

// Quantities that vary hour to hour. pv_active_kw holds each PV unit's total
// active output (all phases) after cut-in/cut-out resolution.
struct TimeInputs {
  double load_multiplier = 1.0;
  std::vector<double> pv_active_kw;
};

// Resolves PV availability for one hour, advancing each unit's online state.
TimeInputs resolve_time_inputs(std::vector<PvUnit>& units, double load_multiplier, double irradiance);

enum class SolveStatus { Converged, SweepLimit, ControlLimit };

std::string to_string(SolveStatus status);

struct PowerFlowSolution {
  std::vector<PhaseComplex> voltages;         // p.u., zero on absent phases
  std::vector<PhaseComplex> branch_currents;  // p.u., per line
  std::vector<PhaseComplex> bus_load;         // kVA consumed per bus-phase
  std::vector<PhaseComplex> bus_generation;   // kVA injected per bus-phase
  std::vector<double> pv_q;                   // kvar per PV unit (all phases)
  PhaseComplex source_injection{};            // kVA per phase
  PhaseReal losses_by_phase{};                // kW
  PhaseTaps taps{0, 0, 0};
  double total_load_p = 0.0;
  double total_load_q = 0.0;
  double total_pv_p = 0.0;
  double total_pv_q = 0.0;
  double losses_p = 0.0;
  double losses_q = 0.0;
  double kva_base_per_phase = 0.0;
  int iterations = 0;
  int control_iterations = 0;
  bool converged = false;
  SolveStatus status = SolveStatus::SweepLimit;

  double voltage_magnitude(std::size_t bus, Phase p) const { return std::abs(voltages[bus][index(p)]); }
};

// Immutable, solver-ready view of a validated network: per-unit line
// impedances, radial ordering and load/PV attachment indices.
class PowerFlowModel {
 public:
  explicit PowerFlowModel(FeederNetwork network, OltcConfig oltc = {});

  const FeederNetwork& network() const noexcept { return *network_; }
  const OltcConfig& oltc() const noexcept { return oltc_; }
  const RadialTree& tree() const noexcept { return tree_; }
  double kva_base_per_phase() const noexcept { return kva_base_per_phase_; }
  std::size_t bus_count() const noexcept { return network_->buses.size(); }
  PhaseSet bus_phases(std::size_t bus) const { return network_->buses[bus].phases; }
  int load_bus(std::size_t load) const { return load_bus_[load]; }
  int pv_bus(std::size_t unit) const { return pv_bus_[unit]; }
  // Line impedance in p.u. (whole segment).
  const ImpedanceMatrix& line_impedance_pu(std::size_t line) const { return z_pu_[line]; }

  // Source-bus phasors for the given taps (phase A at 0 degrees).
  PhaseComplex source_voltages(const PhaseTaps& taps) const;

  // Converts PV outputs into nodal injections.
  Injections pv_injections(const std::vector<double>& p_kw, const std::vector<double>& q_kvar) const;

 private:
  std::shared_ptr<const FeederNetwork> network_;
  OltcConfig oltc_;
  RadialTree tree_;
  double kva_base_per_phase_ = 0.0;
  std::vector<ImpedanceMatrix> z_pu_;
  std::vector<int> load_bus_;
  std::vector<int> pv_bus_;
};

// Backward/forward sweep with ZIP loads re-evaluated every sweep. Returns the
// last iterate with converged = false when max_sweeps is exhausted.
PowerFlowSolution solve_snapshot(const PowerFlowModel& model, const PhaseTaps& taps,
                                 const Injections& fixed_injections, const SolveOptions& options,
                                 double load_multiplier = 1.0,
                                 const std::vector<PhaseComplex>* initial_voltages = nullptr);

PowerFlowSolution solve_snapshot(const FeederNetwork& network, const PhaseTaps& taps,
                                 const Injections& fixed_injections, const SolveOptions& options,
                                 double load_multiplier = 1.0);

// Outer volt-var loop around solve_snapshot with damped reactive updates.
// Constant-PF fleets take exactly one pass.
PowerFlowSolution solve_with_inverter_control(const PowerFlowModel& model, const PhaseTaps& taps,
                                              const TimeInputs& inputs, const SolveOptions& options,
                                              const std::vector<PhaseComplex>* initial_voltages = nullptr);

struct OracleOptions {
  double tolerance = 1e-13;
  int max_iterations = 2000;
  double damping = 1.0;
  int max_bus_phases = 50;
};

// Independent solution path: dense nodal admittance system solved by
// fixed-point current-injection iteration with direct LU solves.
PowerFlowSolution oracle_solve(const PowerFlowModel& model, const PhaseTaps& taps,
                               const Injections& fixed_injections, double load_multiplier = 1.0,
                               const OracleOptions& options = {});

struct LossBreakdown {
  double losses_p = 0.0;              // kW
  std::vector<double> per_line;       // kW, by line index
};

// I^H Z I per line. Throws Error for an unconverged solution.
LossBreakdown compute_losses(const PowerFlowSolution& solution, const PowerFlowModel& model);

// source + PV - load - losses, in p.u. of the per-phase base: three phases then total.
std::array<double, 4> power_balance_residual_pu(const PowerFlowSolution& solution);

}  // namespace cvrsim
