#pragma once

#include <limits>
#include <string>
#include <vector>

#include "cvrsim/power_flow.hpp"
#include "cvrsim/tap_changer.hpp"

namespace cvrsim {

// Voltage band enforced at every bus-phase while reducing the OLTC setting.
struct CvrConstraints {
  double v_min = 0.95;
  double v_max = 1.05;
  double slack = 1e-9;  // absorbs rounding at exact band edges

  friend bool operator==(const CvrConstraints&, const CvrConstraints&) = default;
};

std::string check_cvr_constraints(const CvrConstraints& constraints);

// Worst band excursion over all bus-phases (0 when inside the band); +inf
// for an unconverged solution.
double constraint_violation(const PowerFlowSolution& solution, const CvrConstraints& constraints);

inline bool is_feasible(const PowerFlowSolution& solution, const CvrConstraints& constraints) {
  return constraint_violation(solution, constraints) == 0.0;
}

struct TapSelection {
  PhaseTaps taps{0, 0, 0};
  PowerFlowSolution solution;
  bool feasible = false;
  std::vector<PhaseTaps> failed_probes;  // tap vectors whose solve did not converge
  int probes = 0;
};

// Lowest per-phase taps (elementwise minimal under coordinate descent in
// phase order A, B, C) that keep every bus-phase inside the band. When no
// feasible vector is found, returns the violation-minimizing one with
// feasible = false.
TapSelection select_minimal_taps(const PowerFlowModel& model, const TimeInputs& inputs,
                                 const CvrConstraints& constraints, const SolveOptions& options);

using TimestepResult = TapSelection;

// CVR off: neutral taps, one controlled solve. CVR on: select_minimal_taps.
TimestepResult run_timestep(const PowerFlowModel& model, const TimeInputs& inputs, bool cvr_enabled,
                            const CvrConstraints& constraints, const SolveOptions& options);

}  // namespace cvrsim
