#include "cvrsim/oltc_cvr.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "cvrsim/error.hpp"

namespace cvrsim {

std::string check_cvr_constraints(const CvrConstraints& constraints) {
  if (!(constraints.v_min < constraints.v_max)) return "CVR band needs v_min < v_max";
  if (!(constraints.slack >= 0.0)) return "CVR band slack must be non-negative";
  return {};
}

double constraint_violation(const PowerFlowSolution& solution, const CvrConstraints& constraints) {
  if (!solution.converged) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (const PhaseComplex& bus : solution.voltages) {
    for (const auto& v : bus) {
      if (v == std::complex<double>{}) continue;
      const double mag = std::abs(v);
      const double below = constraints.v_min - constraints.slack - mag;
      const double above = mag - constraints.v_max - constraints.slack;
      worst = std::max({worst, below, above});
    }
  }
  return worst;
}

namespace {

class TapSearch {
 public:
  TapSearch(const PowerFlowModel& model, const TimeInputs& inputs, const CvrConstraints& constraints,
            const SolveOptions& options)
      : model_(model), inputs_(inputs), constraints_(constraints), options_(options) {}

  struct Probe {
    PowerFlowSolution solution;
    double violation;
  };

  const Probe& probe(const PhaseTaps& taps) {
    auto it = cache_.find(taps);
    if (it != cache_.end()) return it->second;
    // Every probe starts flat so its outcome does not depend on probe order.
    PowerFlowSolution sol = solve_with_inverter_control(model_, taps, inputs_, options_);
    const double violation = constraint_violation(sol, constraints_);
    if (!sol.converged) failed_.push_back(taps);
    return cache_.emplace(taps, Probe{std::move(sol), violation}).first->second;
  }

  bool feasible(const PhaseTaps& taps) { return probe(taps).violation == 0.0; }

  TapSelection finish(const PhaseTaps& taps, bool feasible) {
    TapSelection out;
    out.taps = taps;
    out.solution = probe(taps).solution;
    out.feasible = feasible;
    out.failed_probes = failed_;
    out.probes = static_cast<int>(cache_.size());
    return out;
  }

 private:
  const PowerFlowModel& model_;
  const TimeInputs& inputs_;
  const CvrConstraints& constraints_;
  const SolveOptions& options_;
  std::map<PhaseTaps, Probe> cache_;
  std::vector<PhaseTaps> failed_;
};

constexpr int kMaxPasses = 10;

}  // namespace

TapSelection select_minimal_taps(const PowerFlowModel& model, const TimeInputs& inputs,
                                 const CvrConstraints& constraints, const SolveOptions& options) {
  if (auto msg = check_cvr_constraints(constraints); !msg.empty()) throw Error(msg);
  const OltcConfig& oltc = model.oltc();
  TapSearch search(model, inputs, constraints, options);

  // Starting point: lowest uniform vector in the first feasible run found
  // scanning down from the top, so the per-phase descent begins balanced.
  std::optional<PhaseTaps> start;
  PhaseTaps best{oltc.max_tap, oltc.max_tap, oltc.max_tap};
  double best_violation = std::numeric_limits<double>::infinity();
  for (int t = oltc.max_tap; t >= oltc.min_tap; --t) {
    const PhaseTaps taps{t, t, t};
    const double violation = search.probe(taps).violation;
    if (violation == 0.0) {
      start = taps;
    } else if (start) {
      break;
    } else if (violation < best_violation) {
      best_violation = violation;
      best = taps;
    }
  }

  // No uniform vector works: per-phase coordinate search on the worst
  // violation, preferring higher taps on ties.
  for (int pass = 0; !start && pass < kMaxPasses; ++pass) {
    bool changed = false;
    for (std::size_t ph = 0; ph < 3 && !start; ++ph) {
      for (int t = oltc.max_tap; t >= oltc.min_tap; --t) {
        PhaseTaps candidate = best;
        candidate[ph] = t;
        const double violation = search.probe(candidate).violation;
        if (violation < best_violation) {
          best_violation = violation;
          best = candidate;
          changed = true;
        }
      }
      if (best_violation == 0.0) start = best;
    }
    if (!changed) break;
  }
  if (!start) return search.finish(best, false);

  PhaseTaps taps = *start;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool changed = false;
    for (std::size_t ph = 0; ph < 3; ++ph) {
      while (taps[ph] > oltc.min_tap) {
        PhaseTaps lower = taps;
        --lower[ph];
        if (!search.feasible(lower)) break;
        taps = lower;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return search.finish(taps, true);
}

TimestepResult run_timestep(const PowerFlowModel& model, const TimeInputs& inputs, bool cvr_enabled,
                            const CvrConstraints& constraints, const SolveOptions& options) {
  if (cvr_enabled) return select_minimal_taps(model, inputs, constraints, options);
  TimestepResult out;
  out.taps = {0, 0, 0};
  out.solution = solve_with_inverter_control(model, out.taps, inputs, options);
  out.feasible = is_feasible(out.solution, constraints);
  out.probes = 1;
  if (!out.solution.converged) out.failed_probes.push_back(out.taps);
  return out;
}

}  // namespace cvrsim
