#include "cvrsim/power_flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "cvrsim/error.hpp"

namespace cvrsim {

using cd = std::complex<double>;

std::string check_solve_options(const SolveOptions& options) {
  if (!(options.tolerance > 0.0)) return "solver tolerance must be positive";
  if (options.max_sweeps < 1) return "max_sweeps must be at least 1";
  if (options.max_control_iterations < 1) return "max_control_iterations must be at least 1";
  if (!(options.control_damping > 0.0 && options.control_damping <= 1.0))
    return "control_damping must lie in (0, 1]";
  return {};
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::SweepLimit: return "sweep-limit";
    case SolveStatus::ControlLimit: return "control-limit";
  }
  return "unknown";
}

TimeInputs resolve_time_inputs(std::vector<PvUnit>& units, double load_multiplier, double irradiance) {
  TimeInputs inputs;
  inputs.load_multiplier = load_multiplier;
  inputs.pv_active_kw.reserve(units.size());
  for (PvUnit& unit : units) inputs.pv_active_kw.push_back(available_active_power(unit, irradiance));
  return inputs;
}

PowerFlowModel::PowerFlowModel(FeederNetwork network, OltcConfig oltc)
    : network_(std::make_shared<const FeederNetwork>(std::move(network))), oltc_(oltc) {
  if (auto msg = check_oltc_config(oltc_); !msg.empty()) throw Error(msg);
  tree_ = build_radial_tree(*network_);
  const FeederNetwork& net = *network_;
  kva_base_per_phase_ = net.system_mva_base * 1000.0 / 3.0;
  z_pu_.resize(net.lines.size());
  for (std::size_t k = 0; k < net.lines.size(); ++k) {
    const double v_base = net.buses[tree_.line_to[k]].base_voltage;
    const double z_base = v_base * v_base / (kva_base_per_phase_ * 1000.0);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        z_pu_[k][r][c] = net.lines[k].impedance[r][c] * net.lines[k].length / z_base;
  }
  for (const ZipLoad& load : net.loads) load_bus_.push_back(net.find_bus(load.bus));
  for (const PvUnit& pv : net.pv_units) pv_bus_.push_back(net.find_bus(pv.bus));
}

PhaseComplex PowerFlowModel::source_voltages(const PhaseTaps& taps) const {
  const PhaseReal ratio = taps_to_ratios(oltc_, taps);
  // Unit phasors at -120 and +120 degrees with |a| == 1 exactly.
  const double s = std::sqrt(3.0) / 2.0;
  return {cd{ratio[0], 0.0}, ratio[1] * cd{-0.5, -s}, ratio[2] * cd{-0.5, s}};
}

Injections PowerFlowModel::pv_injections(const std::vector<double>& p_kw, const std::vector<double>& q_kvar) const {
  Injections inj(bus_count(), PhaseComplex{});
  const auto& units = network_->pv_units;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const double n = units[u].phases.size();
    const cd share{p_kw[u] / n, q_kvar[u] / n};
    for (Phase p : kAllPhases)
      if (units[u].phases.contains(p)) inj[pv_bus_[u]][index(p)] += share;
  }
  return inj;
}

namespace {

cd conj_div(cd s, cd v) { return std::conj(s / v); }

// Consumed complex power per bus-phase (kVA) at the given voltages.
// Returns false if a loaded node has a non-positive or non-finite voltage.
bool evaluate_loads(const PowerFlowModel& model, const std::vector<PhaseComplex>& v, double multiplier,
                    std::vector<PhaseComplex>& out) {
  out.assign(model.bus_count(), PhaseComplex{});
  const auto& loads = model.network().loads;
  for (std::size_t k = 0; k < loads.size(); ++k) {
    const int bus = model.load_bus(k);
    const std::size_t ph = index(loads[k].phase);
    const double mag = std::abs(v[bus][ph]);
    if (!(mag > 0.0) || !std::isfinite(mag)) return false;
    const LoadPower s = evaluate(loads[k], mag);
    out[bus][ph] += cd{multiplier * s.p, multiplier * s.q};
  }
  return true;
}

// Net current drawn from the network at each bus-phase, p.u.
void nodal_draw(const PowerFlowModel& model, const std::vector<PhaseComplex>& v,
                const std::vector<PhaseComplex>& load, const Injections& inj, std::vector<PhaseComplex>& out) {
  const double base = model.kva_base_per_phase();
  out.assign(model.bus_count(), PhaseComplex{});
  for (std::size_t b = 0; b < model.bus_count(); ++b) {
    for (std::size_t ph = 0; ph < 3; ++ph) {
      const cd s_net = (load[b][ph] - inj[b][ph]) / base;
      if (s_net != cd{}) out[b][ph] = conj_div(s_net, v[b][ph]);
    }
  }
}

PhaseComplex mul(const ImpedanceMatrix& z, const PhaseComplex& i) {
  PhaseComplex out{};
  for (std::size_t r = 0; r < 3; ++r) out[r] = z[r][0] * i[0] + z[r][1] * i[1] + z[r][2] * i[2];
  return out;
}

void backward_sweep(const PowerFlowModel& model, const std::vector<PhaseComplex>& draw,
                    std::vector<PhaseComplex>& currents) {
  const RadialTree& tree = model.tree();
  std::vector<PhaseComplex> downstream(model.bus_count(), PhaseComplex{});
  currents.assign(tree.line_from.size(), PhaseComplex{});
  for (int k : tree.backward_order) {
    const int to = tree.line_to[k];
    const int from = tree.line_from[k];
    for (std::size_t ph = 0; ph < 3; ++ph) {
      currents[k][ph] = draw[to][ph] + downstream[to][ph];
      downstream[from][ph] += currents[k][ph];
    }
  }
}

void forward_sweep(const PowerFlowModel& model, const std::vector<PhaseComplex>& currents,
                   std::vector<PhaseComplex>& v) {
  const RadialTree& tree = model.tree();
  for (auto it = tree.backward_order.rbegin(); it != tree.backward_order.rend(); ++it) {
    const int k = *it;
    const int to = tree.line_to[k];
    const PhaseComplex drop = mul(model.line_impedance_pu(k), currents[k]);
    const PhaseSet phases = model.bus_phases(to);
    for (Phase p : kAllPhases) {
      const std::size_t ph = index(p);
      v[to][ph] = phases.contains(p) ? v[tree.line_from[k]][ph] - drop[ph] : cd{};
    }
  }
}

// Fills totals, source injection and per-phase losses from voltages and branch currents.
void finalize(const PowerFlowModel& model, PowerFlowSolution& sol, const Injections& inj) {
  const double base = model.kva_base_per_phase();
  const RadialTree& tree = model.tree();
  sol.kva_base_per_phase = base;
  sol.bus_generation = inj;
  sol.total_load_p = sol.total_load_q = sol.total_pv_p = sol.total_pv_q = 0.0;
  for (std::size_t b = 0; b < model.bus_count(); ++b) {
    for (std::size_t ph = 0; ph < 3; ++ph) {
      sol.total_load_p += sol.bus_load[b][ph].real();
      sol.total_load_q += sol.bus_load[b][ph].imag();
      sol.total_pv_p += inj[b][ph].real();
      sol.total_pv_q += inj[b][ph].imag();
    }
  }
  sol.source_injection = PhaseComplex{};
  sol.losses_by_phase = PhaseReal{};
  sol.losses_p = sol.losses_q = 0.0;
  for (std::size_t k = 0; k < tree.line_from.size(); ++k) {
    const PhaseComplex drop = mul(model.line_impedance_pu(k), sol.branch_currents[k]);
    for (std::size_t ph = 0; ph < 3; ++ph) {
      const cd s = drop[ph] * std::conj(sol.branch_currents[k][ph]) * base;
      sol.losses_by_phase[ph] += s.real();
      sol.losses_p += s.real();
      sol.losses_q += s.imag();
    }
    if (tree.line_from[k] == tree.root) {
      for (std::size_t ph = 0; ph < 3; ++ph)
        sol.source_injection[ph] += sol.voltages[tree.root][ph] * std::conj(sol.branch_currents[k][ph]) * base;
    }
  }
}

std::vector<PhaseComplex> flat_start(const PowerFlowModel& model, const PhaseComplex& source) {
  std::vector<PhaseComplex> v(model.bus_count());
  for (std::size_t b = 0; b < model.bus_count(); ++b)
    for (Phase p : kAllPhases) v[b][index(p)] = model.bus_phases(b).contains(p) ? source[index(p)] : cd{};
  return v;
}

void require_injection_shape(const PowerFlowModel& model, const Injections& inj) {
  if (inj.size() != model.bus_count())
    throw Error("injection vector has " + std::to_string(inj.size()) + " entries for " +
                std::to_string(model.bus_count()) + " buses");
}

}  // namespace

PowerFlowSolution solve_snapshot(const PowerFlowModel& model, const PhaseTaps& taps, const Injections& fixed_injections,
                                 const SolveOptions& options, double load_multiplier,
                                 const std::vector<PhaseComplex>* initial_voltages) {
  if (auto msg = check_solve_options(options); !msg.empty()) throw Error(msg);
  require_injection_shape(model, fixed_injections);
  const PhaseComplex source = model.source_voltages(taps);

  PowerFlowSolution sol;
  sol.taps = taps;
  if (initial_voltages != nullptr && initial_voltages->size() == model.bus_count()) {
    sol.voltages = *initial_voltages;
  } else {
    sol.voltages = flat_start(model, source);
  }
  sol.voltages[model.tree().root] = source;
  for (Phase p : kAllPhases)
    if (!model.bus_phases(model.tree().root).contains(p)) sol.voltages[model.tree().root][index(p)] = cd{};

  std::vector<PhaseComplex> draw;
  std::vector<PhaseComplex> next = sol.voltages;
  bool healthy = true;
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    sol.iterations = sweep;
    if (!evaluate_loads(model, sol.voltages, load_multiplier, sol.bus_load)) {
      healthy = false;
      break;
    }
    nodal_draw(model, sol.voltages, sol.bus_load, fixed_injections, draw);
    backward_sweep(model, draw, sol.branch_currents);
    forward_sweep(model, sol.branch_currents, next);
    double delta = 0.0;
    for (std::size_t b = 0; b < next.size(); ++b)
      for (std::size_t ph = 0; ph < 3; ++ph) delta = std::max(delta, std::abs(next[b][ph] - sol.voltages[b][ph]));
    std::swap(sol.voltages, next);
    if (!std::isfinite(delta)) {
      healthy = false;
      break;
    }
    if (delta < options.tolerance) {
      sol.converged = true;
      break;
    }
  }

  // Report currents and powers consistent with the final voltages.
  if (healthy && evaluate_loads(model, sol.voltages, load_multiplier, sol.bus_load)) {
    nodal_draw(model, sol.voltages, sol.bus_load, fixed_injections, draw);
    backward_sweep(model, draw, sol.branch_currents);
  } else {
    sol.converged = false;
  }
  finalize(model, sol, fixed_injections);
  sol.status = sol.converged ? SolveStatus::Converged : SolveStatus::SweepLimit;
  return sol;
}

PowerFlowSolution solve_snapshot(const FeederNetwork& network, const PhaseTaps& taps, const Injections& fixed_injections,
                                 const SolveOptions& options, double load_multiplier) {
  return solve_snapshot(PowerFlowModel(network), taps, fixed_injections, options, load_multiplier);
}

PowerFlowSolution solve_with_inverter_control(const PowerFlowModel& model, const PhaseTaps& taps,
                                              const TimeInputs& inputs, const SolveOptions& options,
                                              const std::vector<PhaseComplex>* initial_voltages) {
  const auto& units = model.network().pv_units;
  if (inputs.pv_active_kw.size() != units.size())
    throw Error("time inputs carry " + std::to_string(inputs.pv_active_kw.size()) + " PV outputs for " +
                std::to_string(units.size()) + " units");

  std::vector<double> q(units.size(), 0.0);
  const bool has_feedback = std::any_of(units.begin(), units.end(), [](const PvUnit& u) { return u.is_volt_var(); });

  PowerFlowSolution sol = solve_snapshot(model, taps, model.pv_injections(inputs.pv_active_kw, q), options,
                                         inputs.load_multiplier, initial_voltages);
  sol.pv_q = q;
  sol.control_iterations = 1;
  if (!has_feedback) return sol;

  for (int iter = 1; iter <= options.max_control_iterations; ++iter) {
    sol.control_iterations = iter;
    if (!sol.converged) return sol;
    double worst = 0.0;
    std::vector<double> next = q;
    for (std::size_t u = 0; u < units.size(); ++u) {
      if (!units[u].is_volt_var()) continue;
      const int bus = model.pv_bus(u);
      double v = 0.0;
      for (Phase p : kAllPhases)
        if (units[u].phases.contains(p)) v += sol.voltage_magnitude(bus, p);
      v /= units[u].phases.size();
      const double target = reactive_command(units[u], v, inputs.pv_active_kw[u]);
      const double diff = target - q[u];
      worst = std::max(worst, std::abs(diff) / units[u].limits.kva);
      next[u] = q[u] + options.control_damping * diff;
    }
    if (worst < options.tolerance) return sol;
    q = std::move(next);
    const std::vector<PhaseComplex> warm = sol.voltages;
    sol = solve_snapshot(model, taps, model.pv_injections(inputs.pv_active_kw, q), options,
                         inputs.load_multiplier, &warm);
    sol.pv_q = q;
    sol.control_iterations = iter;
  }
  sol.status = SolveStatus::ControlLimit;
  sol.converged = false;
  return sol;
}

PowerFlowSolution oracle_solve(const PowerFlowModel& model, const PhaseTaps& taps, const Injections& fixed_injections,
                               double load_multiplier, const OracleOptions& options) {
  require_injection_shape(model, fixed_injections);
  const FeederNetwork& net = model.network();
  const RadialTree& tree = model.tree();

  // Node numbering over present bus-phases.
  std::vector<std::array<int, 3>> node(model.bus_count(), {-1, -1, -1});
  int n_nodes = 0;
  for (std::size_t b = 0; b < model.bus_count(); ++b)
    for (Phase p : kAllPhases)
      if (model.bus_phases(b).contains(p)) node[b][index(p)] = n_nodes++;
  if (n_nodes > options.max_bus_phases)
    throw Error("oracle solver limited to " + std::to_string(options.max_bus_phases) + " bus-phases, network has " +
                std::to_string(n_nodes));

  // Per-line admittance restricted to the to-bus phases.
  struct LineY {
    std::vector<std::size_t> phases;
    Eigen::MatrixXcd y;
  };
  std::vector<LineY> line_y(net.lines.size());
  Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(n_nodes, n_nodes);
  for (std::size_t k = 0; k < net.lines.size(); ++k) {
    LineY& ly = line_y[k];
    for (Phase p : kAllPhases)
      if (model.bus_phases(tree.line_to[k]).contains(p)) ly.phases.push_back(index(p));
    const auto m = static_cast<Eigen::Index>(ly.phases.size());
    Eigen::MatrixXcd z(m, m);
    for (Eigen::Index r = 0; r < m; ++r)
      for (Eigen::Index c = 0; c < m; ++c) z(r, c) = model.line_impedance_pu(k)[ly.phases[r]][ly.phases[c]];
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(z);
    if (!lu.isInvertible()) throw Error("line '" + net.lines[k].id + "' has a singular impedance matrix");
    ly.y = lu.inverse();
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index c = 0; c < m; ++c) {
        const int fr = node[tree.line_from[k]][ly.phases[r]], fc = node[tree.line_from[k]][ly.phases[c]];
        const int tr = node[tree.line_to[k]][ly.phases[r]], tc = node[tree.line_to[k]][ly.phases[c]];
        ybus(fr, fc) += ly.y(r, c);
        ybus(tr, tc) += ly.y(r, c);
        ybus(fr, tc) -= ly.y(r, c);
        ybus(tr, fc) -= ly.y(r, c);
      }
    }
  }

  // Partition: source nodes are known, the rest are unknown.
  std::vector<int> unknown, known;
  std::vector<int> position(n_nodes, -1);
  for (std::size_t b = 0; b < model.bus_count(); ++b)
    for (std::size_t ph = 0; ph < 3; ++ph) {
      const int id = node[b][ph];
      if (id < 0) continue;
      auto& group = (static_cast<int>(b) == tree.root) ? known : unknown;
      position[id] = static_cast<int>(group.size());
      group.push_back(id);
    }
  const auto nu = static_cast<Eigen::Index>(unknown.size());
  const auto nk = static_cast<Eigen::Index>(known.size());
  Eigen::MatrixXcd y_uu(nu, nu), y_uk(nu, nk);
  for (Eigen::Index r = 0; r < nu; ++r) {
    for (Eigen::Index c = 0; c < nu; ++c) y_uu(r, c) = ybus(unknown[r], unknown[c]);
    for (Eigen::Index c = 0; c < nk; ++c) y_uk(r, c) = ybus(unknown[r], known[c]);
  }
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(y_uu);
  if (nu > 0 && !lu.isInvertible()) throw Error("nodal admittance matrix is singular");

  const PhaseComplex source = model.source_voltages(taps);
  Eigen::VectorXcd v_known(nk);
  for (std::size_t ph = 0, c = 0; ph < 3; ++ph)
    if (node[tree.root][ph] >= 0) v_known(static_cast<Eigen::Index>(c++)) = source[ph];
  const Eigen::VectorXcd fixed_part = -y_uk * v_known;

  PowerFlowSolution sol;
  sol.taps = taps;
  sol.voltages = flat_start(model, source);
  auto unpack = [&](const Eigen::VectorXcd& vu) {
    for (std::size_t b = 0; b < model.bus_count(); ++b)
      for (std::size_t ph = 0; ph < 3; ++ph)
        if (node[b][ph] >= 0 && static_cast<int>(b) != tree.root) sol.voltages[b][ph] = vu(position[node[b][ph]]);
  };
  Eigen::VectorXcd vu(nu);
  for (std::size_t b = 0; b < model.bus_count(); ++b)
    for (std::size_t ph = 0; ph < 3; ++ph)
      if (node[b][ph] >= 0 && static_cast<int>(b) != tree.root) vu(position[node[b][ph]]) = sol.voltages[b][ph];

  std::vector<PhaseComplex> draw;
  const double base = model.kva_base_per_phase();
  for (int it = 1; it <= options.max_iterations && nu > 0; ++it) {
    sol.iterations = it;
    if (!evaluate_loads(model, sol.voltages, load_multiplier, sol.bus_load)) break;
    Eigen::VectorXcd rhs = fixed_part;
    for (std::size_t b = 0; b < model.bus_count(); ++b)
      for (std::size_t ph = 0; ph < 3; ++ph) {
        if (node[b][ph] < 0 || static_cast<int>(b) == tree.root) continue;
        const cd s_inj = (fixed_injections[b][ph] - sol.bus_load[b][ph]) / base;
        rhs(position[node[b][ph]]) += std::conj(s_inj / sol.voltages[b][ph]);
      }
    const Eigen::VectorXcd solved = lu.solve(rhs);
    const Eigen::VectorXcd next = options.damping * solved + (1.0 - options.damping) * vu;
    const double delta = (next - vu).cwiseAbs().maxCoeff();
    vu = next;
    unpack(vu);
    if (!std::isfinite(delta)) break;
    if (delta < options.tolerance) {
      sol.converged = true;
      break;
    }
  }
  if (nu == 0) sol.converged = true;

  evaluate_loads(model, sol.voltages, load_multiplier, sol.bus_load);
  // Branch currents from the voltage solution through each line's admittance.
  sol.branch_currents.assign(net.lines.size(), PhaseComplex{});
  for (std::size_t k = 0; k < net.lines.size(); ++k) {
    const LineY& ly = line_y[k];
    const auto m = static_cast<Eigen::Index>(ly.phases.size());
    Eigen::VectorXcd dv(m);
    for (Eigen::Index r = 0; r < m; ++r)
      dv(r) = sol.voltages[tree.line_from[k]][ly.phases[r]] - sol.voltages[tree.line_to[k]][ly.phases[r]];
    const Eigen::VectorXcd i = ly.y * dv;
    for (Eigen::Index r = 0; r < m; ++r) sol.branch_currents[k][ly.phases[r]] = i(r);
  }
  finalize(model, sol, fixed_injections);
  sol.status = sol.converged ? SolveStatus::Converged : SolveStatus::SweepLimit;
  return sol;
}

LossBreakdown compute_losses(const PowerFlowSolution& solution, const PowerFlowModel& model) {
  if (!solution.converged) throw Error("losses requested for an unconverged solution");
  LossBreakdown out;
  out.per_line.assign(model.tree().line_from.size(), 0.0);
  for (std::size_t k = 0; k < out.per_line.size(); ++k) {
    const PhaseComplex& i = solution.branch_currents[k];
    const PhaseComplex drop = mul(model.line_impedance_pu(k), i);
    double loss = 0.0;
    for (std::size_t ph = 0; ph < 3; ++ph) loss += (std::conj(i[ph]) * drop[ph]).real();
    out.per_line[k] = loss * model.kva_base_per_phase();
    out.losses_p += out.per_line[k];
  }
  return out;
}

std::array<double, 4> power_balance_residual_pu(const PowerFlowSolution& solution) {
  std::array<double, 4> out{};
  for (std::size_t ph = 0; ph < 3; ++ph) {
    double load = 0.0, pv = 0.0;
    for (std::size_t b = 0; b < solution.bus_load.size(); ++b) {
      load += solution.bus_load[b][ph].real();
      pv += solution.bus_generation[b][ph].real();
    }
    out[ph] = (solution.source_injection[ph].real() + pv - load - solution.losses_by_phase[ph]) /
              solution.kva_base_per_phase;
  }
  out[3] = (solution.source_injection[0].real() + solution.source_injection[1].real() +
            solution.source_injection[2].real() + solution.total_pv_p - solution.total_load_p - solution.losses_p) /
           solution.kva_base_per_phase;
  return out;
}

}  // namespace cvrsim
