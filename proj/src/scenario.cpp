#include "cvrsim/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <thread>

#include "cvrsim/error.hpp"

namespace cvrsim {

std::string to_string(AllocationKind kind) {
  switch (kind) {
    case AllocationKind::Head: return "head";
    case AllocationKind::Dispersed: return "dispersed";
    case AllocationKind::End: return "end";
  }
  return "unknown";
}

std::string to_string(ControlMode mode) { return mode == ControlMode::VoltVar ? "voltvar" : "pf"; }

std::optional<AllocationKind> parse_allocation(std::string_view text) {
  if (text == "head") return AllocationKind::Head;
  if (text == "dispersed") return AllocationKind::Dispersed;
  if (text == "end") return AllocationKind::End;
  return std::nullopt;
}

std::optional<ControlMode> parse_control_mode(std::string_view text) {
  if (text == "pf") return ControlMode::PowerFactor;
  if (text == "voltvar" || text == "vrp") return ControlMode::VoltVar;
  return std::nullopt;
}

HourlyProfile default_load_profile() {
  return {0.56, 0.52, 0.50, 0.49, 0.50, 0.55, 0.64, 0.73, 0.77, 0.76, 0.74, 0.73,
          0.72, 0.72, 0.73, 0.76, 0.82, 0.91, 1.00, 0.98, 0.92, 0.83, 0.72, 0.62};
}

HourlyProfile default_pv_profile() {
  return {0.0,  0.0,  0.0,  0.0,  0.0,  0.0,  0.02, 0.10, 0.26, 0.46, 0.66, 0.83,
          0.95, 1.00, 0.96, 0.84, 0.66, 0.44, 0.20, 0.02, 0.0,  0.0,  0.0,  0.0};
}

int system_peak_hour(const HourlyProfile& load_profile) {
  return static_cast<int>(std::max_element(load_profile.begin(), load_profile.end()) - load_profile.begin());
}

ImpedanceMatrix default_line_impedance() {
  using cd = std::complex<double>;
  const cd aa{0.4576, 1.0780}, bb{0.4666, 1.0482}, cc{0.4615, 1.0651};
  const cd ab{0.1560, 0.5017}, ac{0.1535, 0.3849}, bc{0.1580, 0.4236};
  return {{{aa, ab, ac}, {ab, bb, bc}, {ac, bc, cc}}};
}

namespace {

// Platform-independent uniform draw in [0, 1).
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string padded(int value, int width) {
  std::string s = std::to_string(value);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

}  // namespace

FeederNetwork synthesize_feeder(const SynthesisParams& params) {
  int total_buses = 0;
  for (int n : params.buses_per_feeder) {
    if (n < 1) throw Error("each feeder needs at least one bus");
    total_buses += n;
  }
  if (!(params.total_length_miles > 0.0) || !(params.total_load_kw > 0.0))
    throw Error("feeder length and load must be positive");
  if (!(params.mainline_fraction > 0.0 && params.mainline_fraction <= 1.0))
    throw Error("mainline fraction must lie in (0, 1]");
  if (params.max_lateral_buses < 1) throw Error("max_lateral_buses must be at least 1");
  if (params.tail_buses < 0 || !(params.tail_length_weight > 0.0) || !(params.tail_load_weight > 0.0) ||
      !(params.tail_attach_fraction >= 0.0 && params.tail_attach_fraction <= 1.0))
    throw Error("invalid remote-tail parameters");
  if (!(params.load_power_factor > 0.0 && params.load_power_factor <= 1.0))
    throw Error("load power factor must lie in (0, 1]");
  const double share_sum = params.load_shares[0] + params.load_shares[1] + params.load_shares[2];
  if (!(share_sum > 0.0) || *std::min_element(params.load_shares.begin(), params.load_shares.end()) < 0.0)
    throw Error("feeder load shares must be non-negative with a positive sum");

  std::mt19937_64 rng(params.seed);
  FeederNetwork net;
  net.system_mva_base = params.system_mva_base;
  net.transformer.rating_kva = params.transformer_kva;
  net.transformer.primary_kv = params.primary_kv;
  net.transformer.secondary_kv = params.secondary_kv;
  const double v_ln = params.secondary_kv * 1000.0 / std::sqrt(3.0);
  net.source_bus = "SUB";
  net.buses.push_back({"SUB", PhaseSet::all(), v_ln, 0, 0.0});

  // Topology first, raw segment weights second, then scale lengths.
  std::vector<double> raw_length;
  std::vector<double> load_weight(1, 0.0);
  int line_counter = 0;
  for (int f = 0; f < 3; ++f) {
    const int n = params.buses_per_feeder[f];
    const int tail = std::min(params.tail_buses, n - 1);
    const int body = n - std::max(tail, 0);
    const int mainline = std::clamp(static_cast<int>(std::lround(params.mainline_fraction * body)), 1, body);
    std::vector<int> mainline_bus;
    int k = 0;
    auto add_bus = [&](const std::string& parent, double length_weight, double customer_weight) {
      const std::string id = "F" + std::to_string(f + 1) + "B" + padded(++k, 3);
      net.buses.push_back({id, PhaseSet::all(), v_ln, f + 1, 0.0});
      net.lines.push_back({"L" + padded(++line_counter, 4), parent, id, 0.0, params.impedance_per_mile});
      raw_length.push_back(length_weight * (0.5 + unit_uniform(rng)));
      load_weight.push_back(customer_weight);
      return id;
    };
    std::string previous = "SUB";
    for (int j = 0; j < mainline; ++j) {
      previous = add_bus(previous, 1.0, 1.0);
      mainline_bus.push_back(static_cast<int>(net.buses.size()) - 1);
    }
    while (k < body) {
      const int tap_off = static_cast<int>(unit_uniform(rng) * mainline);
      const int lateral = std::min(body - k, 1 + static_cast<int>(unit_uniform(rng) * params.max_lateral_buses));
      std::string parent = net.buses[mainline_bus[tap_off]].id;
      for (int j = 0; j < lateral; ++j) parent = add_bus(parent, 1.0, 1.0);
    }
    if (tail > 0) {
      const int attach = std::clamp(static_cast<int>(params.tail_attach_fraction * mainline), 0, mainline - 1);
      std::string parent = net.buses[mainline_bus[attach]].id;
      for (int j = 0; j < tail; ++j) parent = add_bus(parent, params.tail_length_weight, params.tail_load_weight);
    }
  }
  const double raw_total = std::accumulate(raw_length.begin(), raw_length.end(), 0.0);
  for (std::size_t i = 0; i < net.lines.size(); ++i)
    net.lines[i].length = raw_length[i] * params.total_length_miles / raw_total;

  // Distances follow creation order: every parent precedes its children.
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < net.buses.size(); ++i) position[net.buses[i].id] = i;
  for (const LineSegment& line : net.lines)
    net.buses[position[line.to_bus]].distance_from_substation =
        net.buses[position[line.from_bus]].distance_from_substation + line.length;

  // One customer per primary bus, phases round-robin, sizes scaled per feeder.
  const double tan_phi = std::tan(std::acos(params.load_power_factor));
  std::array<double, 3> raw_feeder_load{};
  std::vector<double> raw_load(net.buses.size(), 0.0);
  for (std::size_t i = 1; i < net.buses.size(); ++i) {
    raw_load[i] = load_weight[i] * (0.5 + unit_uniform(rng));
    raw_feeder_load[net.buses[i].feeder_id - 1] += raw_load[i];
  }
  for (std::size_t i = 1; i < net.buses.size(); ++i) {
    const int f = net.buses[i].feeder_id - 1;
    ZipLoad load;
    load.bus = net.buses[i].id;
    load.phase = kAllPhases[(i - 1) % 3];
    load.p0 = params.total_load_kw * params.load_shares[f] / share_sum * raw_load[i] / raw_feeder_load[f];
    load.q0 = load.p0 * tan_phi;
    net.loads.push_back(load);
  }
  return net;
}

FeederNetwork allocate_pv(const FeederNetwork& network, AllocationKind allocation, double penetration_pct,
                          ControlMode mode, const HourlyProfile& load_profile, int units_per_feeder) {
  if (!(penetration_pct >= 0.0)) throw Error("penetration must be non-negative");
  if (units_per_feeder < 1) throw Error("units_per_feeder must be at least 1");
  const double rated_total = std::accumulate(network.loads.begin(), network.loads.end(), 0.0,
                                             [](double acc, const ZipLoad& l) { return acc + l.p0; });
  if (network.loads.empty() || !(rated_total > 0.0)) throw Error("PV allocation needs a network with loads");
  FeederNetwork out = network;
  if (penetration_pct == 0.0) return out;

  const double peak_multiplier = load_profile[system_peak_hour(load_profile)];
  const double fraction = penetration_pct / 100.0;
  InverterMode inverter_mode = ConstantPowerFactor{};
  if (mode == ControlMode::VoltVar) inverter_mode = VoltVar{};

  auto make_unit = [&](std::string id, std::string bus, PhaseSet phases, double peak_kw) {
    PvUnit unit;
    unit.id = std::move(id);
    unit.bus = std::move(bus);
    unit.phases = phases;
    unit.peak_kw = peak_kw;
    unit.limits = InverterLimits::for_rating(peak_kw / 0.9);
    unit.mode = inverter_mode;
    return unit;
  };

  if (allocation == AllocationKind::Dispersed) {
    for (const ZipLoad& load : network.loads) {
      if (!(load.p0 > 0.0)) continue;
      out.pv_units.push_back(make_unit("PV-" + load.bus + "-" + to_char(load.phase), load.bus,
                                       PhaseSet::single(load.phase), fraction * load.p0 * peak_multiplier));
    }
    return out;
  }

  // Aggregate allocations: per-feeder share of rated load.
  std::map<int, double> feeder_load;
  for (const ZipLoad& load : network.loads) feeder_load[network.buses[network.find_bus(load.bus)].feeder_id] += load.p0;
  const double system_peak = rated_total * peak_multiplier;
  for (const auto& [feeder, load_kw] : feeder_load) {
    if (!(load_kw > 0.0)) continue;
    std::vector<const Bus*> candidates;
    for (const Bus& bus : network.buses)
      if (bus.feeder_id == feeder && bus.id != network.source_bus && bus.phases == PhaseSet::all())
        candidates.push_back(&bus);
    if (candidates.empty()) throw Error("feeder " + std::to_string(feeder) + " has no three-phase bus for PV");
    const bool head = allocation == AllocationKind::Head;
    std::sort(candidates.begin(), candidates.end(), [head](const Bus* a, const Bus* b) {
      if (a->distance_from_substation != b->distance_from_substation)
        return head ? a->distance_from_substation < b->distance_from_substation
                    : a->distance_from_substation > b->distance_from_substation;
      return a->id < b->id;
    });
    const int count = std::min<int>(units_per_feeder, static_cast<int>(candidates.size()));
    const double feeder_peak = fraction * system_peak * load_kw / rated_total;
    for (int u = 0; u < count; ++u)
      out.pv_units.push_back(make_unit("PV-" + to_string(allocation) + "-" + candidates[u]->id, candidates[u]->id,
                                       PhaseSet::all(), feeder_peak / count));
  }
  return out;
}

std::string check_scenario_config(const ScenarioConfig& config) {
  if (!(config.penetration_pct >= 0.0)) return "penetration must be non-negative";
  for (int h = 0; h < kHoursPerDay; ++h) {
    if (!(config.load_profile[h] >= 0.0) || !std::isfinite(config.load_profile[h]))
      return "load multiplier at hour " + std::to_string(h) + " must be finite and non-negative";
    if (!(config.pv_profile[h] >= 0.0 && config.pv_profile[h] <= 1.0))
      return "PV multiplier at hour " + std::to_string(h) + " must lie in [0, 1]";
  }
  if (config.snapshot_hour < 0 || config.snapshot_hour >= kHoursPerDay) return "snapshot hour must lie in [0, 24)";
  if (config.units_per_feeder < 1) return "units_per_feeder must be at least 1";
  if (auto msg = check_oltc_config(config.oltc); !msg.empty()) return msg;
  if (auto msg = check_cvr_constraints(config.constraints); !msg.empty()) return msg;
  return check_solve_options(config.solve);
}

bool same_scenario_except_cvr(const ScenarioConfig& a, const ScenarioConfig& b) {
  bool same_feeder;
  if (a.feeder != nullptr && b.feeder != nullptr) {
    same_feeder = *a.feeder == *b.feeder;
  } else if (!a.feeder_label.empty() || !b.feeder_label.empty()) {
    same_feeder = a.feeder_label == b.feeder_label;
  } else {
    same_feeder = a.feeder == nullptr && b.feeder == nullptr && a.synthesis == b.synthesis && a.seed == b.seed;
  }
  return same_feeder && a.allocation == b.allocation && a.penetration_pct == b.penetration_pct &&
         a.mode == b.mode && a.load_profile == b.load_profile && a.pv_profile == b.pv_profile &&
         a.units_per_feeder == b.units_per_feeder && a.oltc == b.oltc && a.constraints == b.constraints &&
         a.solve == b.solve;
}

FeederNetwork scenario_base_feeder(const ScenarioConfig& config) {
  if (config.feeder) return *config.feeder;
  SynthesisParams params = config.synthesis;
  params.seed = config.seed;
  return synthesize_feeder(params);
}

TimeSeriesResult run_scenario(const ScenarioConfig& config) {
  if (auto msg = check_scenario_config(config); !msg.empty()) throw Error("scenario '" + config.name + "': " + msg);
  const FeederNetwork network =
      config.penetration_pct > 0.0 ? allocate_pv(scenario_base_feeder(config), config.allocation,
                                                 config.penetration_pct, config.mode, config.load_profile,
                                                 config.units_per_feeder)
                                   : scenario_base_feeder(config);
  const PowerFlowModel model(network, config.oltc);

  TimeSeriesResult result;
  result.config = config;
  for (const Bus& bus : network.buses) {
    result.bus_ids.push_back(bus.id);
    result.bus_phases.push_back(bus.phases);
  }
  std::vector<PvUnit> units = network.pv_units;
  for (int h = 0; h < kHoursPerDay; ++h) {
    const TimeInputs inputs = resolve_time_inputs(units, config.load_profile[h], config.pv_profile[h]);
    TimestepResult step = run_timestep(model, inputs, config.cvr_enabled, config.constraints, config.solve);
    const PowerFlowSolution& sol = step.solution;
    if (!sol.converged)
      throw Error("scenario '" + config.name + "' hour " + std::to_string(h) + ": power flow did not converge (" +
                  to_string(sol.status) + ")");
    HourRecord rec;
    rec.hour = h;
    rec.load_multiplier = config.load_profile[h];
    rec.irradiance = config.pv_profile[h];
    rec.taps = step.taps;
    rec.feasible = step.feasible;
    rec.failed_probes = static_cast<int>(step.failed_probes.size());
    rec.load_p = sol.total_load_p;
    rec.load_q = sol.total_load_q;
    rec.pv_p = sol.total_pv_p;
    rec.pv_q = sol.total_pv_q;
    rec.losses_p = sol.losses_p;
    rec.source = sol.source_injection;
    rec.min_voltage = std::numeric_limits<double>::infinity();
    rec.max_voltage = 0.0;
    rec.bus_voltages.resize(sol.voltages.size());
    for (std::size_t b = 0; b < sol.voltages.size(); ++b) {
      for (Phase p : kAllPhases) {
        if (!network.buses[b].phases.contains(p)) continue;
        const double mag = std::abs(sol.voltages[b][index(p)]);
        rec.bus_voltages[b][index(p)] = mag;
        rec.min_voltage = std::min(rec.min_voltage, mag);
        rec.max_voltage = std::max(rec.max_voltage, mag);
      }
    }
    rec.substation_voltage = taps_to_ratios(config.oltc, rec.taps);
    result.hours.push_back(std::move(rec));
  }
  return result;
}

std::vector<MatrixEntry> run_matrix(const std::vector<ScenarioConfig>& configs, int parallel) {
  std::vector<MatrixEntry> out(configs.size());
  auto run_one = [&](std::size_t i) {
    try {
      out[i].result = run_scenario(configs[i]);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  };
  const int workers = std::clamp<int>(parallel, 1, std::max<int>(1, static_cast<int>(configs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < configs.size(); ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < configs.size(); i = next++) run_one(i);
    });
  pool.clear();
  return out;
}

std::vector<ScenarioConfig> scenario_grid(const ScenarioConfig& base, const std::vector<double>& penetrations) {
  std::vector<ScenarioConfig> grid;
  for (double pen : penetrations) {
    for (AllocationKind allocation : kAllAllocations) {
      for (ControlMode mode : kAllModes) {
        for (bool cvr : {true, false}) {
          ScenarioConfig c = base;
          c.allocation = allocation;
          c.mode = mode;
          c.cvr_enabled = cvr;
          c.penetration_pct = pen;
          char pen_text[32];
          std::snprintf(pen_text, sizeof pen_text, "%g", pen);
          c.name = to_string(allocation) + "_" + to_string(mode) + "_pen" + pen_text + (cvr ? "_cvr" : "_nocvr");
          grid.push_back(std::move(c));
        }
      }
    }
  }
  return grid;
}

}  // namespace cvrsim
