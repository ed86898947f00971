#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "cvrsim/io.hpp"
#include "cvrsim/metrics.hpp"
#include "cvrsim/oltc_cvr.hpp"
#include "cvrsim/power_flow.hpp"
#include "cvrsim/scenario.hpp"
#include "cvrsim/zip_load.hpp"

namespace py = pybind11;

using namespace cvrsim;

namespace {

std::string phase_set_text(const PhaseSet& s) { return s.to_string(); }

PhaseSet phase_set_from(const std::string& text) {
  const auto p = PhaseSet::parse(text);
  if (!p) throw Error("invalid phase set '" + text + "'");
  return *p;
}

HourlyProfile profile_from(const std::vector<double>& values) {
  if (values.size() != kHoursPerDay) throw Error("profiles need exactly 24 values");
  HourlyProfile p{};
  std::copy(values.begin(), values.end(), p.begin());
  return p;
}

TimeInputs inputs_for(const FeederNetwork& net, double load_multiplier, double pv_fraction) {
  TimeInputs in;
  in.load_multiplier = load_multiplier;
  for (const PvUnit& u : net.pv_units) in.pv_active_kw.push_back(pv_fraction * u.peak_kw);
  return in;
}

py::dict solution_dict(const PowerFlowModel& model, const PowerFlowSolution& s) {
  py::dict voltages;
  for (std::size_t b = 0; b < model.bus_count(); ++b) {
    py::dict phases;
    for (Phase p : kAllPhases)
      if (model.bus_phases(b).contains(p)) phases[py::str(std::string(1, to_char(p)))] = s.voltages[b][index(p)];
    voltages[py::str(model.network().buses[b].id)] = phases;
  }
  py::dict out;
  out["converged"] = s.converged;
  out["status"] = to_string(s.status);
  out["iterations"] = s.iterations;
  out["taps"] = s.taps;
  out["voltages"] = voltages;
  out["load_p"] = s.total_load_p;
  out["load_q"] = s.total_load_q;
  out["pv_p"] = s.total_pv_p;
  out["pv_q"] = s.total_pv_q;
  out["losses_p"] = s.losses_p;
  out["source"] = s.source_injection;
  out["balance_residual_pu"] = power_balance_residual_pu(s);
  return out;
}

}  // namespace

PYBIND11_MODULE(_cvrsim, m) {
  m.doc() = "Quasi-static CVR time-series simulation of PV-rich radial feeders";
  m.attr("__version__") = kToolVersion;

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ParseError> parse_error(m, "ParseError", error.ptr());
  static py::exception<UndefinedCvrFactor> undefined(m, "UndefinedCvrFactor", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::set_error(parse_error, e.what());
    } catch (const UndefinedCvrFactor& e) {
      py::set_error(undefined, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::enum_<Phase>(m, "Phase").value("A", Phase::A).value("B", Phase::B).value("C", Phase::C);
  py::enum_<AllocationKind>(m, "AllocationKind")
      .value("Head", AllocationKind::Head)
      .value("Dispersed", AllocationKind::Dispersed)
      .value("End", AllocationKind::End);
  py::enum_<ControlMode>(m, "ControlMode")
      .value("PowerFactor", ControlMode::PowerFactor)
      .value("VoltVar", ControlMode::VoltVar);

  py::class_<ZipCoefficients>(m, "ZipCoefficients")
      .def(py::init<>())
      .def(py::init([](double z, double i, double p) { return ZipCoefficients{z, i, p}; }), py::arg("z"),
           py::arg("i"), py::arg("p"))
      .def_readwrite("z", &ZipCoefficients::z)
      .def_readwrite("i", &ZipCoefficients::i)
      .def_readwrite("p", &ZipCoefficients::p);

  py::class_<ZipLoad>(m, "ZipLoad")
      .def(py::init<>())
      .def_readwrite("bus", &ZipLoad::bus)
      .def_readwrite("phase", &ZipLoad::phase)
      .def_readwrite("p0", &ZipLoad::p0)
      .def_readwrite("q0", &ZipLoad::q0)
      .def_readwrite("p_coef", &ZipLoad::p_coef)
      .def_readwrite("q_coef", &ZipLoad::q_coef)
      .def_readwrite("v0", &ZipLoad::v0)
      .def("evaluate",
           [](const ZipLoad& l, double v) {
             const LoadPower s = evaluate(l, v);
             return py::make_tuple(s.p, s.q);
           })
      .def("sensitivity", [](const ZipLoad& l, double v) { return sensitivity(l, v); })
      .def("check", &check_zip_load);

  m.def("volt_var_q", [](double v) { return volt_var_q(VoltVarCurve{}, v); }, py::arg("v"),
        "Default volt-var curve, reactive power as a fraction of kVA");
  m.def(
      "reactive_capability",
      [](double kva, double p) {
        const ReactiveRange r = reactive_capability(InverterLimits::for_rating(kva), p);
        return py::make_tuple(r.q_min, r.q_max);
      },
      py::arg("kva"), py::arg("p"));

  py::class_<Bus>(m, "Bus")
      .def_readonly("id", &Bus::id)
      .def_property_readonly("phases", [](const Bus& b) { return phase_set_text(b.phases); })
      .def_readonly("base_voltage", &Bus::base_voltage)
      .def_readonly("feeder_id", &Bus::feeder_id)
      .def_readonly("distance_from_substation", &Bus::distance_from_substation);

  py::class_<PvUnit>(m, "PvUnit")
      .def_readonly("id", &PvUnit::id)
      .def_readonly("bus", &PvUnit::bus)
      .def_property_readonly("phases", [](const PvUnit& u) { return phase_set_text(u.phases); })
      .def_readonly("peak_kw", &PvUnit::peak_kw)
      .def_property_readonly("kva", [](const PvUnit& u) { return u.limits.kva; })
      .def_property_readonly("volt_var", &PvUnit::is_volt_var);

  py::class_<FeederNetwork, std::shared_ptr<FeederNetwork>>(m, "FeederNetwork")
      .def_readonly("buses", &FeederNetwork::buses)
      .def_readonly("loads", &FeederNetwork::loads)
      .def_readonly("pv_units", &FeederNetwork::pv_units)
      .def_readonly("source_bus", &FeederNetwork::source_bus)
      .def_readonly("system_mva_base", &FeederNetwork::system_mva_base)
      .def_property_readonly("line_count", [](const FeederNetwork& n) { return n.lines.size(); })
      .def_property_readonly("total_length_miles",
                             [](const FeederNetwork& n) {
                               double s = 0.0;
                               for (const LineSegment& l : n.lines) s += l.length;
                               return s;
                             })
      .def_property_readonly("rated_load_kw",
                             [](const FeederNetwork& n) {
                               double s = 0.0;
                               for (const ZipLoad& l : n.loads) s += l.p0;
                               return s;
                             })
      .def("to_text", &feeder_to_text)
      .def("validate",
           [](const FeederNetwork& n) {
             std::vector<std::string> out;
             for (const ValidationIssue& i : validate_radial(n).issues) out.push_back(i.subject + ": " + i.message);
             return out;
           })
      .def("__eq__", [](const FeederNetwork& a, const FeederNetwork& b) { return a == b; });

  m.def(
      "synthesize_feeder",
      [](std::uint64_t seed, std::array<int, 3> buses_per_feeder, double total_length_miles, double total_load_kw) {
        SynthesisParams p;
        p.seed = seed;
        p.buses_per_feeder = buses_per_feeder;
        p.total_length_miles = total_length_miles;
        p.total_load_kw = total_load_kw;
        return std::make_shared<FeederNetwork>(synthesize_feeder(p));
      },
      py::arg("seed") = SynthesisParams{}.seed, py::arg("buses_per_feeder") = SynthesisParams{}.buses_per_feeder,
      py::arg("total_length_miles") = SynthesisParams{}.total_length_miles,
      py::arg("total_load_kw") = SynthesisParams{}.total_load_kw);
  m.def("feeder_from_text",
        [](const std::string& text) { return std::make_shared<FeederNetwork>(feeder_from_text(text, "<text>")); });
  m.def("load_feeder", [](const std::filesystem::path& p) { return std::make_shared<FeederNetwork>(load_feeder(p)); });
  m.def("save_feeder", [](const FeederNetwork& n, const std::filesystem::path& p) { save_feeder(n, p); });
  m.def(
      "allocate_pv",
      [](const FeederNetwork& n, AllocationKind a, double pen, ControlMode mode, std::optional<std::vector<double>> load,
         int units) {
        const HourlyProfile profile = load ? profile_from(*load) : default_load_profile();
        return std::make_shared<FeederNetwork>(allocate_pv(n, a, pen, mode, profile, units));
      },
      py::arg("network"), py::arg("allocation"), py::arg("penetration_pct"), py::arg("mode"),
      py::arg("load_profile") = py::none(), py::arg("units_per_feeder") = 1);

  m.def(
      "solve_snapshot",
      [](const FeederNetwork& n, PhaseTaps taps, double load_multiplier, double pv_fraction, double tolerance) {
        const PowerFlowModel model(n);
        SolveOptions o;
        o.tolerance = tolerance;
        return solution_dict(model, solve_with_inverter_control(model, taps, inputs_for(n, load_multiplier, pv_fraction), o));
      },
      py::arg("network"), py::arg("taps") = PhaseTaps{0, 0, 0}, py::arg("load_multiplier") = 1.0,
      py::arg("pv_fraction") = 0.0, py::arg("tolerance") = SolveOptions{}.tolerance,
      "Solve one snapshot; PV units produce pv_fraction of their peak");
  m.def(
      "oracle_solve",
      [](const FeederNetwork& n, PhaseTaps taps, double load_multiplier) {
        const PowerFlowModel model(n);
        return solution_dict(model, oracle_solve(model, taps, Injections(model.bus_count()), load_multiplier));
      },
      py::arg("network"), py::arg("taps") = PhaseTaps{0, 0, 0}, py::arg("load_multiplier") = 1.0,
      "Dense nodal solve of the network without PV injections");
  m.def(
      "select_minimal_taps",
      [](const FeederNetwork& n, double load_multiplier, double pv_fraction, double v_min, double v_max) {
        const PowerFlowModel model(n);
        CvrConstraints c;
        c.v_min = v_min;
        c.v_max = v_max;
        const TapSelection sel = select_minimal_taps(model, inputs_for(n, load_multiplier, pv_fraction), c, {});
        py::dict out = solution_dict(model, sel.solution);
        out["feasible"] = sel.feasible;
        out["taps"] = sel.taps;
        out["probes"] = sel.probes;
        return out;
      },
      py::arg("network"), py::arg("load_multiplier") = 1.0, py::arg("pv_fraction") = 0.0,
      py::arg("v_min") = CvrConstraints{}.v_min, py::arg("v_max") = CvrConstraints{}.v_max);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def_readwrite("name", &ScenarioConfig::name)
      .def_property(
          "feeder", [](const ScenarioConfig& c) { return c.feeder; },
          [](ScenarioConfig& c, std::shared_ptr<FeederNetwork> n) {
            c.feeder = n;
            if (n && c.feeder_label.empty()) c.feeder_label = "python";
          })
      .def_readwrite("feeder_label", &ScenarioConfig::feeder_label)
      .def_property(
          "seed", [](const ScenarioConfig& c) { return c.seed; }, [](ScenarioConfig& c, std::uint64_t s) { c.seed = s; })
      .def_readwrite("allocation", &ScenarioConfig::allocation)
      .def_readwrite("penetration_pct", &ScenarioConfig::penetration_pct)
      .def_readwrite("mode", &ScenarioConfig::mode)
      .def_readwrite("cvr_enabled", &ScenarioConfig::cvr_enabled)
      .def_property(
          "load_profile", [](const ScenarioConfig& c) { return c.load_profile; },
          [](ScenarioConfig& c, const std::vector<double>& v) { c.load_profile = profile_from(v); })
      .def_property(
          "pv_profile", [](const ScenarioConfig& c) { return c.pv_profile; },
          [](ScenarioConfig& c, const std::vector<double>& v) { c.pv_profile = profile_from(v); })
      .def_readwrite("units_per_feeder", &ScenarioConfig::units_per_feeder)
      .def_readwrite("snapshot_hour", &ScenarioConfig::snapshot_hour)
      .def_property(
          "v_min", [](const ScenarioConfig& c) { return c.constraints.v_min; },
          [](ScenarioConfig& c, double v) { c.constraints.v_min = v; })
      .def_property(
          "v_max", [](const ScenarioConfig& c) { return c.constraints.v_max; },
          [](ScenarioConfig& c, double v) { c.constraints.v_max = v; })
      .def("check", &check_scenario_config);

  py::class_<HourRecord>(m, "HourRecord")
      .def_readonly("hour", &HourRecord::hour)
      .def_readonly("load_multiplier", &HourRecord::load_multiplier)
      .def_readonly("irradiance", &HourRecord::irradiance)
      .def_readonly("taps", &HourRecord::taps)
      .def_readonly("feasible", &HourRecord::feasible)
      .def_readonly("substation_voltage", &HourRecord::substation_voltage)
      .def_readonly("load_p", &HourRecord::load_p)
      .def_readonly("load_q", &HourRecord::load_q)
      .def_readonly("pv_p", &HourRecord::pv_p)
      .def_readonly("pv_q", &HourRecord::pv_q)
      .def_readonly("losses_p", &HourRecord::losses_p)
      .def_readonly("source", &HourRecord::source)
      .def_readonly("min_voltage", &HourRecord::min_voltage)
      .def_readonly("max_voltage", &HourRecord::max_voltage);

  py::class_<TimeSeriesResult>(m, "TimeSeriesResult")
      .def_readonly("config", &TimeSeriesResult::config)
      .def_readonly("bus_ids", &TimeSeriesResult::bus_ids)
      .def_readonly("hours", &TimeSeriesResult::hours)
      .def("hourly_table", &hourly_table);

  py::class_<VoltageDistribution>(m, "VoltageDistribution")
      .def_readonly("bus", &VoltageDistribution::bus)
      .def_readonly("phase", &VoltageDistribution::phase)
      .def_readonly("voltage", &VoltageDistribution::voltage)
      .def_readonly("min", &VoltageDistribution::min)
      .def_readonly("max", &VoltageDistribution::max)
      .def_readonly("mean", &VoltageDistribution::mean)
      .def_readonly("spread", &VoltageDistribution::spread);

  py::class_<SummaryMetrics>(m, "SummaryMetrics")
      .def_readonly("total_customer_energy", &SummaryMetrics::total_customer_energy)
      .def_readonly("total_line_loss_energy", &SummaryMetrics::total_line_loss_energy)
      .def_readonly("mean_substation_voltage_by_phase", &SummaryMetrics::mean_substation_voltage_by_phase)
      .def_readonly("mean_substation_voltage", &SummaryMetrics::mean_substation_voltage)
      .def_readonly("min_network_voltage", &SummaryMetrics::min_network_voltage)
      .def_readonly("max_network_voltage", &SummaryMetrics::max_network_voltage)
      .def_readonly("cvr_factor", &SummaryMetrics::cvr_factor)
      .def_readonly("infeasible_hours", &SummaryMetrics::infeasible_hours);

  m.def("run_scenario", &run_scenario, py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "run_matrix",
      [](const std::vector<ScenarioConfig>& configs, int parallel) {
        std::vector<MatrixEntry> entries;
        {
          py::gil_scoped_release release;
          entries = run_matrix(configs, parallel);
        }
        py::list out;
        for (auto& e : entries) {
          if (e.ok())
            out.append(py::cast(std::move(*e.result)));
          else
            out.append(py::cast(e.error));
        }
        return out;
      },
      py::arg("configs"), py::arg("parallel") = 1,
      "Results in input order; a failed scenario appears as its error message");
  m.def("scenario_grid", &scenario_grid, py::arg("base"), py::arg("penetrations") = std::vector<double>{60.0});

  m.def("total_energy", &total_energy);
  m.def("loss_energy", &loss_energy);
  m.def("mean_substation_voltage", py::overload_cast<const TimeSeriesResult&>(&mean_substation_voltage));
  m.def("cvr_factor", [](const TimeSeriesResult& base, const TimeSeriesResult& cvr) { return cvr_factor(base, cvr); },
        py::arg("base"), py::arg("cvr"));
  m.def("voltage_distribution", &voltage_distribution, py::arg("result"), py::arg("hour"));
  m.def("summarize", &summarize, py::arg("result"), py::arg("base") = nullptr);

  m.def(
      "load_run_config",
      [](const std::filesystem::path& p) {
        const RunConfig rc = load_run_config(p);
        return py::make_tuple(rc.scenario, rc.penetrations);
      },
      "Returns (ScenarioConfig, penetration levels)");
  m.def(
      "emit_results",
      [](const std::vector<TimeSeriesResult>& results, const std::filesystem::path& dir) {
        const RunManifest man = emit_results(results, dir);
        py::dict files;
        for (const ManifestFile& f : man.files) files[py::str(f.name)] = f.fnv1a64;
        return files;
      },
      py::arg("results"), py::arg("output_dir"), "Writes result tables and manifest; returns {file: hash}");
  m.def("recompute_summaries", &recompute_summaries, py::arg("run_dir"));
}
