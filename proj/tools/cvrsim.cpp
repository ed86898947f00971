#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cvrsim/io.hpp"
#include "cvrsim/metrics.hpp"
#include "cvrsim/scenario.hpp"

namespace {

struct Options {
  std::string config;
  std::string output = "results";
  std::optional<std::uint64_t> seed;
  bool no_cvr = false;
  std::string allocation;
  std::optional<double> penetration;
  std::string mode;
  int parallel = 1;
  bool force = false;
  std::string run_dir;
  std::string summary_out = "-";
};

cvrsim::RunConfig base_config(const Options& o) {
  cvrsim::RunConfig rc;
  if (!o.config.empty()) {
    rc = cvrsim::load_run_config(o.config);
  } else {
    rc.scenario.name = "default";
  }
  cvrsim::ScenarioConfig& c = rc.scenario;
  if (o.seed) c.seed = *o.seed;
  if (o.no_cvr) c.cvr_enabled = false;
  if (!o.allocation.empty()) {
    const auto a = cvrsim::parse_allocation(o.allocation);
    if (!a) throw cvrsim::Error("--allocation: expected head, dispersed or end, got '" + o.allocation + "'");
    c.allocation = *a;
  }
  if (!o.mode.empty()) {
    const auto m = cvrsim::parse_control_mode(o.mode);
    if (!m) throw cvrsim::Error("--mode: expected pf or voltvar, got '" + o.mode + "'");
    c.mode = *m;
  }
  if (o.penetration) {
    c.penetration_pct = *o.penetration;
    rc.penetrations = {*o.penetration};
  }
  if (auto msg = cvrsim::check_scenario_config(c); !msg.empty()) throw cvrsim::Error(msg);
  return rc;
}

int report_infeasible(const std::vector<cvrsim::TimeSeriesResult>& results) {
  int count = 0;
  for (const auto& r : results)
    for (const auto& h : r.hours)
      if (!h.feasible) ++count;
  if (count > 0) std::cerr << "warning: " << count << " infeasible hour(s); see the summary files\n";
  return count;
}

int emit(const Options& o, const cvrsim::RunConfig& rc, const std::vector<cvrsim::ScenarioConfig>& configs,
         const std::vector<cvrsim::TimeSeriesResult>& results) {
  const auto dir = cvrsim::prepare_run_directory(o.output, cvrsim::run_key(configs), o.force);
  cvrsim::emit_results(results, dir, rc.path.string(), rc.scenario.seed);
  report_infeasible(results);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_synth(const Options& o) {
  const cvrsim::RunConfig rc = base_config(o);
  const cvrsim::FeederNetwork net = cvrsim::scenario_base_feeder(rc.scenario);
  cvrsim::save_feeder(net, o.output);
  std::cout << o.output << ": " << net.buses.size() << " buses, " << net.lines.size() << " lines, "
            << net.loads.size() << " loads\n";
  return 0;
}

int cmd_run(const Options& o) {
  const cvrsim::RunConfig rc = base_config(o);
  const std::vector<cvrsim::ScenarioConfig> configs{rc.scenario};
  std::vector<cvrsim::TimeSeriesResult> results{cvrsim::run_scenario(rc.scenario)};
  return emit(o, rc, configs, results);
}

int cmd_matrix(const Options& o) {
  if (o.parallel < 1) throw cvrsim::Error("--parallel must be at least 1");
  const cvrsim::RunConfig rc = base_config(o);
  const auto configs = cvrsim::scenario_grid(rc.scenario, rc.penetrations);
  auto entries = cvrsim::run_matrix(configs, o.parallel);
  std::vector<cvrsim::TimeSeriesResult> results;
  int failures = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].ok()) {
      results.push_back(std::move(*entries[i].result));
    } else {
      ++failures;
      std::cerr << "error: scenario '" << configs[i].name << "': " << entries[i].error << "\n";
    }
  }
  emit(o, rc, configs, results);
  if (failures > 0) {
    std::cerr << "error: " << failures << " of " << configs.size() << " scenario(s) failed\n";
    return 1;
  }
  return 0;
}

int cmd_metrics(const Options& o) {
  const std::string table = cvrsim::recompute_summaries(o.run_dir);
  if (o.summary_out.empty() || o.summary_out == "-") {
    std::cout << table;
  } else {
    cvrsim::write_text_file(o.summary_out, table);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-static CVR simulation of PV-rich radial feeders"};
  app.require_subcommand(1);
  Options o;

  const auto scenario_flags = [&o](CLI::App* sub) {
    sub->add_option("--config,-c", o.config, "Scenario JSON file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Override the feeder seed");
  };
  const auto run_flags = [&o, &scenario_flags](CLI::App* sub) {
    scenario_flags(sub);
    sub->add_option("--output,-o", o.output, "Root directory for run directories")->capture_default_str();
    sub->add_flag("--no-cvr", o.no_cvr, "Hold the OLTC at tap 0");
    sub->add_option("--penetration", o.penetration, "PV penetration in percent of system peak");
    sub->add_flag("--force", o.force, "Overwrite an existing run directory");
  };

  auto* synth = app.add_subcommand("synth", "Write the synthetic feeder");
  scenario_flags(synth);
  synth->add_option("--output,-o", o.output, "Feeder file to write")->required();

  auto* run = app.add_subcommand("run", "Simulate one scenario over 24 hours");
  run_flags(run);
  run->add_option("--allocation", o.allocation, "head, dispersed or end");
  run->add_option("--mode", o.mode, "pf or voltvar");

  auto* matrix = app.add_subcommand("matrix", "Simulate allocation x mode x CVR on/off");
  run_flags(matrix);
  matrix->add_option("--parallel,-j", o.parallel, "Scenarios simulated concurrently")->capture_default_str();

  auto* metrics = app.add_subcommand("metrics", "Recompute summaries from a run directory");
  metrics->add_option("run_dir", o.run_dir, "Run directory holding manifest.json")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--output,-o", o.summary_out, "Summary file to write; '-' for stdout")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(o);
    if (run->parsed()) return cmd_run(o);
    if (matrix->parsed()) return cmd_matrix(o);
    return cmd_metrics(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
