#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>
#include <sstream>

#include "cvrsim/io.hpp"
#include "doctest.h"
#include "networks.hpp"

using namespace cvrsim;
namespace fs = std::filesystem;
namespace t = cvrsim::testing;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("cvrsim-test-" + hex64((std::uint64_t{rd()} << 32) | rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

const char* kTwoBus =
    "cvrsim-feeder 1\n"
    "# minimal feeder\n"
    "network source=S mva_base=1\n"
    "bus id=S phases=ABC base_v=7200\n"
    "bus id=N1 phases=ABC base_v=7200 feeder=1 distance=1\n"
    "line id=L1 from=S to=N1 length=1 z=0.3,0.6,0.1,0.3,0.1,0.3,0.3,0.6,0.1,0.3,0.3,0.6\n"
    "load bus=N1 phase=A p0=100 q0=30\n";

std::string with_line(std::string text, const std::string& line) { return text + line + "\n"; }

std::string flat_profile_text(int rows) {
  std::string s = "hour,load_multiplier,pv_multiplier\n";
  for (int h = 0; h < rows; ++h) s += std::to_string(h) + ",1.0,0\n";
  return s;
}

ScenarioConfig small_scenario(const std::string& name) {
  ScenarioConfig c;
  c.name = name;
  FeederNetwork net = t::three_phase_chain(3, 1.5);
  for (int i = 1; i <= 3; ++i)
    for (Phase p : kAllPhases) {
      ZipLoad l;
      l.bus = t::bus_name(i);
      l.phase = p;
      l.p0 = 120.0 + 30.0 * i;
      l.q0 = 0.3 * l.p0;
      net.loads.push_back(l);
    }
  c.feeder = std::make_shared<const FeederNetwork>(net);
  c.feeder_label = "chain";
  return c;
}

std::string expect_parse_error(const std::string& text, const std::string& source = "feeder.txt") {
  try {
    feeder_from_text(text, source);
  } catch (const ParseError& e) {
    return e.what();
  }
  FAIL("expected a parse error");
  return {};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CVRSIM_CLI_PATH) + " " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(format_12g(0.1) == "0.1");
  CHECK(format_12g(-0.0) == "0");
  CHECK(format_12g(1.0 / 3.0) == "0.333333333333");
  CHECK(format_exact(0.1) == "0.1");
  CHECK(std::stod(format_exact(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("minimal two-bus feeder file") {
  const FeederNetwork net = feeder_from_text(kTwoBus, "two.txt");
  REQUIRE(net.buses.size() == 2);
  CHECK(net.source_bus == "S");
  CHECK(net.buses[1].feeder_id == 1);
  REQUIRE(net.lines.size() == 1);
  CHECK(net.lines[0].impedance[0][1] == std::complex<double>(0.1, 0.3));
  CHECK(net.lines[0].impedance[2][0] == std::complex<double>(0.1, 0.3));
  REQUIRE(net.loads.size() == 1);
  CHECK(net.loads[0].p_coef == ZipCoefficients{});
  CHECK(net.loads[0].v0 == 1.0);
}

TEST_CASE("feeder parse errors name file, line and field") {
  const std::string bad_zip = with_line(kTwoBus, "load bus=N1 phase=B p0=50 zip_p=0.5,0.3,0.1");
  const std::string msg = expect_parse_error(bad_zip);
  CHECK(msg.find("feeder.txt:8:") == 0);
  CHECK(msg.find("field 'load'") != std::string::npos);
  CHECK(msg.find("load record at bus N1 phase B") != std::string::npos);

  try {
    feeder_from_text(bad_zip, "feeder.txt");
  } catch (const ParseError& e) {
    CHECK(e.line() == 8);
    CHECK(e.field() == "load");
  }

  CHECK(expect_parse_error(with_line(kTwoBus, "load bus=N1 phase=B p0=abc")).find("field 'p0'") != std::string::npos);
  CHECK(expect_parse_error(with_line(kTwoBus, "load bus=N1 phase=D p0=1")).find("field 'phase'") != std::string::npos);
  CHECK(expect_parse_error(with_line(kTwoBus, "load bus=N1 phase=A p0=1 color=red")).find("field 'color'") !=
        std::string::npos);
  CHECK(expect_parse_error(with_line(kTwoBus, "load bus=N1 phase=A p0=1 p0=2")).find("field 'p0'") !=
        std::string::npos);
  CHECK(expect_parse_error(with_line(kTwoBus, "switch id=X")).find("field 'kind'") != std::string::npos);
  CHECK(expect_parse_error(std::string("cvrsim-feeder 9\n") + (kTwoBus + 16)).find("field 'header'") !=
        std::string::npos);
  CHECK(expect_parse_error(with_line(kTwoBus, "line id=L2 from=N1 to=N2 length=1 z=1,2,3")).find("field 'z'") !=
        std::string::npos);

  CHECK_THROWS_AS(feeder_from_text(with_line(kTwoBus, "load bus=X phase=A p0=1"), "f"), Error);
  CHECK_THROWS_AS(load_feeder("/nonexistent/feeder.txt"), Error);
}

TEST_CASE("synthetic feeder round-trips field for field") {
  TempDir dir;
  FeederNetwork net = synthesize_feeder({});
  net = allocate_pv(net, AllocationKind::Dispersed, 60.0, ControlMode::VoltVar, default_load_profile());
  net.pv_units.front().mode = ConstantPowerFactor{};
  const fs::path file = dir.path / "feeder.txt";
  save_feeder(net, file);
  const FeederNetwork back = load_feeder(file);
  CHECK(back == net);
  CHECK(feeder_to_text(back) == read_text_file(file));

  const FeederNetwork plain = synthesize_feeder({});
  CHECK(feeder_from_text(feeder_to_text(plain), "mem") == plain);
}

TEST_CASE("profiles") {
  const Profiles flat = profiles_from_text(flat_profile_text(24), "p.csv");
  for (int h = 0; h < 24; ++h) {
    CHECK(flat.load[h] == 1.0);
    CHECK(flat.pv[h] == 0.0);
  }
  CHECK_THROWS_AS(profiles_from_text(flat_profile_text(23), "p.csv"), ParseError);
  CHECK_THROWS_AS(profiles_from_text(flat_profile_text(25), "p.csv"), ParseError);

  std::string bad_pv = flat_profile_text(24);
  bad_pv.replace(bad_pv.find("5,1.0,0"), 7, "5,1.0,1.2");
  try {
    profiles_from_text(bad_pv, "p.csv");
    FAIL("pv above 1 accepted");
  } catch (const ParseError& e) {
    CHECK(e.field() == "pv_multiplier");
    CHECK(e.line() == 7);
  }
  std::string text = flat_profile_text(24);
  text.replace(text.find("3,1.0,0"), 7, "3,x,0");
  CHECK_THROWS_AS(profiles_from_text(text, "p.csv"), ParseError);

  const Profiles bundled = load_profiles(fs::path(CVRSIM_SOURCE_DIR) / "data" / "default_profiles.csv");
  CHECK(std::max_element(bundled.pv.begin(), bundled.pv.end()) - bundled.pv.begin() == 13);
  CHECK(bundled.load == default_load_profile());
  CHECK(bundled.pv == default_pv_profile());
  CHECK(profiles_from_text(profiles_to_text(bundled), "mem").load == bundled.load);
}

TEST_CASE("scenario config files") {
  const RunConfig rc = load_run_config(fs::path(CVRSIM_SOURCE_DIR) / "configs" / "default.json");
  CHECK(rc.scenario.name == "default");
  CHECK(rc.scenario.allocation == AllocationKind::Dispersed);
  CHECK(rc.scenario.mode == ControlMode::VoltVar);
  CHECK(rc.scenario.penetration_pct == 60.0);
  CHECK(rc.scenario.load_profile == default_load_profile());
  CHECK(rc.scenario.synthesis == SynthesisParams{});

  const std::string good = "{\"format\": \"cvrsim-scenario 1\",\n \"allocation\": \"head\",\n \"cvr\": false}";
  const RunConfig parsed = run_config_from_json(good, "c.json");
  CHECK(parsed.scenario.allocation == AllocationKind::Head);
  CHECK_FALSE(parsed.scenario.cvr_enabled);

  try {
    run_config_from_json("{\"format\": \"cvrsim-scenario 1\",\n \"mode\": \"pf\",\n \"alocation\": \"head\"}", "c.json");
    FAIL("unknown key accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.field() == "alocation");
    CHECK(std::string(e.what()).find("c.json:3:") == 0);
  }
  try {
    run_config_from_json("{\"format\": \"cvrsim-scenario 1\",\n\n \"penetration_pct\": -4}", "c.json");
    FAIL("negative penetration accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.field() == "penetration_pct");
  }
  try {
    run_config_from_json("{\"format\": \"cvrsim-scenario 1\",\n \"oltc\": {\"min_tap\": -8}}", "c.json");
    FAIL("inconsistent OLTC range accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.field() == "oltc");
  }
  CHECK_THROWS_AS(run_config_from_json("{\"allocation\": \"head\"}", "c.json"), ParseError);
  CHECK_THROWS_AS(run_config_from_json("{\"format\": \"cvrsim-scenario 1\", ", "c.json"), ParseError);
  CHECK_THROWS_AS(run_config_from_json("{\"format\": \"cvrsim-scenario 1\", \"allocation\": \"middle\"}", "c.json"),
                  ParseError);
}

TEST_CASE("run keys identify the scenario set") {
  const ScenarioConfig a = small_scenario("a");
  ScenarioConfig b = a;
  CHECK(run_key({a}) == run_key({b}));
  b.penetration_pct = 30.0;
  CHECK(run_key({a}) != run_key({b}));
  CHECK(run_key({a, b}) != run_key({b, a}));
  CHECK(run_key({}).size() == 16);
}

TEST_CASE("emit_results file contract") {
  TempDir dir;
  const RunManifest empty = emit_results({}, dir.path / "empty");
  CHECK(empty.files.empty());
  CHECK(fs::exists(dir.path / "empty" / "manifest.json"));

  const TimeSeriesResult one = run_scenario(small_scenario("one"));
  const RunManifest m = emit_results({one}, dir.path / "one", "cfg.json", 7);
  REQUIRE(m.files.size() == 3);
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir.path / "one")) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 4);
  CHECK(m.seed == 7);
  CHECK(m.tool_version == kToolVersion);
  for (const ManifestFile& f : m.files) CHECK(f.fnv1a64 == hex64(fnv1a64(read_text_file(dir.path / "one" / f.name))));

  const RunManifest back = manifest_from_json(read_text_file(dir.path / "one" / "manifest.json"), "manifest.json");
  CHECK(back.files.size() == 3);
  REQUIRE(back.scenarios.size() == 1);
  CHECK(back.scenarios[0].name == "one");
  CHECK(back.config_path == "cfg.json");

  const std::string hourly = read_text_file(dir.path / "one" / "one_hourly.csv");
  const auto records = read_hourly_table(hourly, "one_hourly.csv");
  REQUIRE(records.size() == 24);
  CHECK(records[13].taps == one.hours[13].taps);
  CHECK(std::abs(records[13].load_p - one.hours[13].load_p) <= 1e-11 * one.hours[13].load_p);
}

TEST_CASE("emission is byte-identical across reruns") {
  TempDir dir;
  const ScenarioConfig c = small_scenario("det");
  emit_results({run_scenario(c)}, dir.path / "a");
  emit_results({run_scenario(c)}, dir.path / "b");
  for (const char* f : {"det_hourly.csv", "det_summary.csv", "det_voltages.csv"}) {
    const std::string a = read_text_file(dir.path / "a" / f);
    const std::string b = read_text_file(dir.path / "b" / f);
    CHECK(a == b);
    CHECK_FALSE(a.empty());
  }
  const auto ma = manifest_from_json(read_text_file(dir.path / "a" / "manifest.json"), "a");
  const auto mb = manifest_from_json(read_text_file(dir.path / "b" / "manifest.json"), "b");
  REQUIRE(ma.files.size() == mb.files.size());
  for (std::size_t i = 0; i < ma.files.size(); ++i) CHECK(ma.files[i].fnv1a64 == mb.files[i].fnv1a64);
}

TEST_CASE("summaries pair CVR counterparts and can be recomputed") {
  TempDir dir;
  ScenarioConfig on = small_scenario("on");
  ScenarioConfig off = on;
  off.name = "off";
  off.cvr_enabled = false;
  const auto results = std::vector<TimeSeriesResult>{run_scenario(on), run_scenario(off)};
  CHECK(pair_cvr_counterparts({&results[0], &results[1]}) == std::vector<int>{1, -1});

  emit_results(results, dir.path / "run");
  const std::string on_summary = read_text_file(dir.path / "run" / "on_summary.csv");
  const std::string off_summary = read_text_file(dir.path / "run" / "off_summary.csv");
  CHECK(off_summary.find(",NA,") != std::string::npos);
  CHECK(on_summary.find(",NA,") == std::string::npos);

  const std::string combined = recompute_summaries(dir.path / "run");
  CHECK(combined.find("\non,") != std::string::npos);
  CHECK(combined.find("\noff,") != std::string::npos);

  write_text_file(dir.path / "run" / "on_hourly.csv", "tampered\n");
  CHECK_THROWS_AS(recompute_summaries(dir.path / "run"), Error);
}

TEST_CASE("run directories are not silently overwritten") {
  TempDir dir;
  const fs::path first = prepare_run_directory(dir.path, "abc", false);
  CHECK(first == dir.path / "run-abc");
  CHECK(fs::is_directory(first));
  CHECK_THROWS_AS(prepare_run_directory(dir.path, "abc", false), Error);
  CHECK(prepare_run_directory(dir.path, "abc", true) == first);
}

TEST_CASE("command-line entry points") {
  TempDir dir;
  const fs::path config = fs::path(CVRSIM_SOURCE_DIR) / "configs" / "default.json";
  const fs::path log = dir.path / "log.txt";

  CHECK(run_cli("frobnicate", log) != 0);
  CHECK(read_text_file(log).find("Usage") != std::string::npos);
  CHECK(run_cli("run --config " + config.string() + " --bogus", log) != 0);
  CHECK(run_cli("run --config " + config.string() + " --allocation middle -o " + (dir.path / "x").string(), log) != 0);
  CHECK(read_text_file(log).find("--allocation") != std::string::npos);

  const fs::path out = dir.path / "results";
  REQUIRE(run_cli("run --config " + config.string() + " -o " + out.string(), log) == 0);
  std::string run_dir = read_text_file(log);
  run_dir.erase(run_dir.find_last_not_of("\n") + 1);
  for (const char* f : {"default_hourly.csv", "default_summary.csv", "default_voltages.csv", "manifest.json"})
    CHECK(fs::exists(fs::path(run_dir) / f));
  CHECK(run_cli("run --config " + config.string() + " -o " + out.string(), log) != 0);
  CHECK(run_cli("run --config " + config.string() + " -o " + out.string() + " --force", log) == 0);

  REQUIRE(run_cli("metrics " + run_dir, log) == 0);
  CHECK(read_text_file(log).find("\ndefault,dispersed,voltvar,60,") != std::string::npos);

  const fs::path feeder = dir.path / "feeder.txt";
  REQUIRE(run_cli("synth --config " + config.string() + " -o " + feeder.string(), log) == 0);
  CHECK(load_feeder(feeder).buses.size() == 240);
}
