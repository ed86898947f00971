#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cvrsim/metrics.hpp"
#include "cvrsim/network.hpp"
#include "cvrsim/scenario.hpp"

namespace cvrsim {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kFeederFormat = "cvrsim-feeder 1";
inline constexpr const char* kProfilesFormat = "cvrsim-profiles 1";
inline constexpr const char* kScenarioFormat = "cvrsim-scenario 1";
inline constexpr const char* kHourlyFormat = "cvrsim-hourly 1";
inline constexpr const char* kSummaryFormat = "cvrsim-summary 1";
inline constexpr const char* kSnapshotFormat = "cvrsim-voltages 1";
inline constexpr const char* kManifestFormat = "cvrsim-manifest 1";

// 64-bit FNV-1a over raw bytes, as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Shortest decimal text that reads back to the same double.
std::string format_exact(double value);
// Decimal text with 12 significant digits.
std::string format_12g(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Feeder description: a version line followed by one record per line,
// `kind key=value ...`; '#' starts a comment.
std::string feeder_to_text(const FeederNetwork& network);
FeederNetwork feeder_from_text(std::string_view text, const std::string& source_name);
FeederNetwork load_feeder(const std::filesystem::path& path);
void save_feeder(const FeederNetwork& network, const std::filesystem::path& path);

struct Profiles {
  HourlyProfile load{};
  HourlyProfile pv{};
};

// CSV with columns hour,load_multiplier,pv_multiplier and exactly 24 rows.
Profiles profiles_from_text(std::string_view text, const std::string& source_name);
Profiles load_profiles(const std::filesystem::path& path);
std::string profiles_to_text(const Profiles& profiles);

// Scenario description plus the penetration levels swept by `matrix`.
struct RunConfig {
  std::filesystem::path path;  // empty when built in code
  ScenarioConfig scenario;
  std::vector<double> penetrations{60.0};
};

// JSON object; relative feeder and profile paths resolve against the config's
// directory. Missing fields keep their defaults.
RunConfig run_config_from_json(std::string_view text, const std::string& source_name,
                               const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON of everything that affects a scenario's results.
std::string canonical_scenario_json(const ScenarioConfig& config);
// Hash identifying a set of scenarios; names the run directory.
std::string run_key(const std::vector<ScenarioConfig>& configs);

struct ManifestFile {
  std::string name;  // relative to the run directory
  std::string fnv1a64;
};

struct ManifestScenario {
  std::string name;
  std::string allocation;
  std::string mode;
  double penetration_pct = 0.0;
  bool cvr_enabled = false;
  std::uint64_t seed = 0;
  std::string feeder;
  int snapshot_hour = 0;
};

struct RunManifest {
  std::string config_path;
  std::string output_dir;
  std::vector<ManifestFile> files;
  std::vector<ManifestScenario> scenarios;
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(std::string_view text, const std::string& source_name);

// Creates <root>/run-<key>. Throws Error when it already exists unless force.
std::filesystem::path prepare_run_directory(const std::filesystem::path& root, const std::string& key, bool force);

// CVR-off counterpart index for each result, or -1.
std::vector<int> pair_cvr_counterparts(const std::vector<const TimeSeriesResult*>& results);

std::string hourly_table(const TimeSeriesResult& result);
std::string summary_table(const std::vector<std::pair<std::string, SummaryMetrics>>& rows,
                          const std::vector<const ScenarioConfig*>& configs);
std::string snapshot_table(const TimeSeriesResult& result, int hour);

// Writes <name>_hourly.csv, <name>_summary.csv and <name>_voltages.csv per
// scenario plus manifest.json into output_dir.
RunManifest emit_results(const std::vector<TimeSeriesResult>& results, const std::filesystem::path& output_dir,
                         const std::string& config_path = {}, std::uint64_t seed = 0);

// Hourly records read back from an emitted table; bus voltages are not stored.
std::vector<HourRecord> read_hourly_table(std::string_view text, const std::string& source_name);

// Rebuilds summaries from the hourly tables listed in a run's manifest after
// checking every file hash. Returns the combined summary table.
std::string recompute_summaries(const std::filesystem::path& run_dir);

}  // namespace cvrsim
