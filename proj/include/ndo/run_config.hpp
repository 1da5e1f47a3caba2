#pragma once

// Run configuration, named experiment presets and the on-disk artifacts the
// command-line tool produces.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndo/model.hpp"
#include "ndo/oracle.hpp"
#include "ndo/sampling.hpp"
#include "ndo/training.hpp"

namespace ndo {

inline constexpr const char* kRunSchema = "ndo-run/1";
inline constexpr const char* kOracleSchema = "ndo-oracle/1";
inline constexpr int kSmoothingWindow = 50;

struct RunConfig {
  ChainParameters chain;
  SamplerConfig sampler;
  TrainingConfig training;  // its sampler field is ignored, see resolved_training
  std::filesystem::path output_dir = "runs/default";
  std::string label = "run";

  /// Throws ConfigError naming the offending keys.
  void validate() const;
  TrainingConfig resolved_training() const;
};

/// Strict parse of a JSON run config. A bare preset name ("fig3b") expands
/// to the first run of that preset. Errors carry the key path.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
/// Fully resolved form, every default written out.
nlohmann::json to_json(const RunConfig& config);

struct Preset {
  std::string name;
  std::string description;
  std::vector<RunConfig> runs;
  bool long_running = false;
  /// False when the chain is too long for the dense benchmark.
  bool has_benchmark = true;
};

const std::vector<std::string>& preset_names();
Preset make_preset(std::string_view name);

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides both training and sampler seeds
  int threads = 1;
  bool reproducible = true;
  bool write_rho = false;
};

/// Steady state of `chain`, written as oracle.json (plus rho.bin on request)
/// into `dir`.
SteadyStateResult run_oracle(const ChainParameters& chain, const std::filesystem::path& dir,
                             bool write_rho = false);

nlohmann::json oracle_to_json(const ChainParameters& chain, const SteadyStateResult& result,
                              double wall_time);
/// Site populations stored in an oracle.json.
std::vector<double> read_oracle_populations(const std::filesystem::path& path);

/// Trains one configuration and writes config.json, records.csv,
/// checkpoint.json, metadata.json and snapshots/ into config.output_dir.
TrainingResult run_train(RunConfig config, const RunOptions& options);

/// Signed relative deviation (p - p_ref) / p_ref per iteration and site, raw
/// and trailing-averaged, plus the same for the site average.
struct DeviationTable {
  int n_sites = 0;
  std::vector<int> iterations;
  std::vector<std::vector<double>> raw;       // [iteration][site]
  std::vector<std::vector<double>> smoothed;  // [iteration][site]
  std::vector<double> site_average_raw;
  std::vector<double> site_average_smoothed;
};

DeviationTable relative_deviations(const std::vector<IterationRecord>& records,
                                   const std::vector<double>& benchmark,
                                   int window = kSmoothingWindow);
void write_deviation_csv(std::ostream& out, const DeviationTable& table);

/// Joins records.csv with oracle.json and writes the deviation CSV.
DeviationTable analyze(const std::filesystem::path& records_csv,
                       const std::filesystem::path& oracle_json,
                       const std::filesystem::path& output_csv, int window = kSmoothingWindow);

/// Oracle, every training run and the analysis of a preset under `root`.
void run_preset(std::string_view name, const std::filesystem::path& root,
                const RunOptions& options);

/// Fast invariant checks over every module. Returns the number of failures
/// and logs one line per check.
int selftest(std::ostream& log);

}  // namespace ndo
