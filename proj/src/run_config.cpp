#include "ndo/run_config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <Eigen/Core>
#include <spdlog/spdlog.h>

#include "ndo/errors.hpp"
#include "ndo/network.hpp"

namespace ndo {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

// Optional "n_sites" echo inside the sampler/training blocks.
void check_block_sites(json& block, const char* name, int chain_sites) {
  if (!block.is_object() || !block.contains("n_sites")) return;
  const int n = block["n_sites"].get<int>();
  if (n != chain_sites) {
    throw ConfigError(std::string(name) + ".n_sites = " + std::to_string(n) +
                      " does not match chain.n_sites = " + std::to_string(chain_sites));
  }
  block.erase("n_sites");
}

RunConfig base_config(const ChainParameters& chain, Strategy strategy, int n_samples,
                      double nu, int iterations, const std::string& label) {
  RunConfig c;
  c.chain = chain;
  c.sampler.strategy = strategy;
  c.sampler.n_samples = n_samples;
  c.training.learning_rate = nu;
  c.training.n_iterations = iterations;
  c.label = label;
  c.output_dir = label;
  return c;
}

ChainParameters symmetric_chain(int n) { return ChainParameters::uniform(n, 0.42, 0.21, 0.20); }

ChainParameters driven_chain(int n) {
  return ChainParameters::boundary_driven(n, 0.42, 0.20, 0.20, 0.21, 0.20, 0.20, 0.21);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  try {
    chain.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
  for (int s : sampler.exact_sites) {
    if (s < 0 || s >= chain.n_sites) {
      throw ConfigError("sampler.exact_sites entry " + std::to_string(s + 1) +
                        " is outside chain.n_sites = " + std::to_string(chain.n_sites));
    }
  }
  try {
    sampler.validate(chain.n_sites);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("sampler: ") + e.what());
  }
  try {
    resolved_training().validate(chain.n_sites);
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("training: ") + e.what());
  }
  if (sampler.strategy == Strategy::Exact && chain.n_sites > kMaxLiouvillianSites) {
    throw ConfigError("sampler.strategy = exact needs chain.n_sites <= " +
                      std::to_string(kMaxLiouvillianSites));
  }
  if (label.empty()) throw ConfigError("label: must not be empty");
}

TrainingConfig RunConfig::resolved_training() const {
  TrainingConfig t = training;
  t.sampler = sampler;
  return t;
}

RunConfig parse_config(std::string_view text) {
  std::string trimmed(text);
  const auto first = trimmed.find_first_not_of(" \t\r\n");
  const auto last = trimmed.find_last_not_of(" \t\r\n");
  trimmed = first == std::string::npos ? "" : trimmed.substr(first, last - first + 1);
  if (!trimmed.empty() && trimmed.front() != '{') {
    const auto& names = preset_names();
    if (std::find(names.begin(), names.end(), trimmed) == names.end()) {
      throw ConfigError("'" + trimmed + "' is neither a JSON object nor a preset name");
    }
    return make_preset(trimmed).runs.front();
  }

  json j = parse_json(trimmed, "config");
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> known = {"chain", "sampler", "training", "output_dir",
                                              "label"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("config: unknown key '" + key + "'");
  }
  if (!j.contains("chain")) throw ConfigError("config: missing key 'chain'");

  RunConfig c;
  c.chain = j["chain"].get<ChainParameters>();
  json sampler = j.value("sampler", json::object());
  json training = j.value("training", json::object());
  check_block_sites(sampler, "sampler", c.chain.n_sites);
  check_block_sites(training, "training", c.chain.n_sites);
  c.sampler = sampler.get<SamplerConfig>();
  c.training = training.get<TrainingConfig>();
  try {
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("label")) c.label = j["label"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

json to_json(const RunConfig& config) {
  json sampler = config.sampler;
  if (config.sampler.exact_sites.empty()) {
    std::vector<int> sites;
    for (int s : config.sampler.resolved_exact_sites(config.chain.n_sites)) sites.push_back(s + 1);
    sampler["exact_sites"] = sites;
  }
  sampler["burn_in"] = config.sampler.resolved_burn_in();
  return {{"label", config.label},
          {"output_dir", config.output_dir.string()},
          {"chain", config.chain},
          {"sampler", sampler},
          {"training", config.training}};
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fig2", "fig3a", "fig3b", "fig4a", "fig4b"};
  return names;
}

Preset make_preset(std::string_view name) {
  Preset p;
  p.name = std::string(name);
  if (name == "fig2") {
    p.description = "symmetric N=10, metropolis vs accept_only, N_s=20000, nu=0.1";
    p.runs.push_back(
        base_config(symmetric_chain(10), Strategy::Metropolis, 20000, 0.1, 100, "metropolis"));
    p.runs.push_back(
        base_config(symmetric_chain(10), Strategy::AcceptOnly, 20000, 0.1, 100, "accept_only"));
  } else if (name == "fig3a") {
    p.description = "boundary-driven N=6, exact enumeration, nu=0.1";
    p.runs.push_back(base_config(driven_chain(6), Strategy::Exact, 1, 0.1, 2000, "exact"));
  } else if (name == "fig3b") {
    p.description = "boundary-driven N=6, metropolis, N_s=20000, nu=0.1; "
                    "comparison at nu=0.05, N_s=40000, M/N=K/N=2";
    p.runs.push_back(
        base_config(driven_chain(6), Strategy::Metropolis, 20000, 0.1, 500, "metropolis"));
    RunConfig fine =
        base_config(driven_chain(6), Strategy::Metropolis, 40000, 0.05, 500, "metropolis_fine");
    fine.training.hidden_density = 2.0;
    fine.training.mixing_density = 2.0;
    p.runs.push_back(fine);
  } else if (name == "fig4a") {
    p.description = "boundary-driven N=10, hybrid vs metropolis, N_s=40000, nu=0.05";
    p.runs.push_back(
        base_config(driven_chain(10), Strategy::Hybrid, 40000, 0.05, 300, "hybrid"));
    p.runs.push_back(
        base_config(driven_chain(10), Strategy::Metropolis, 40000, 0.05, 300, "metropolis"));
  } else if (name == "fig4b") {
    p.description = "boundary-driven N=16, hybrid, N_s=40000, nu in {0.05, 0.025}";
    p.long_running = true;
    p.has_benchmark = false;
    p.runs.push_back(
        base_config(driven_chain(16), Strategy::Hybrid, 40000, 0.05, 500, "hybrid_nu0.05"));
    p.runs.push_back(
        base_config(driven_chain(16), Strategy::Hybrid, 40000, 0.025, 500, "hybrid_nu0.025"));
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  for (auto& run : p.runs) run.validate();
  return p;
}

json oracle_to_json(const ChainParameters& chain, const SteadyStateResult& result,
                    double wall_time) {
  json j = to_json(result);
  j["schema"] = kOracleSchema;
  j["chain"] = chain;
  j["purity"] = result.rho.purity();
  j["trace_error"] = std::abs(result.rho.trace() - Complex(1.0, 0.0));
  j["hermiticity_error"] = result.rho.hermiticity_error();
  j["wall_time"] = wall_time;
  return j;
}

SteadyStateResult run_oracle(const ChainParameters& chain, const fs::path& dir, bool write_rho) {
  try {
    chain.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
  if (chain.n_sites > kMaxDenseSites) {
    throw CapacityError("dense oracle supports at most " + std::to_string(kMaxDenseSites) +
                        " sites");
  }
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  SteadyStateResult result =
      find_steady_state(chain, DenseDensityMatrix::maximally_mixed(chain.n_sites));
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("oracle N={} converged in {} steps ({:.1f} s), residual {:.2e}", chain.n_sites,
               result.steps_taken, wall, result.residual);
  write_text(dir / "oracle.json", oracle_to_json(chain, result, wall).dump(2) + "\n");
  if (write_rho) write_rho_dump(dir / "rho.bin", result.rho);
  return result;
}

std::vector<double> read_oracle_populations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read oracle " + path.string());
  try {
    const json j = json::parse(in);
    return j.at("site_excited_population").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TrainingResult run_train(RunConfig config, const RunOptions& options) {
  if (options.seed) {
    config.training.seed = *options.seed;
    config.sampler.seed = *options.seed;
  }
  config.training.threads = std::max(1, options.threads);
  config.validate();

  const fs::path dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output_dir: cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "config.json", to_json(config).dump(2) + "\n");

  const int n = config.chain.n_sites;
  const TrainingConfig training = config.resolved_training();
  const NdoParameters initial =
      init_random(n, training.hidden_units(n), training.mixing_units(n), training.seed);

  std::ofstream csv(dir / "records.csv");
  if (!csv) throw ConfigError("cannot write " + (dir / "records.csv").string());
  write_records_csv(csv, {}, n);

  TrainingHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& rec) {
    // rows are appended as they arrive so partial runs stay readable
    std::ostringstream row;
    write_records_csv(row, {rec}, n);
    const std::string text = row.str();
    csv << text.substr(text.find('\n') + 1);
    csv.flush();
    if (rec.iteration % 10 == 0) {
      spdlog::info("[{}] iter {} cost {:.4e} acc {:.3f} mz {:.5f}", config.label, rec.iteration,
                   rec.cost_estimate, rec.acceptance_rate, rec.magnetization_z);
    }
  };
  if (training.snapshot_every > 0) {
    fs::create_directories(dir / "snapshots");
    hooks.on_snapshot = [&](int iteration, const NdoParameters& params) {
      std::ostringstream name;
      name << "iter_" << std::setw(6) << std::setfill('0') << iteration + 1 << ".json";
      write_text(dir / "snapshots" / name.str(),
                 checkpoint_to_json(params, training.seed).dump(2) + "\n");
    };
  }

  const std::string started = utc_timestamp();
  const auto t0 = std::chrono::steady_clock::now();
  TrainingResult result = run_training(config.chain, training, initial, hooks);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_text(dir / "checkpoint.json",
             checkpoint_to_json(result.final_params, training.seed).dump(2) + "\n");
  const json metadata = {
      {"schema", kRunSchema},
      {"label", config.label},
      {"version", kVersion},
      {"started_utc", started},
      {"wall_time", wall},
      {"seeds", {{"training", training.seed}, {"sampler", training.sampler.seed}}},
      {"threads", training.threads},
      {"reproducible", options.reproducible},
      {"n_real_parameters", result.final_params.n_real_parameters()},
      {"n_iterations", result.records.size()},
      {"final_cost", result.records.empty() ? 0.0 : result.records.back().cost_estimate},
      {"versions",
       {{"ndo", kVersion},
        {"compiler", __VERSION__},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) +
                       "." + std::to_string(SPDLOG_VER_PATCH)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}}};
  write_text(dir / "metadata.json", metadata.dump(2) + "\n");
  spdlog::info("[{}] finished {} iterations in {:.1f} s", config.label, result.records.size(),
               wall);
  return result;
}

DeviationTable relative_deviations(const std::vector<IterationRecord>& records,
                                   const std::vector<double>& benchmark, int window) {
  DeviationTable t;
  t.n_sites = static_cast<int>(benchmark.size());
  if (t.n_sites == 0) throw ArgumentError("empty benchmark");
  double bench_avg = 0.0;
  for (double b : benchmark) {
    if (!(b > 0.0)) throw ArgumentError("benchmark populations must be positive");
    bench_avg += b;
  }
  bench_avg /= t.n_sites;

  std::vector<std::vector<double>> pops(t.n_sites);
  std::vector<double> avg;
  for (const auto& rec : records) {
    if (static_cast<int>(rec.site_excited_population.size()) != t.n_sites) {
      throw ArgumentError("record at iteration " + std::to_string(rec.iteration) + " has " +
                          std::to_string(rec.site_excited_population.size()) +
                          " sites, benchmark has " + std::to_string(t.n_sites));
    }
    t.iterations.push_back(rec.iteration);
    double s = 0.0;
    for (int i = 0; i < t.n_sites; ++i) {
      pops[i].push_back(rec.site_excited_population[i]);
      s += rec.site_excited_population[i];
    }
    avg.push_back(s / t.n_sites);
  }
  std::vector<std::vector<double>> smooth(t.n_sites);
  for (int i = 0; i < t.n_sites; ++i) smooth[i] = trailing_moving_average(pops[i], window);
  const auto avg_smooth = trailing_moving_average(avg, window);

  const std::size_t rows = records.size();
  t.raw.assign(rows, std::vector<double>(t.n_sites));
  t.smoothed.assign(rows, std::vector<double>(t.n_sites));
  for (std::size_t r = 0; r < rows; ++r) {
    for (int i = 0; i < t.n_sites; ++i) {
      t.raw[r][i] = (pops[i][r] - benchmark[i]) / benchmark[i];
      t.smoothed[r][i] = (smooth[i][r] - benchmark[i]) / benchmark[i];
    }
    t.site_average_raw.push_back((avg[r] - bench_avg) / bench_avg);
    t.site_average_smoothed.push_back((avg_smooth[r] - bench_avg) / bench_avg);
  }
  return t;
}

void write_deviation_csv(std::ostream& out, const DeviationTable& t) {
  out << "iter";
  for (int i = 1; i <= t.n_sites; ++i) out << ",dev" << i;
  for (int i = 1; i <= t.n_sites; ++i) out << ",smooth_dev" << i;
  out << ",dev_avg,smooth_dev_avg\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < t.iterations.size(); ++r) {
    out << t.iterations[r];
    for (double d : t.raw[r]) out << ',' << d;
    for (double d : t.smoothed[r]) out << ',' << d;
    out << ',' << t.site_average_raw[r] << ',' << t.site_average_smoothed[r] << '\n';
  }
}

DeviationTable analyze(const fs::path& records_csv, const fs::path& oracle_json,
                       const fs::path& output_csv, int window) {
  std::ifstream in(records_csv);
  if (!in) throw ConfigError("cannot read records " + records_csv.string());
  const auto records = read_records_csv(in);
  if (records.empty()) throw ConfigError(records_csv.string() + ": no records");
  const auto benchmark = read_oracle_populations(oracle_json);
  DeviationTable table;
  try {
    table = relative_deviations(records, benchmark, window);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  std::ofstream out(output_csv);
  if (!out) throw ConfigError("cannot write " + output_csv.string());
  write_deviation_csv(out, table);
  return table;
}

void run_preset(std::string_view name, const fs::path& root, const RunOptions& options) {
  const Preset preset = make_preset(name);
  const fs::path base = root / preset.name;
  fs::create_directories(base);
  spdlog::info("preset {}: {}", preset.name, preset.description);
  if (preset.has_benchmark) run_oracle(preset.runs.front().chain, base, options.write_rho);
  for (RunConfig run : preset.runs) {
    run.output_dir = base / run.label;
    run_train(run, options);
    if (preset.has_benchmark) {
      const auto table = analyze(run.output_dir / "records.csv", base / "oracle.json",
                                 run.output_dir / "deviation.csv");
      spdlog::info("[{}] final site-averaged relative deviation {:.3f}%", run.label,
                   100.0 * table.site_average_raw.back());
    }
  }
}

}  // namespace ndo
