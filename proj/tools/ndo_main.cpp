// ndo: steady states of driven-dissipative spin chains with a neural density
// operator. Subcommands: oracle, train, analyze, selftest.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ndo/errors.hpp"
#include "ndo/run_config.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kNoConvergence = 4 };

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool reproducible = false;
  std::string output;
};

void add_common(CLI::App* app, Common& c) {
  auto* cfg = app->add_option("--config", c.config, "JSON run config")->check(CLI::ExistingFile);
  auto* pre = app->add_option("--preset", c.preset, "named experiment")
                  ->check(CLI::IsMember(ndo::preset_names()));
  cfg->excludes(pre);
  app->add_option("--output", c.output, "output directory");
}

int resolve_threads(const std::optional<int>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("NDO_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw ndo::ConfigError(std::string("NDO_THREADS is not an integer: ") + env);
    }
  }
  return 1;
}

ndo::RunConfig load(const Common& c) {
  if (!c.config.empty()) return ndo::load_config(c.config);
  if (!c.preset.empty()) return ndo::parse_config(c.preset);
  throw ndo::ConfigError("one of --config or --preset is required");
}

int run_oracle(const Common& c, bool dump_rho) {
  const ndo::RunConfig cfg = load(c);
  const std::filesystem::path dir = c.output.empty() ? cfg.output_dir : std::filesystem::path(c.output);
  const auto result = ndo::run_oracle(cfg.chain, dir, dump_rho);
  std::cout << "populations:";
  for (double p : result.site_excited_population) std::cout << ' ' << p;
  std::cout << "\nm_z: " << result.magnetization_z << "\nwritten: " << (dir / "oracle.json")
            << '\n';
  return kOk;
}

int run_train(const Common& c) {
  ndo::RunOptions options;
  options.seed = c.seed;
  options.threads = resolve_threads(c.threads);
  options.reproducible = c.reproducible;
  if (!c.preset.empty() && c.config.empty()) {
    ndo::run_preset(c.preset, c.output.empty() ? std::string("runs") : c.output, options);
    return kOk;
  }
  ndo::RunConfig cfg = load(c);
  if (!c.output.empty()) cfg.output_dir = c.output;
  ndo::run_train(cfg, options);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("ndo");
  spdlog::set_default_logger(logger);

  CLI::App app{"Neural density operator steady-state solver"};
  app.require_subcommand(1);

  Common oracle_opts;
  bool dump_rho = false;
  auto* oracle = app.add_subcommand("oracle", "dense Lindblad steady state (benchmark)");
  add_common(oracle, oracle_opts);
  oracle->add_flag("--dump-rho", dump_rho, "also write rho.bin");

  Common train_opts;
  auto* train = app.add_subcommand("train", "variational training run or full preset");
  add_common(train, train_opts);
  train->add_option("--seed", train_opts.seed, "overrides training and sampler seeds");
  train->add_option("--threads", train_opts.threads, "worker threads (default $NDO_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  train->add_flag("--reproducible", train_opts.reproducible, "fixed-order reductions");

  std::string records, oracle_json, deviation_out;
  int window = ndo::kSmoothingWindow;
  auto* analyze = app.add_subcommand("analyze", "per-site relative deviation from the oracle");
  analyze->add_option("--records", records, "records.csv")->required()->check(CLI::ExistingFile);
  analyze->add_option("--oracle", oracle_json, "oracle.json")->required()->check(CLI::ExistingFile);
  analyze->add_option("--output", deviation_out, "deviation CSV")->required();
  analyze->add_option("--window", window, "trailing average window")->check(CLI::PositiveNumber);

  auto* selftest = app.add_subcommand("selftest", "run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (oracle->parsed()) return run_oracle(oracle_opts, dump_rho);
    if (train->parsed()) return run_train(train_opts);
    if (analyze->parsed()) {
      const auto table = ndo::analyze(records, oracle_json, deviation_out, window);
      std::cout << "final site-averaged relative deviation: "
                << table.site_average_raw.back() << '\n';
      return kOk;
    }
    if (selftest->parsed()) return ndo::selftest(std::cout) == 0 ? kOk : kNumerical;
  } catch (const ndo::ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const ndo::ArgumentError& e) {
    spdlog::error("invalid argument: {}", e.what());
    return kConfig;
  } catch (const ndo::CapacityError& e) {
    spdlog::error("too large: {}", e.what());
    return kConfig;
  } catch (const ndo::TimeoutError& e) {
    spdlog::error("no convergence: {} (last residual {:.3e})", e.what(), e.last_residual());
    return kNoConvergence;
  } catch (const ndo::StuckChainError& e) {
    spdlog::error("sampler: {}", e.what());
    return kNumerical;
  } catch (const std::runtime_error& e) {
    spdlog::error("{}", e.what());
    return kNumerical;
  }
  return kOk;
}
