#pragma once

// Variational steady-state search: minimise ||L rho||^2 / ||rho||^2 over the
// network parameters with plain stochastic gradient descent.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndo/model.hpp"
#include "ndo/network.hpp"
#include "ndo/sampling.hpp"

namespace ndo {

struct TrainingConfig {
  double learning_rate = 0.1;
  int n_iterations = 100;
  SamplerConfig sampler;
  double hidden_density = 1.0;  // M / N
  double mixing_density = 1.0;  // K / N
  std::uint64_t seed = 1;
  int snapshot_every = 0;  // 0 disables snapshots
  int threads = 1;

  void validate(int n_sites) const;
  int hidden_units(int n_sites) const;
  int mixing_units(int n_sites) const;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
/// Reads the training block only; the sampler block is parsed separately.
void from_json(const nlohmann::json& j, TrainingConfig& c);

struct IterationRecord {
  int iteration = 0;
  double cost_estimate = 0.0;
  std::vector<double> site_excited_population;
  double magnetization_z = 0.0;
  double acceptance_rate = 0.0;
  double wall_time = 0.0;  // seconds spent in this iteration
};

/// Diagonal operator given by its value on each basis configuration, or a
/// general one given by its row entries X(s, xi).
struct Observable {
  std::function<std::vector<ConfigAmplitude>(const SpinConfiguration&)> row;

  static Observable identity();
  static Observable sigma_z(int site);
  static Observable excited(int site);  // sigma^+ sigma^-
};

/// sum over connected elements of L(pair -> m) rho(m) / rho(pair)
Complex local_liouvillian_estimator(const NdoParameters& params, const SamplePair& pair,
                                    const ChainParameters& chain);

/// sum_n w_n |L~(n)|^2
double estimate_cost(const NdoParameters& params, const SampleBatch& batch,
                     const ChainParameters& chain);

struct GradientEstimate {
  std::vector<double> gradient;  // flat layout, n_p entries
  double cost = 0.0;
};

/// Gradient of the normalized cost in the flat real layout:
///   2 Re{ E[conj(L~) sum_m L(n->m) rho_m/rho_n O(m)] - E[O] E[|L~|^2] }.
/// `threads` only affects speed; the reduction order is fixed.
GradientEstimate estimate_cost_and_gradient(const NdoParameters& params,
                                            const SampleBatch& batch,
                                            const ChainParameters& chain, int threads = 1);

std::vector<double> estimate_gradient(const NdoParameters& params, const SampleBatch& batch,
                                      const ChainParameters& chain);

double estimate_diagonal_observable(const NdoParameters& params, const SampleBatch& diag_batch,
                                    const Observable& observable);

/// Excited populations of every site from a diagonal batch.
std::vector<double> estimate_site_populations(const SampleBatch& diag_batch);

NdoParameters sgd_step(const NdoParameters& params, const std::vector<double>& gradient,
                       double learning_rate);

struct TrainingResult {
  std::vector<IterationRecord> records;
  NdoParameters final_params;
};

struct TrainingHooks {
  /// Called after each iteration with its record.
  std::function<void(const IterationRecord&)> on_iteration;
  /// Called every snapshot_every iterations with the updated parameters.
  std::function<void(int iteration, const NdoParameters&)> on_snapshot;
};

TrainingResult run_training(const ChainParameters& chain, const TrainingConfig& config,
                            const TrainingHooks& hooks = {});

/// Starts from given parameters instead of a random initialisation.
TrainingResult run_training(const ChainParameters& chain, const TrainingConfig& config,
                            NdoParameters initial, const TrainingHooks& hooks = {});

/// Trailing mean over the last `window` entries (fewer at the start).
std::vector<double> trailing_moving_average(const std::vector<double>& series, int window);

void write_records_csv(std::ostream& out, const std::vector<IterationRecord>& records,
                       int n_sites);
std::vector<IterationRecord> read_records_csv(std::istream& in);

}  // namespace ndo
