#pragma once

// Sample sets for one training iteration. Full-pair batches target
// p(s, e) ~ |rho(s, e)|^2, diagonal batches q(s) ~ rho(s, s).

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndo/model.hpp"
#include "ndo/network.hpp"

namespace ndo {

enum class Strategy { Exact, Metropolis, AcceptOnly, Hybrid };
enum class Acceptance { Ratio, Exponential };
enum class BatchKind { FullPair, Diagonal };

std::string to_string(Strategy s);
std::string to_string(Acceptance a);
Strategy strategy_from_string(const std::string& s);
Acceptance acceptance_from_string(const std::string& s);

using Rng = std::mt19937_64;

struct SamplerConfig {
  Strategy strategy = Strategy::AcceptOnly;
  Acceptance acceptance = Acceptance::Ratio;
  int n_samples = 1000;
  int burn_in = -1;  // < 0 selects max(100, n_samples / 100)
  double flip_probability = 0.5;
  std::vector<int> exact_sites;  // 0-based; empty selects both chain ends
  /// Emit every edge setting for one accepted bulk before moving on.
  bool hold_bulk_for_cycle = false;
  std::uint64_t seed = 0;

  void validate(int n_sites) const;
  int resolved_burn_in() const;
  std::vector<int> resolved_exact_sites(int n_sites) const;
};

/// exact_sites are written 1-based in JSON.
void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

struct SampleBatch {
  std::vector<SamplePair> pairs;
  std::vector<double> weights;  // sum to 1; uniform except exact and hybrid batches
  BatchKind kind = BatchKind::FullPair;
  long proposals = 0;
  long accepted = 0;

  std::size_t size() const { return pairs.size(); }
  double acceptance_rate() const {
    return proposals > 0 ? static_cast<double>(accepted) / proposals : 1.0;
  }
};

/// Flips each eligible spin variable with config.flip_probability. Full
/// pairs have 2N variables, diagonal pairs N (mirrored to eta). In hybrid
/// mode the exact sites are not eligible.
SamplePair propose(const SamplePair& current, const SamplerConfig& config, BatchKind kind,
                   Rng& rng);

/// ratio: min(1, p_new/p_old); exponential: exp(-p_old/p_new).
double acceptance_probability(double log_p_new, double log_p_old, Acceptance kind);

/// Log of the sampling weight: 2 Re ln rho for full pairs, Re ln rho(s,s)
/// for diagonal ones.
double log_target(const NdoParameters& params, const SamplePair& pair, BatchKind kind);

SampleBatch sample_metropolis(const NdoParameters& params, const SamplerConfig& config,
                              BatchKind kind, Rng& rng);
SampleBatch sample_accept_only(const NdoParameters& params, const SamplerConfig& config,
                               BatchKind kind, Rng& rng);
/// Bulk variables follow an accept-only chain on the edge-averaged weight;
/// exact sites cycle through every setting. Each sample is weighted by its
/// target value over the edge-averaged weight of its bulk.
SampleBatch sample_hybrid(const NdoParameters& params, const SamplerConfig& config,
                          BatchKind kind, Rng& rng);
SampleBatch sample_exact(const NdoParameters& params, BatchKind kind);

/// Dispatches on config.strategy.
SampleBatch draw_batch(const NdoParameters& params, const SamplerConfig& config,
                       BatchKind kind, Rng& rng);

/// Number of edge settings cycled by the hybrid sampler.
int edge_configuration_count(int n_exact_sites, BatchKind kind);

/// Writes edge setting `index` into the exact sites of `pair`; bit order is
/// sigma at each exact site, then eta at each exact site (little-endian).
SamplePair with_edge_configuration(const SamplePair& pair, const std::vector<int>& exact_sites,
                                   int index, BatchKind kind);

/// Inverse of with_edge_configuration.
int edge_configuration_index(const SamplePair& pair, const std::vector<int>& exact_sites,
                             BatchKind kind);

inline constexpr long kMaxConsecutiveRejections = 1'000'000;

}  // namespace ndo
