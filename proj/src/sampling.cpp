#include "ndo/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ndo/errors.hpp"

namespace ndo {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Exact: return "exact";
    case Strategy::Metropolis: return "metropolis";
    case Strategy::AcceptOnly: return "accept_only";
    case Strategy::Hybrid: return "hybrid";
  }
  return "?";
}

std::string to_string(Acceptance a) {
  return a == Acceptance::Ratio ? "ratio" : "exponential";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "exact") return Strategy::Exact;
  if (s == "metropolis") return Strategy::Metropolis;
  if (s == "accept_only") return Strategy::AcceptOnly;
  if (s == "hybrid") return Strategy::Hybrid;
  throw ConfigError("unknown sampling strategy '" + s + "'");
}

Acceptance acceptance_from_string(const std::string& s) {
  if (s == "ratio") return Acceptance::Ratio;
  if (s == "exponential") return Acceptance::Exponential;
  throw ConfigError("unknown acceptance '" + s + "'");
}

void SamplerConfig::validate(int n_sites) const {
  if (n_samples < 1) throw ArgumentError("n_samples must be >= 1");
  if (!(flip_probability > 0.0 && flip_probability <= 1.0)) {
    throw ArgumentError("flip_probability must be in (0, 1]");
  }
  if (strategy == Strategy::Hybrid) {
    const auto sites = resolved_exact_sites(n_sites);
    if (sites.empty()) throw ArgumentError("hybrid sampling needs exact sites");
    if (sites.size() > 4) throw ArgumentError("at most 4 exact sites supported");
    std::set<int> unique(sites.begin(), sites.end());
    if (unique.size() != sites.size()) throw ArgumentError("duplicate exact site");
    for (int s : sites) {
      if (s < 0 || s >= n_sites) throw ArgumentError("exact site out of range");
    }
  }
}

int SamplerConfig::resolved_burn_in() const {
  return burn_in >= 0 ? burn_in : std::max(100, n_samples / 100);
}

std::vector<int> SamplerConfig::resolved_exact_sites(int n_sites) const {
  if (!exact_sites.empty()) return exact_sites;
  if (n_sites == 1) return {0};
  return {0, n_sites - 1};
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  std::vector<int> one_based;
  for (int s : c.exact_sites) one_based.push_back(s + 1);
  j = nlohmann::json{{"strategy", to_string(c.strategy)},
                     {"acceptance", to_string(c.acceptance)},
                     {"n_samples", c.n_samples},
                     {"burn_in", c.burn_in},
                     {"flip_probability", c.flip_probability},
                     {"exact_sites", one_based},
                     {"hold_bulk_for_cycle", c.hold_bulk_for_cycle},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  static const std::set<std::string> known = {
      "strategy", "acceptance", "n_samples", "burn_in", "flip_probability",
      "exact_sites", "hold_bulk_for_cycle", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("sampler: unknown key '" + key + "'");
  }
  try {
    if (j.contains("strategy")) c.strategy = strategy_from_string(j["strategy"].get<std::string>());
    if (j.contains("acceptance")) {
      c.acceptance = acceptance_from_string(j["acceptance"].get<std::string>());
    }
    if (j.contains("n_samples")) c.n_samples = j["n_samples"].get<int>();
    if (j.contains("burn_in")) c.burn_in = j["burn_in"].get<int>();
    if (j.contains("flip_probability")) c.flip_probability = j["flip_probability"].get<double>();
    if (j.contains("exact_sites")) {
      c.exact_sites.clear();
      for (int s : j["exact_sites"].get<std::vector<int>>()) c.exact_sites.push_back(s - 1);
    }
    if (j.contains("hold_bulk_for_cycle")) {
      c.hold_bulk_for_cycle = j["hold_bulk_for_cycle"].get<bool>();
    }
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sampler: ") + e.what());
  }
}

namespace {

std::uint32_t full_mask(int n) { return n >= 32 ? ~0u : (1u << n) - 1u; }

std::uint32_t eligible_mask(const SamplerConfig& config, int n) {
  std::uint32_t mask = full_mask(n);
  if (config.strategy == Strategy::Hybrid) {
    for (int s : config.resolved_exact_sites(n)) mask &= ~(1u << s);
  }
  return mask;
}

std::uint32_t random_flips(std::uint32_t mask, double p, Rng& rng, std::uint64_t& cache,
                           int& cache_bits) {
  if (p >= 1.0) return mask;
  if (p == 0.5) {
    // One 64-bit draw serves two 32-bit masks.
    if (cache_bits == 0) {
      cache = rng();
      cache_bits = 2;
    }
    const auto bits = static_cast<std::uint32_t>(cache);
    cache >>= 32;
    --cache_bits;
    return bits & mask;
  }
  std::bernoulli_distribution flip(p);
  std::uint32_t out = 0;
  for (std::uint32_t m = mask; m; m &= m - 1) {
    const std::uint32_t bit = m & (~m + 1);
    if (flip(rng)) out |= bit;
  }
  return out;
}

SamplePair random_pair(int n, BatchKind kind, Rng& rng) {
  const std::uint32_t mask = full_mask(n);
  const auto s = static_cast<std::uint32_t>(rng()) & mask;
  const auto e = kind == BatchKind::Diagonal ? s : static_cast<std::uint32_t>(rng()) & mask;
  return {{s, n}, {e, n}};
}

bool accept(double log_new, double log_old, Acceptance kind, Rng& rng) {
  const double a = acceptance_probability(log_new, log_old, kind);
  if (a >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < a;
}

void finish(SampleBatch& batch) {
  batch.weights.assign(batch.pairs.size(), 1.0 / static_cast<double>(batch.pairs.size()));
}

double log_sum_exp(const std::vector<double>& xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Edge-averaged bulk weight: mean over every setting of the exact sites of
// |rho|^2 (full pairs) or rho(s, s) (diagonal). Hidden-unit angles are
// split into a bulk part and per-side edge parts so each side's hidden
// layer is evaluated once per side setting.
class EdgeAveragedWeight {
 public:
  EdgeAveragedWeight(const NdoParameters& p, std::vector<int> sites, BatchKind kind)
      : p_(p), sites_(std::move(sites)), kind_(kind) {
    const int side = 1 << sites_.size();
    vis_s_.resize(side);
    vis_e_.resize(side);
    hid_s_.resize(side);
    hid_e_.resize(side);
    mix_s_.assign(side, std::vector<Complex>(p_.n_mixing));
    mix_e_.assign(side, std::vector<Complex>(p_.n_mixing));
    for (std::uint32_t s : sites_) edge_mask_ |= 1u << s;
    terms_.reserve(static_cast<std::size_t>(side) * side);
  }

  double log_weight(const SamplePair& bulk) {
    const int n = p_.n_visible;
    const int side = 1 << sites_.size();
    const std::uint32_t bs = bulk.sigma.bits & ~edge_mask_;
    const std::uint32_t be = bulk.eta.bits & ~edge_mask_;
    auto spin = [](std::uint32_t bits, int i) { return ((bits >> i) & 1u) ? 1.0 : -1.0; };

    Complex vis_base{};
    base_s_.assign(p_.n_hidden, {});
    base_e_.assign(p_.n_hidden, {});
    base_mix_.assign(p_.n_mixing, {});
    for (int m = 0; m < p_.n_hidden; ++m) {
      base_s_[m] = p_.b[m];
      base_e_[m] = std::conj(p_.b[m]);
    }
    for (int k = 0; k < p_.n_mixing; ++k) base_mix_[k] = 2.0 * p_.c[k].real();
    for (int i = 0; i < n; ++i) {
      if ((edge_mask_ >> i) & 1u) continue;
      const double si = spin(bs, i), ei = spin(be, i);
      vis_base += p_.a[i] * si + std::conj(p_.a[i]) * ei;
      for (int m = 0; m < p_.n_hidden; ++m) {
        base_s_[m] += p_.W(m, i) * si;
        base_e_[m] += std::conj(p_.W(m, i)) * ei;
      }
      for (int k = 0; k < p_.n_mixing; ++k) {
        base_mix_[k] += p_.U(k, i) * si + std::conj(p_.U(k, i)) * ei;
      }
    }

    for (int a = 0; a < side; ++a) {
      Complex vs{}, ve{}, hs{}, he{};
      for (int m = 0; m < p_.n_hidden; ++m) {
        Complex ts = base_s_[m], te = base_e_[m];
        for (std::size_t j = 0; j < sites_.size(); ++j) {
          const double x = ((a >> j) & 1) ? 1.0 : -1.0;
          ts += p_.W(m, sites_[j]) * x;
          te += std::conj(p_.W(m, sites_[j])) * x;
        }
        hs += log_cosh(ts);
        if (kind_ == BatchKind::FullPair) he += log_cosh(te);
      }
      for (std::size_t j = 0; j < sites_.size(); ++j) {
        const double x = ((a >> j) & 1) ? 1.0 : -1.0;
        vs += p_.a[sites_[j]] * x;
        ve += std::conj(p_.a[sites_[j]]) * x;
      }
      for (int k = 0; k < p_.n_mixing; ++k) {
        Complex us{}, ue{};
        for (std::size_t j = 0; j < sites_.size(); ++j) {
          const double x = ((a >> j) & 1) ? 1.0 : -1.0;
          us += p_.U(k, sites_[j]) * x;
          ue += std::conj(p_.U(k, sites_[j])) * x;
        }
        mix_s_[a][k] = us;
        mix_e_[a][k] = ue;
      }
      vis_s_[a] = vs;
      vis_e_[a] = ve;
      hid_s_[a] = hs;
      hid_e_[a] = he;
    }

    terms_.clear();
    for (int a = 0; a < side; ++a) {
      for (int b = 0; b < side; ++b) {
        if (kind_ == BatchKind::Diagonal && a != b) continue;
        Complex total = vis_base + vis_s_[a] + vis_e_[b] + hid_s_[a] +
                        (kind_ == BatchKind::FullPair ? hid_e_[b] : std::conj(hid_s_[a]));
        for (int k = 0; k < p_.n_mixing; ++k) {
          total += log_cosh(base_mix_[k] + mix_s_[a][k] + mix_e_[b][k]);
        }
        terms_.push_back(kind_ == BatchKind::FullPair ? 2.0 * total.real() : total.real());
      }
    }
    return log_sum_exp(terms_) - std::log(static_cast<double>(terms_.size()));
  }

 private:
  const NdoParameters& p_;
  std::vector<int> sites_;
  BatchKind kind_;
  std::uint32_t edge_mask_ = 0;
  std::vector<Complex> vis_s_, vis_e_, hid_s_, hid_e_;
  std::vector<std::vector<Complex>> mix_s_, mix_e_;
  std::vector<Complex> base_s_, base_e_, base_mix_;
  std::vector<double> terms_;
};

void check_shape(const NdoParameters& params, const SamplerConfig& config) {
  config.validate(params.n_visible);
}

}  // namespace

SamplePair propose(const SamplePair& current, const SamplerConfig& config, BatchKind kind,
                   Rng& rng) {
  const int n = current.sigma.n_sites;
  const std::uint32_t mask = eligible_mask(config, n);
  std::uint64_t cache = 0;
  int cache_bits = 0;
  const std::uint32_t fs = random_flips(mask, config.flip_probability, rng, cache, cache_bits);
  if (kind == BatchKind::Diagonal) {
    const std::uint32_t s = current.sigma.bits ^ fs;
    return {{s, n}, {s, n}};
  }
  const std::uint32_t fe = random_flips(mask, config.flip_probability, rng, cache, cache_bits);
  return {{current.sigma.bits ^ fs, n}, {current.eta.bits ^ fe, n}};
}

double acceptance_probability(double log_p_new, double log_p_old, Acceptance kind) {
  const double delta = log_p_new - log_p_old;
  if (kind == Acceptance::Ratio) {
    return delta >= 0.0 ? 1.0 : std::exp(delta);
  }
  // exp(-p_old/p_new); exp(-delta) overflows to inf and the result to 0.
  return std::exp(-std::exp(-delta));
}

double log_target(const NdoParameters& params, const SamplePair& pair, BatchKind kind) {
  const Complex lr = log_rho(params, pair);
  return kind == BatchKind::FullPair ? 2.0 * lr.real() : lr.real();
}

SampleBatch sample_metropolis(const NdoParameters& params, const SamplerConfig& config,
                              BatchKind kind, Rng& rng) {
  check_shape(params, config);
  const int n = params.n_visible;
  SampleBatch batch;
  batch.kind = kind;
  batch.pairs.reserve(config.n_samples);

  SamplePair current = random_pair(n, kind, rng);
  double log_cur = log_target(params, current, kind);
  auto step = [&] {
    const SamplePair next = propose(current, config, kind, rng);
    const double log_next = log_target(params, next, kind);
    if (accept(log_next, log_cur, config.acceptance, rng)) {
      current = next;
      log_cur = log_next;
      return true;
    }
    return false;
  };
  for (int i = 0; i < config.resolved_burn_in(); ++i) step();
  for (int i = 0; i < config.n_samples; ++i) {
    ++batch.proposals;
    if (step()) ++batch.accepted;
    batch.pairs.push_back(current);
  }
  finish(batch);
  return batch;
}

SampleBatch sample_accept_only(const NdoParameters& params, const SamplerConfig& config,
                               BatchKind kind, Rng& rng) {
  check_shape(params, config);
  const int n = params.n_visible;
  SampleBatch batch;
  batch.kind = kind;
  batch.pairs.reserve(config.n_samples);

  SamplePair current = random_pair(n, kind, rng);
  double log_cur = log_target(params, current, kind);
  auto advance = [&](bool count) {
    for (long rejected = 0;; ++rejected) {
      if (rejected >= kMaxConsecutiveRejections) {
        throw StuckChainError("accept-only chain rejected " + std::to_string(rejected) +
                              " consecutive proposals");
      }
      const SamplePair next = propose(current, config, kind, rng);
      const double log_next = log_target(params, next, kind);
      if (count) ++batch.proposals;
      if (accept(log_next, log_cur, config.acceptance, rng)) {
        current = next;
        log_cur = log_next;
        if (count) ++batch.accepted;
        return;
      }
    }
  };
  for (int i = 0; i < config.resolved_burn_in(); ++i) advance(false);
  for (int i = 0; i < config.n_samples; ++i) {
    advance(true);
    batch.pairs.push_back(current);
  }
  finish(batch);
  return batch;
}

int edge_configuration_count(int n_exact_sites, BatchKind kind) {
  return 1 << (kind == BatchKind::FullPair ? 2 * n_exact_sites : n_exact_sites);
}

SamplePair with_edge_configuration(const SamplePair& pair, const std::vector<int>& sites,
                                   int index, BatchKind kind) {
  std::uint32_t s = pair.sigma.bits, e = pair.eta.bits;
  const std::size_t k = sites.size();
  for (std::size_t j = 0; j < k; ++j) {
    const std::uint32_t bit = 1u << sites[j];
    s = ((index >> j) & 1) ? (s | bit) : (s & ~bit);
    if (kind == BatchKind::FullPair) {
      e = ((index >> (j + k)) & 1) ? (e | bit) : (e & ~bit);
    }
  }
  if (kind == BatchKind::Diagonal) e = s;
  return {{s, pair.sigma.n_sites}, {e, pair.eta.n_sites}};
}

int edge_configuration_index(const SamplePair& pair, const std::vector<int>& sites,
                             BatchKind kind) {
  int index = 0;
  const std::size_t k = sites.size();
  for (std::size_t j = 0; j < k; ++j) {
    if (pair.sigma.up(sites[j])) index |= 1 << j;
    if (kind == BatchKind::FullPair && pair.eta.up(sites[j])) index |= 1 << (j + k);
  }
  return index;
}

SampleBatch sample_hybrid(const NdoParameters& params, const SamplerConfig& config,
                          BatchKind kind, Rng& rng) {
  check_shape(params, config);
  if (config.strategy != Strategy::Hybrid) {
    throw ArgumentError("sample_hybrid requires the hybrid strategy");
  }
  const int n = params.n_visible;
  const auto sites = config.resolved_exact_sites(n);
  const int cycle = edge_configuration_count(static_cast<int>(sites.size()), kind);
  EdgeAveragedWeight weight(params, sites, kind);

  SampleBatch batch;
  batch.kind = kind;
  batch.pairs.reserve(config.n_samples);

  SamplePair current = with_edge_configuration(random_pair(n, kind, rng), sites, 0, kind);
  double log_cur = weight.log_weight(current);
  auto advance = [&](bool count) {
    for (long rejected = 0;; ++rejected) {
      if (rejected >= kMaxConsecutiveRejections) {
        throw StuckChainError("hybrid chain rejected " + std::to_string(rejected) +
                              " consecutive proposals");
      }
      const SamplePair next = propose(current, config, kind, rng);
      const double log_next = weight.log_weight(next);
      if (count) ++batch.proposals;
      if (accept(log_next, log_cur, config.acceptance, rng)) {
        current = next;
        log_cur = log_next;
        if (count) ++batch.accepted;
        return;
      }
    }
  };

  // Samples follow (edge-averaged bulk weight) x (uniform edge setting);
  // the weight target / proposal restores the exact edge statistics.
  std::vector<double> log_w;
  log_w.reserve(config.n_samples);
  auto record = [&](int edge) {
    const SamplePair pair = with_edge_configuration(current, sites, edge, kind);
    batch.pairs.push_back(pair);
    log_w.push_back(log_target(params, pair, kind) - log_cur);
  };

  for (int i = 0; i < config.resolved_burn_in(); ++i) advance(false);
  int counter = 0;
  while (static_cast<int>(batch.pairs.size()) < config.n_samples) {
    advance(true);
    if (config.hold_bulk_for_cycle) {
      for (int c = 0; c < cycle && static_cast<int>(batch.pairs.size()) < config.n_samples; ++c) {
        record(c);
      }
    } else {
      record(counter);
      counter = (counter + 1) % cycle;
    }
  }
  const double log_z = log_sum_exp(log_w);
  batch.weights.reserve(log_w.size());
  for (double l : log_w) batch.weights.push_back(std::exp(l - log_z));
  return batch;
}

SampleBatch sample_exact(const NdoParameters& params, BatchKind kind) {
  const int n = params.n_visible;
  const int limit = kind == BatchKind::FullPair ? kMaxLiouvillianSites : 2 * kMaxLiouvillianSites;
  if (n > limit) {
    throw CapacityError("exact enumeration limited to " + std::to_string(limit) + " sites");
  }
  SampleBatch batch;
  batch.kind = kind;
  std::vector<double> logs;
  for (auto s : enumerate_configurations(n)) {
    if (kind == BatchKind::Diagonal) {
      batch.pairs.push_back({s, s});
    } else {
      for (auto e : enumerate_configurations(n)) batch.pairs.push_back({s, e});
    }
  }
  logs.reserve(batch.pairs.size());
  for (const auto& pair : batch.pairs) logs.push_back(log_target(params, pair, kind));
  const double log_z = log_sum_exp(logs);
  batch.weights.reserve(logs.size());
  for (double l : logs) batch.weights.push_back(std::exp(l - log_z));
  return batch;
}

SampleBatch draw_batch(const NdoParameters& params, const SamplerConfig& config,
                       BatchKind kind, Rng& rng) {
  switch (config.strategy) {
    case Strategy::Exact: return sample_exact(params, kind);
    case Strategy::Metropolis: return sample_metropolis(params, config, kind, rng);
    case Strategy::AcceptOnly: return sample_accept_only(params, config, kind, rng);
    case Strategy::Hybrid: return sample_hybrid(params, config, kind, rng);
  }
  throw ArgumentError("unknown strategy");
}

}  // namespace ndo
