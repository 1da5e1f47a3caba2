#include "ndo/training.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "ndo/errors.hpp"

namespace ndo {

void TrainingConfig::validate(int n_sites) const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
  if (n_iterations < 0) throw ArgumentError("n_iterations must be >= 0");
  auto integral = [&](double density) {
    const double units = density * n_sites;
    return density > 0.0 && std::abs(units - std::round(units)) < 1e-9;
  };
  if (!integral(hidden_density)) throw ArgumentError("hidden_density * N must be a positive integer");
  if (!integral(mixing_density)) throw ArgumentError("mixing_density * N must be a positive integer");
  if (snapshot_every < 0) throw ArgumentError("snapshot_every must be >= 0");
  if (threads < 1) throw ArgumentError("threads must be >= 1");
  sampler.validate(n_sites);
}

int TrainingConfig::hidden_units(int n_sites) const {
  return static_cast<int>(std::lround(hidden_density * n_sites));
}

int TrainingConfig::mixing_units(int n_sites) const {
  return static_cast<int>(std::lround(mixing_density * n_sites));
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"n_iterations", c.n_iterations},
                     {"hidden_density", c.hidden_density},
                     {"mixing_density", c.mixing_density},
                     {"seed", c.seed},
                     {"snapshot_every", c.snapshot_every}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  static const std::set<std::string> known = {"learning_rate",  "n_iterations", "hidden_density",
                                              "mixing_density", "seed",         "snapshot_every"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("training: unknown key '" + key + "'");
  }
  try {
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("n_iterations")) c.n_iterations = j["n_iterations"].get<int>();
    if (j.contains("hidden_density")) c.hidden_density = j["hidden_density"].get<double>();
    if (j.contains("mixing_density")) c.mixing_density = j["mixing_density"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("snapshot_every")) c.snapshot_every = j["snapshot_every"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training: ") + e.what());
  }
}

Observable Observable::identity() {
  return {[](const SpinConfiguration& s) { return std::vector<ConfigAmplitude>{{s, 1.0}}; }};
}

Observable Observable::sigma_z(int site) {
  return {[site](const SpinConfiguration& s) {
    return std::vector<ConfigAmplitude>{{s, static_cast<double>(s.spin(site))}};
  }};
}

Observable Observable::excited(int site) {
  return {[site](const SpinConfiguration& s) {
    return std::vector<ConfigAmplitude>{{s, s.up(site) ? 1.0 : 0.0}};
  }};
}

namespace {

inline double spin_of(std::uint32_t bits, int i) { return ((bits >> i) & 1u) ? 1.0 : -1.0; }

// Weighted sums of the raw log-derivative building blocks; the real-slot
// gradient is a fixed linear map of these (see to_flat).
struct RawSums {
  int n = 0, m = 0, k = 0;
  std::vector<Complex> vis_s, vis_e, hs, he, mx, hs_s, he_e, mx_s, mx_e;

  RawSums(int n_, int m_, int k_) : n(n_), m(m_), k(k_) {
    vis_s.assign(n, {});
    vis_e.assign(n, {});
    hs.assign(m, {});
    he.assign(m, {});
    mx.assign(k, {});
    hs_s.assign(static_cast<std::size_t>(m) * n, {});
    he_e.assign(static_cast<std::size_t>(m) * n, {});
    mx_s.assign(static_cast<std::size_t>(k) * n, {});
    mx_e.assign(static_cast<std::size_t>(k) * n, {});
  }

  void add(const RawSums& o) {
    auto acc = [](std::vector<Complex>& x, const std::vector<Complex>& y) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    };
    acc(vis_s, o.vis_s);
    acc(vis_e, o.vis_e);
    acc(hs, o.hs);
    acc(he, o.he);
    acc(mx, o.mx);
    acc(hs_s, o.hs_s);
    acc(he_e, o.he_e);
    acc(mx_s, o.mx_s);
    acc(mx_e, o.mx_e);
  }

  // kappa * O(state), full rank-one update.
  void add_state(Complex kappa, const LocalState& st) {
    const std::uint32_t s = st.pair.sigma.bits, e = st.pair.eta.bits;
    for (int i = 0; i < n; ++i) {
      vis_s[i] += kappa * spin_of(s, i);
      vis_e[i] += kappa * spin_of(e, i);
    }
    for (int r = 0; r < m; ++r) {
      const Complex a = kappa * st.tanh_sigma[r];
      const Complex b = kappa * st.tanh_eta[r];
      hs[r] += a;
      he[r] += b;
      for (int i = 0; i < n; ++i) {
        hs_s[r * n + i] += a * spin_of(s, i);
        he_e[r * n + i] += b * spin_of(e, i);
      }
    }
    for (int r = 0; r < k; ++r) {
      const Complex a = kappa * st.tanh_mix[r];
      mx[r] += a;
      for (int i = 0; i < n; ++i) {
        mx_s[r * n + i] += a * spin_of(s, i);
        mx_e[r * n + i] += a * spin_of(e, i);
      }
    }
  }

  Complex slot(std::size_t index) const {
    const Complex i_unit{0.0, 1.0};
    const std::size_t nn = n, mm = m, kk = k;
    if (index < nn) return vis_s[index] + vis_e[index];
    index -= nn;
    if (index < nn) return i_unit * (vis_s[index] - vis_e[index]);
    index -= nn;
    if (index < mm) return hs[index] + he[index];
    index -= mm;
    if (index < mm) return i_unit * (hs[index] - he[index]);
    index -= mm;
    if (index < kk) return 2.0 * mx[index];
    index -= kk;
    if (index < mm * nn) return hs_s[index] + he_e[index];
    index -= mm * nn;
    if (index < mm * nn) return i_unit * (hs_s[index] - he_e[index]);
    index -= mm * nn;
    if (index < kk * nn) return mx_s[index] + mx_e[index];
    index -= kk * nn;
    return i_unit * (mx_s[index] - mx_e[index]);
  }
};

struct ChunkResult {
  RawSums driven;    // E[conj(L~) sum_m L rho_m/rho_n O(m)]
  RawSums baseline;  // E[O]
  double cost = 0.0;

  ChunkResult(int n, int m, int k) : driven(n, m, k), baseline(n, m, k) {}
};

void accumulate_chunk(const NdoEvaluator& eval, const ChainParameters& chain,
                      const SampleBatch& batch, std::size_t begin, std::size_t end,
                      ChunkResult& out) {
  const auto& p = eval.params();
  const int n = p.n_visible, m = p.n_hidden, k = p.n_mixing;
  LocalState src;
  LiouvillianStencil stencil;
  stencil.entries.reserve(max_stencil_entries(n));
  std::vector<LocalState> targets;
  std::vector<Complex> coef;
  std::vector<Complex> hs(m), he(m), mx(k);
  RawSums& a_sums = out.driven;

  for (std::size_t idx = begin; idx < end; ++idx) {
    const double w = batch.weights[idx];
    if (w == 0.0) continue;
    eval.evaluate(batch.pairs[idx], src);
    liouvillian_row(src.pair, chain, stencil);
    const std::size_t nt = stencil.entries.size();
    if (targets.size() < nt) targets.resize(nt);
    coef.resize(nt);
    Complex l_tilde{};
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& entry = stencil.entries[t];
      coef[t] = entry.amplitude * eval.transition(src, entry.target, targets[t]);
      l_tilde += coef[t];
    }
    out.cost += w * std::norm(l_tilde);
    out.baseline.add_state(w, src);
    if (nt == 0) continue;

    // Rank-one part against the source spins plus per-target corrections on
    // the flipped sites.
    const Complex scale = w * std::conj(l_tilde);
    std::fill(hs.begin(), hs.end(), Complex{});
    std::fill(he.begin(), he.end(), Complex{});
    std::fill(mx.begin(), mx.end(), Complex{});
    Complex total{};
    const std::uint32_t s0 = src.pair.sigma.bits, e0 = src.pair.eta.bits;
    for (std::size_t t = 0; t < nt; ++t) {
      const Complex kappa = scale * coef[t];
      const auto& tg = targets[t];
      total += kappa;
      for (int r = 0; r < m; ++r) {
        hs[r] += kappa * tg.tanh_sigma[r];
        he[r] += kappa * tg.tanh_eta[r];
      }
      for (int r = 0; r < k; ++r) mx[r] += kappa * tg.tanh_mix[r];

      for (std::uint32_t bits = s0 ^ tg.pair.sigma.bits; bits; bits &= bits - 1) {
        const int i = std::countr_zero(bits);
        const Complex d = kappa * (-2.0 * spin_of(s0, i));
        a_sums.vis_s[i] += d;
        for (int r = 0; r < m; ++r) a_sums.hs_s[r * n + i] += d * tg.tanh_sigma[r];
        for (int r = 0; r < k; ++r) a_sums.mx_s[r * n + i] += d * tg.tanh_mix[r];
      }
      for (std::uint32_t bits = e0 ^ tg.pair.eta.bits; bits; bits &= bits - 1) {
        const int i = std::countr_zero(bits);
        const Complex d = kappa * (-2.0 * spin_of(e0, i));
        a_sums.vis_e[i] += d;
        for (int r = 0; r < m; ++r) a_sums.he_e[r * n + i] += d * tg.tanh_eta[r];
        for (int r = 0; r < k; ++r) a_sums.mx_e[r * n + i] += d * tg.tanh_mix[r];
      }
    }
    for (int i = 0; i < n; ++i) {
      a_sums.vis_s[i] += total * spin_of(s0, i);
      a_sums.vis_e[i] += total * spin_of(e0, i);
    }
    for (int r = 0; r < m; ++r) {
      a_sums.hs[r] += hs[r];
      a_sums.he[r] += he[r];
      for (int i = 0; i < n; ++i) {
        a_sums.hs_s[r * n + i] += hs[r] * spin_of(s0, i);
        a_sums.he_e[r * n + i] += he[r] * spin_of(e0, i);
      }
    }
    for (int r = 0; r < k; ++r) {
      a_sums.mx[r] += mx[r];
      for (int i = 0; i < n; ++i) {
        a_sums.mx_s[r * n + i] += mx[r] * spin_of(s0, i);
        a_sums.mx_e[r * n + i] += mx[r] * spin_of(e0, i);
      }
    }
  }
}

constexpr std::size_t kMaxChunks = 64;

}  // namespace

Complex local_liouvillian_estimator(const NdoParameters& params, const SamplePair& pair,
                                    const ChainParameters& chain) {
  const NdoEvaluator eval(params);
  const LocalState src = eval.evaluate(pair);
  const auto stencil = liouvillian_row(pair, chain);
  LocalState target;
  Complex total{};
  for (const auto& entry : stencil.entries) {
    total += entry.amplitude * eval.transition(src, entry.target, target);
  }
  return total;
}

double estimate_cost(const NdoParameters& params, const SampleBatch& batch,
                     const ChainParameters& chain) {
  if (batch.kind != BatchKind::FullPair) throw ArgumentError("cost needs a full-pair batch");
  const NdoEvaluator eval(params);
  LiouvillianStencil stencil;
  LocalState src, target;
  double cost = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    eval.evaluate(batch.pairs[i], src);
    liouvillian_row(src.pair, chain, stencil);
    Complex l_tilde{};
    for (const auto& entry : stencil.entries) {
      l_tilde += entry.amplitude * eval.transition(src, entry.target, target);
    }
    cost += batch.weights[i] * std::norm(l_tilde);
  }
  return cost;
}

GradientEstimate estimate_cost_and_gradient(const NdoParameters& params,
                                            const SampleBatch& batch,
                                            const ChainParameters& chain, int threads) {
  if (batch.kind != BatchKind::FullPair) {
    throw ArgumentError("gradient needs a full-pair batch");
  }
  if (chain.n_sites != params.n_visible) throw ArgumentError("chain/network size mismatch");
  const int n = params.n_visible, m = params.n_hidden, k = params.n_mixing;
  const NdoEvaluator eval(params);

  const std::size_t total = batch.size();
  const std::size_t chunks = std::max<std::size_t>(1, std::min(kMaxChunks, total));
  std::vector<ChunkResult> results(chunks, ChunkResult(n, m, k));
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = total * c / chunks;
    const std::size_t end = total * (c + 1) / chunks;
    accumulate_chunk(eval, chain, batch, begin, end, results[c]);
  };
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t t_count = std::min<std::size_t>(threads, chunks);
    for (std::size_t t = 0; t < t_count; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < chunks; c += t_count) run_chunk(c);
      });
    }
  }

  ChunkResult sum(n, m, k);
  for (const auto& r : results) {
    sum.driven.add(r.driven);
    sum.baseline.add(r.baseline);
    sum.cost += r.cost;
  }

  GradientEstimate est;
  est.cost = sum.cost;
  const std::size_t np = params.n_real_parameters();
  est.gradient.resize(np);
  for (std::size_t l = 0; l < np; ++l) {
    const Complex g = sum.driven.slot(l) - sum.baseline.slot(l) * sum.cost;
    est.gradient[l] = 2.0 * g.real();
    if (!std::isfinite(est.gradient[l])) {
      throw NumericalError(std::string("non-finite gradient in block ") +
                           block_name(block_of(params, l)));
    }
  }
  return est;
}

std::vector<double> estimate_gradient(const NdoParameters& params, const SampleBatch& batch,
                                      const ChainParameters& chain) {
  return estimate_cost_and_gradient(params, batch, chain).gradient;
}

double estimate_diagonal_observable(const NdoParameters& params, const SampleBatch& diag_batch,
                                    const Observable& observable) {
  if (diag_batch.kind != BatchKind::Diagonal) {
    throw ArgumentError("observable estimation needs a diagonal batch");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < diag_batch.size(); ++n) {
    const auto& sigma = diag_batch.pairs[n].sigma;
    Complex local{};
    Complex log_diag{};
    bool have_diag = false;
    for (const auto& [xi, x] : observable.row(sigma)) {
      if (xi == sigma) {
        local += x;
        continue;
      }
      if (!have_diag) {
        log_diag = log_rho(params, {sigma, sigma});
        have_diag = true;
      }
      local += x * std::exp(log_rho(params, {xi, sigma}) - log_diag);
    }
    total += diag_batch.weights[n] * local.real();
  }
  return total;
}

std::vector<double> estimate_site_populations(const SampleBatch& diag_batch) {
  if (diag_batch.size() == 0) return {};
  const int n = diag_batch.pairs.front().sigma.n_sites;
  std::vector<double> pops(n, 0.0);
  for (std::size_t s = 0; s < diag_batch.size(); ++s) {
    const auto bits = diag_batch.pairs[s].sigma.bits;
    const double w = diag_batch.weights[s];
    for (int i = 0; i < n; ++i) {
      if ((bits >> i) & 1u) pops[i] += w;
    }
  }
  return pops;
}

NdoParameters sgd_step(const NdoParameters& params, const std::vector<double>& gradient,
                       double learning_rate) {
  auto flat = flatten(params);
  if (gradient.size() != flat.size()) {
    throw ArgumentError("gradient has " + std::to_string(gradient.size()) +
                        " entries, expected " + std::to_string(flat.size()));
  }
  for (std::size_t l = 0; l < flat.size(); ++l) flat[l] -= learning_rate * gradient[l];
  auto next = unflatten(flat, params.n_visible, params.n_hidden, params.n_mixing);
  for (int k = 0; k < params.n_mixing; ++k) next.c[k].imag(params.c[k].imag());
  return next;
}

TrainingResult run_training(const ChainParameters& chain, const TrainingConfig& config,
                            const TrainingHooks& hooks) {
  const int n = chain.n_sites;
  config.validate(n);
  return run_training(chain, config,
                      init_random(n, config.hidden_units(n), config.mixing_units(n), config.seed),
                      hooks);
}

TrainingResult run_training(const ChainParameters& chain, const TrainingConfig& config,
                            NdoParameters initial, const TrainingHooks& hooks) {
  chain.validate();
  const int n = chain.n_sites;
  config.validate(n);
  if (initial.n_visible != n) throw ArgumentError("initial parameters do not match chain size");

  TrainingResult result;
  result.final_params = std::move(initial);
  std::seed_seq seq{config.seed, config.sampler.seed};
  Rng rng(seq);

  for (int it = 0; it < config.n_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iteration = it;
    GradientEstimate est;
    try {
      const auto& params = result.final_params;
      const SampleBatch full = draw_batch(params, config.sampler, BatchKind::FullPair, rng);
      const SampleBatch diag = draw_batch(params, config.sampler, BatchKind::Diagonal, rng);
      est = estimate_cost_and_gradient(params, full, chain, config.threads);
      rec.cost_estimate = est.cost;
      rec.acceptance_rate = full.acceptance_rate();
      rec.site_excited_population = estimate_site_populations(diag);
      double mz = 0.0;
      for (double p : rec.site_excited_population) mz += 2.0 * p - 1.0;
      rec.magnetization_z = mz / n;
      result.final_params = sgd_step(params, est.gradient, config.learning_rate);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    } catch (const StuckChainError& e) {
      throw StuckChainError("iteration " + std::to_string(it) + ": " + e.what());
    }
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    spdlog::debug("iter {} cost {:.6e} acc {:.3f} mz {:.6f}", it, rec.cost_estimate,
                  rec.acceptance_rate, rec.magnetization_z);
    if (hooks.on_iteration) hooks.on_iteration(rec);
    result.records.push_back(std::move(rec));
    if (config.snapshot_every > 0 && (it + 1) % config.snapshot_every == 0 && hooks.on_snapshot) {
      hooks.on_snapshot(it, result.final_params);
    }
  }
  return result;
}

std::vector<double> trailing_moving_average(const std::vector<double>& series, int window) {
  if (window < 1) throw ArgumentError("window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= static_cast<std::size_t>(window)) sum -= series[i - window];
    const std::size_t count = std::min<std::size_t>(i + 1, window);
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

void write_records_csv(std::ostream& out, const std::vector<IterationRecord>& records,
                       int n_sites) {
  out << "iter,cost,acc_rate,mz";
  for (int i = 1; i <= n_sites; ++i) out << ",n" << i;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.iteration << ',' << r.cost_estimate << ',' << r.acceptance_rate << ','
        << r.magnetization_z;
    for (double p : r.site_excited_population) out << ',' << p;
    out << '\n';
  }
}

std::vector<IterationRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty records CSV");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 5 || header[0] != "iter" || header[1] != "cost" ||
      header[2] != "acc_rate" || header[3] != "mz") {
    throw ConfigError("unexpected records CSV header: " + line);
  }
  std::vector<IterationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
    if (values.size() != header.size()) throw ConfigError("ragged records CSV row: " + line);
    IterationRecord r;
    r.iteration = static_cast<int>(values[0]);
    r.cost_estimate = values[1];
    r.acceptance_rate = values[2];
    r.magnetization_z = values[3];
    r.site_excited_population.assign(values.begin() + 4, values.end());
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace ndo
