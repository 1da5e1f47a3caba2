#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include "ndo/errors.hpp"
#include "ndo/network.hpp"
#include "ndo/oracle.hpp"
#include "ndo/run_config.hpp"
#include "ndo/sampling.hpp"
#include "ndo/training.hpp"

namespace ndo {

namespace {

ChainParameters random_chain(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rate(0.05, 0.4);
  ChainParameters c;
  c.n_sites = n;
  c.coupling_j = rate(rng);
  for (int i = 0; i < n; ++i) {
    c.gamma_in.push_back(rate(rng));
    c.gamma_out.push_back(rate(rng));
  }
  return c;
}

NdoParameters random_params(int n, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  const NdoParameters shape(n, n, n);
  std::vector<double> flat(shape.n_real_parameters());
  for (double& x : flat) x = d(rng);
  return unflatten(flat, n, n, n);
}

// ||L rho||^2 / ||rho||^2 from the dense superoperator.
double dense_cost(const NdoParameters& p, const ChainParameters& chain) {
  const Eigen::MatrixXcd l = build_dense_liouvillian(chain);
  const int n = chain.n_sites;
  const std::size_t dim = std::size_t{1} << n;
  Eigen::VectorXcd rho(static_cast<Eigen::Index>(dim * dim));
  for (std::uint32_t s = 0; s < dim; ++s) {
    for (std::uint32_t e = 0; e < dim; ++e) {
      rho(static_cast<Eigen::Index>(s * dim + e)) =
          std::exp(log_rho(p, {SpinConfiguration(s, n), SpinConfiguration(e, n)}));
    }
  }
  return (l * rho).squaredNorm() / rho.squaredNorm();
}

double trace_preservation(int n) {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXcd l = build_dense_liouvillian(random_chain(n, rng));
  const std::size_t dim = std::size_t{1} << n;
  double worst = 0.0;
  for (Eigen::Index col = 0; col < l.cols(); ++col) {
    Complex sum = 0.0;
    for (std::size_t s = 0; s < dim; ++s) sum += l(static_cast<Eigen::Index>(s * dim + s), col);
    worst = std::max(worst, std::abs(sum));
  }
  return worst;
}

double hermiticity_preservation(int n) {
  std::mt19937_64 rng(11);
  const LindbladIntegrator integrator(random_chain(n, rng));
  DenseDensityMatrix rho(n);
  std::normal_distribution<double> g;
  for (std::size_t r = 0; r < rho.dim; ++r) {
    for (std::size_t c = r; c < rho.dim; ++c) {
      rho(r, c) = r == c ? Complex(g(rng), 0.0) : Complex(g(rng), g(rng));
      rho(c, r) = std::conj(rho(r, c));
    }
  }
  return integrator.apply(rho).hermiticity_error();
}

double single_site_oracle() {
  const auto r = find_steady_state(ChainParameters::uniform(1, 0.42, 0.21, 0.20),
                                   DenseDensityMatrix::maximally_mixed(1));
  return std::abs(r.site_excited_population[0] - 0.21 / 0.41);
}

double oracle_vs_kernel() {
  std::mt19937_64 rng(3);
  const ChainParameters chain = random_chain(3, rng);
  const auto rk4 = find_steady_state(chain, DenseDensityMatrix::maximally_mixed(3));
  const auto kernel = dense_kernel_state(chain);
  double worst = 0.0;
  for (std::size_t i = 0; i < kernel.entries.size(); ++i) {
    worst = std::max(worst, std::abs(rk4.rho.entries[i] - kernel.entries[i]));
  }
  return worst;
}

double log_derivative_error() {
  const int n = 3;
  const NdoParameters p = random_params(n, 5, 0.5);
  const SamplePair pair{SpinConfiguration(0b101, n), SpinConfiguration(0b011, n)};
  const auto analytic = log_derivatives(p, pair);
  auto flat = flatten(p);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t l = 0; l < flat.size(); ++l) {
    auto up = flat, down = flat;
    up[l] += h;
    down[l] -= h;
    const Complex fd = (log_rho(unflatten(up, n, n, n), pair) -
                        log_rho(unflatten(down, n, n, n), pair)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic[l]));
  }
  return worst;
}

double transition_error() {
  const int n = 4;
  const NdoParameters p = random_params(n, 9, 0.8);
  const NdoEvaluator eval(p);
  const ChainParameters chain = ChainParameters::uniform(n, 0.42, 0.21, 0.20);
  double worst = 0.0;
  LocalState to;
  for (std::uint32_t s = 0; s < 16; s += 3) {
    for (std::uint32_t e = 0; e < 16; e += 5) {
      const SamplePair pair{SpinConfiguration(s, n), SpinConfiguration(e, n)};
      const LocalState from = eval.evaluate(pair);
      for (const auto& entry : liouvillian_row(pair, chain).entries) {
        const Complex ratio = eval.transition(from, entry.target, to);
        const Complex direct = std::exp(log_rho(p, entry.target) - log_rho(p, pair));
        worst = std::max(worst, std::abs(ratio - direct) / std::abs(direct));
      }
    }
  }
  return worst;
}

double gradient_error() {
  const int n = 2;
  const ChainParameters chain = ChainParameters::boundary_driven(n, 0.42, 0.2, 0.2, 0.21, 0.2,
                                                                 0.2, 0.21);
  const NdoParameters p = random_params(n, 13, 0.3);
  const auto grad = estimate_gradient(p, sample_exact(p, BatchKind::FullPair), chain);
  auto flat = flatten(p);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < flat.size(); ++l) {
    auto up = flat, down = flat;
    up[l] += h;
    down[l] -= h;
    const double fd = (dense_cost(unflatten(up, n, n, n), chain) -
                       dense_cost(unflatten(down, n, n, n), chain)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[l]) / std::max(1e-3, std::abs(fd)));
  }
  return worst;
}

double exact_weight_sum() {
  const NdoParameters p = random_params(3, 17, 0.5);
  double worst = 0.0;
  for (BatchKind kind : {BatchKind::FullPair, BatchKind::Diagonal}) {
    double sum = 0.0;
    for (double w : sample_exact(p, kind).weights) sum += w;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

double checkpoint_round_trip() {
  const NdoParameters p = random_params(3, 19, 1.0);
  return checkpoint_from_json(checkpoint_to_json(p, 19)) == p ? 0.0 : 1.0;
}

double records_round_trip() {
  IterationRecord r;
  r.iteration = 4;
  r.cost_estimate = 0.123456789012345678;
  r.acceptance_rate = 1.0 / 3.0;
  r.magnetization_z = -0.02;
  r.site_excited_population = {0.1, 0.2, 1.0 / 7.0};
  std::stringstream ss;
  write_records_csv(ss, {r}, 3);
  const auto back = read_records_csv(ss);
  if (back.size() != 1) return 1.0;
  double worst = std::abs(back[0].cost_estimate - r.cost_estimate);
  for (int i = 0; i < 3; ++i) {
    worst = std::max(worst,
                     std::abs(back[0].site_excited_population[i] - r.site_excited_population[i]));
  }
  return worst;
}

}  // namespace

int selftest(std::ostream& log) {
  struct Check {
    const char* name;
    std::function<double()> measure;
    double tolerance;
  };
  const std::vector<Check> checks = {
      {"liouvillian preserves trace (N=3)", [] { return trace_preservation(3); }, 1e-12},
      {"liouvillian preserves hermiticity (N=3)", [] { return hermiticity_preservation(3); },
       1e-12},
      {"single-site steady state", single_site_oracle, 1e-8},
      {"rk4 steady state equals dense kernel (N=3)", oracle_vs_kernel, 1e-6},
      {"log-derivatives match finite differences", log_derivative_error, 1e-7},
      {"cached transitions match direct ratios", transition_error, 1e-10},
      {"exact-batch gradient matches finite differences", gradient_error, 1e-4},
      {"exact batch weights normalized", exact_weight_sum, 1e-12},
      {"checkpoint round trip", checkpoint_round_trip, 0.0},
      {"records csv round trip", records_round_trip, 0.0},
  };
  int failures = 0;
  for (const auto& check : checks) {
    double value = 0.0;
    bool ok = false;
    std::string detail;
    try {
      value = check.measure();
      ok = std::isfinite(value) && value <= check.tolerance;
    } catch (const std::exception& e) {
      detail = std::string(" (") + e.what() + ")";
    }
    log << (ok ? "PASS " : "FAIL ") << check.name << ": " << value << " <= " << check.tolerance
        << detail << '\n';
    if (!ok) ++failures;
  }
  return failures;
}

}  // namespace ndo
