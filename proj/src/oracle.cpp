#include "ndo/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <spdlog/spdlog.h>

#include "ndo/errors.hpp"

namespace ndo {

static_assert(std::endian::native == std::endian::little,
              "rho dump format assumes a little-endian host");

DenseDensityMatrix::DenseDensityMatrix(int n)
    : n_sites(n), dim(std::size_t{1} << n) {
  if (n < 1 || n > kMaxDenseSites) {
    throw CapacityError("dense density matrix limited to " +
                        std::to_string(kMaxDenseSites) + " sites, got " + std::to_string(n));
  }
  entries.assign(dim * dim, Complex{});
}

Complex DenseDensityMatrix::trace() const {
  Complex t{};
  for (std::size_t i = 0; i < dim; ++i) t += (*this)(i, i);
  return t;
}

double DenseDensityMatrix::purity() const {
  // tr(rho^2) = sum_ij rho_ij rho_ji = sum |rho_ij|^2 for Hermitian rho.
  double p = 0.0;
  for (const auto& x : entries) p += std::norm(x);
  return p;
}

double DenseDensityMatrix::hermiticity_error() const {
  double err = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      err = std::max(err, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
    }
  }
  return err;
}

DenseDensityMatrix DenseDensityMatrix::maximally_mixed(int n) {
  DenseDensityMatrix rho(n);
  const double p = 1.0 / static_cast<double>(rho.dim);
  for (std::size_t i = 0; i < rho.dim; ++i) rho(i, i) = p;
  return rho;
}

DenseDensityMatrix DenseDensityMatrix::basis_state(const SpinConfiguration& config) {
  DenseDensityMatrix rho(config.n_sites);
  rho(config.bits, config.bits) = 1.0;
  return rho;
}

LindbladIntegrator::LindbladIntegrator(ChainParameters params)
    : params_(std::move(params)) {
  params_.validate();
  const int n = params_.n_sites;
  if (n > kMaxDenseSites) {
    throw CapacityError("dense integration limited to " + std::to_string(kMaxDenseSites) +
                        " sites");
  }
  dim_ = std::size_t{1} << n;
  h_diag_.resize(dim_);
  decay_diag_.resize(dim_);
  ff_offsets_.reserve(dim_ + 1);
  ff_offsets_.push_back(0);
  for (auto c : enumerate_configurations(n)) {
    const auto terms = hamiltonian_action(c, params_);
    h_diag_[c.bits] = terms.front().amplitude.real();
    for (std::size_t t = 1; t < terms.size(); ++t) {
      ff_target_.push_back(terms[t].config.bits);
      ff_amp_.push_back(terms[t].amplitude.real());
    }
    ff_offsets_.push_back(static_cast<std::uint32_t>(ff_target_.size()));
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      d += c.up(i) ? params_.gamma_out[i] : params_.gamma_in[i];
    }
    decay_diag_[c.bits] = d;
  }
  for (auto& k : k_) k = DenseDensityMatrix(n);
  tmp_ = DenseDensityMatrix(n);
}

void LindbladIntegrator::apply(const DenseDensityMatrix& rho, DenseDensityMatrix& out) const {
  const std::size_t dim = dim_;
  const std::uint32_t full = static_cast<std::uint32_t>(dim - 1);
  const Complex* in = rho.entries.data();
  Complex* res = out.entries.data();
  const Complex minus_i{0.0, -1.0};

  for (std::size_t s = 0; s < dim; ++s) {
    const Complex* row = in + s * dim;
    Complex* dst = res + s * dim;
    for (std::size_t e = 0; e < dim; ++e) {
      Complex acc = (minus_i * (h_diag_[s] - h_diag_[e]) -
                     0.5 * (decay_diag_[s] + decay_diag_[e])) *
                    row[e];
      Complex coherent{};
      for (auto k = ff_offsets_[e]; k < ff_offsets_[e + 1]; ++k) {
        coherent -= ff_amp_[k] * row[ff_target_[k]];
      }
      for (auto k = ff_offsets_[s]; k < ff_offsets_[s + 1]; ++k) {
        coherent += ff_amp_[k] * in[ff_target_[k] * dim + e];
      }
      acc += minus_i * coherent;

      std::uint32_t equal = ~(static_cast<std::uint32_t>(s) ^ static_cast<std::uint32_t>(e)) & full;
      while (equal) {
        const int i = std::countr_zero(equal);
        equal &= equal - 1;
        const std::uint32_t m = 1u << i;
        const double rate = (s & m) ? params_.gamma_in[i] : params_.gamma_out[i];
        acc += rate * in[(s ^ m) * dim + (e ^ m)];
      }
      dst[e] = acc;
    }
  }
}

DenseDensityMatrix LindbladIntegrator::apply(const DenseDensityMatrix& rho) const {
  DenseDensityMatrix out(params_.n_sites);
  apply(rho, out);
  return out;
}

DenseDensityMatrix LindbladIntegrator::step(const DenseDensityMatrix& rho, double dt,
                                            DenseDensityMatrix* k1_out,
                                            long step_index) const {
  if (rho.n_sites != params_.n_sites) throw ArgumentError("rho size does not match chain");
  const std::size_t len = rho.entries.size();
  auto axpy = [&](const DenseDensityMatrix& base, double a, const DenseDensityMatrix& k,
                  DenseDensityMatrix& dst) {
    for (std::size_t i = 0; i < len; ++i) dst.entries[i] = base.entries[i] + a * k.entries[i];
  };

  apply(rho, k_[0]);
  axpy(rho, 0.5 * dt, k_[0], tmp_);
  apply(tmp_, k_[1]);
  axpy(rho, 0.5 * dt, k_[1], tmp_);
  apply(tmp_, k_[2]);
  axpy(rho, dt, k_[2], tmp_);
  apply(tmp_, k_[3]);

  DenseDensityMatrix next = rho;
  const double w = dt / 6.0;
  for (std::size_t i = 0; i < len; ++i) {
    next.entries[i] += w * (k_[0].entries[i] + 2.0 * k_[1].entries[i] +
                            2.0 * k_[2].entries[i] + k_[3].entries[i]);
    if (!std::isfinite(next.entries[i].real()) || !std::isfinite(next.entries[i].imag())) {
      throw DivergenceError("non-finite density matrix entry at step " +
                                std::to_string(step_index),
                            step_index);
    }
  }

  const Complex before = rho.trace();
  const Complex after = next.trace();
  if (std::abs(after - before) > 1e-12 && std::abs(after) > 0.0) {
    spdlog::warn("rk4 step {}: trace drift {:.3e}, renormalizing", step_index,
                 std::abs(after - before));
    const Complex scale = before / after;
    for (auto& x : next.entries) x *= scale;
  }
  if (k1_out) *k1_out = k_[0];
  return next;
}

double default_time_step(const ChainParameters& params) {
  const double rate = params.max_rate();
  return rate > 0.0 ? 0.05 / rate : 0.05;
}

namespace {

void check_time_step(const ChainParameters& params, double dt) {
  if (!(dt > 0.0)) throw ArgumentError("dt must be positive");
  if (dt * params.max_rate() > 0.1) {
    throw ArgumentError("dt * max(J, gamma) must not exceed 0.1");
  }
}

double max_abs(const DenseDensityMatrix& m) {
  double r = 0.0;
  for (const auto& x : m.entries) r = std::max(r, std::abs(x));
  return r;
}

}  // namespace

DenseDensityMatrix rk4_step(const DenseDensityMatrix& rho, const ChainParameters& params,
                            double dt) {
  check_time_step(params, dt);
  return LindbladIntegrator(params).step(rho, dt);
}

SiteObservables observables_from_dense(const DenseDensityMatrix& rho) {
  SiteObservables obs;
  const int n = rho.n_sites;
  obs.site_excited_population.assign(n, 0.0);
  const double tr = rho.trace().real();
  for (std::size_t c = 0; c < rho.dim; ++c) {
    const double p = rho(c, c).real();
    for (int i = 0; i < n; ++i) {
      if ((c >> i) & 1u) obs.site_excited_population[i] += p;
    }
  }
  double mz = 0.0;
  for (auto& pop : obs.site_excited_population) {
    pop /= tr;
    mz += 2.0 * pop - 1.0;
  }
  obs.magnetization_z = mz / n;
  return obs;
}

SteadyStateResult find_steady_state(const ChainParameters& params,
                                    const DenseDensityMatrix& initial,
                                    const SteadyStateOptions& options) {
  params.validate();
  if (initial.n_sites != params.n_sites) throw ArgumentError("initial state size mismatch");
  if (!(options.residual_tol > 0.0)) throw ArgumentError("residual_tol must be positive");
  const double dt = options.dt > 0.0 ? options.dt : default_time_step(params);
  check_time_step(params, dt);

  LindbladIntegrator integrator(params);
  DenseDensityMatrix rho = initial;
  DenseDensityMatrix deriv(params.n_sites);
  double residual = 0.0;
  long step = 0;
  for (;; ++step) {
    if (step == options.max_steps) {
      integrator.apply(rho, deriv);
      residual = max_abs(deriv);
      if (residual < options.residual_tol) break;
      throw TimeoutError("steady state not reached after " + std::to_string(step) +
                             " steps (residual " + std::to_string(residual) + ")",
                         residual);
    }
    DenseDensityMatrix next = integrator.step(rho, dt, &deriv, step);
    residual = max_abs(deriv);
    if (residual < options.residual_tol) break;
    rho = std::move(next);
  }

  SteadyStateResult result;
  auto obs = observables_from_dense(rho);
  result.rho = std::move(rho);
  result.residual = residual;
  result.steps_taken = step;
  result.site_excited_population = std::move(obs.site_excited_population);
  result.magnetization_z = obs.magnetization_z;
  return result;
}

double liouvillian_residual(const ChainParameters& params, const DenseDensityMatrix& rho) {
  return max_abs(LindbladIntegrator(params).apply(rho));
}

DenseDensityMatrix dense_kernel_state(const ChainParameters& params) {
  const Eigen::MatrixXcd l = build_dense_liouvillian(params);
  const int n = params.n_sites;
  const Eigen::Index dim = Eigen::Index{1} << n;
  Eigen::MatrixXcd a = l;
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(dim * dim);
  // Diagonal rows sum to zero (trace preservation), so row (0,0) is redundant.
  a.row(0).setZero();
  for (Eigen::Index c = 0; c < dim; ++c) a(0, c * dim + c) = 1.0;
  rhs(0) = 1.0;
  const Eigen::VectorXcd x = a.fullPivLu().solve(rhs);

  DenseDensityMatrix rho(n);
  for (Eigen::Index i = 0; i < dim * dim; ++i) rho.entries[i] = x(i);
  return rho;
}

nlohmann::json to_json(const SteadyStateResult& result) {
  return {{"n_sites", result.rho.n_sites},
          {"residual", result.residual},
          {"steps_taken", result.steps_taken},
          {"site_excited_population", result.site_excited_population},
          {"magnetization_z", result.magnetization_z}};
}

void write_rho_dump(const std::filesystem::path& path, const DenseDensityMatrix& rho) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  char header[16] = {'N', 'D', 'O', '0'};
  const auto dim = static_cast<std::uint32_t>(rho.dim);
  std::memcpy(header + 4, &dim, sizeof dim);
  out.write(header, sizeof header);
  out.write(reinterpret_cast<const char*>(rho.entries.data()),
            static_cast<std::streamsize>(rho.entries.size() * sizeof(Complex)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DenseDensityMatrix read_rho_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char header[16];
  in.read(header, sizeof header);
  if (!in || std::memcmp(header, "NDO0", 4) != 0) {
    throw std::runtime_error("not a density-matrix dump: " + path.string());
  }
  std::uint32_t dim = 0;
  std::memcpy(&dim, header + 4, sizeof dim);
  if (dim == 0 || !std::has_single_bit(dim)) throw std::runtime_error("bad dump dimension");
  DenseDensityMatrix rho(std::countr_zero(dim));
  in.read(reinterpret_cast<char*>(rho.entries.data()),
          static_cast<std::streamsize>(rho.entries.size() * sizeof(Complex)));
  if (!in) throw std::runtime_error("truncated dump: " + path.string());
  return rho;
}

}  // namespace ndo
