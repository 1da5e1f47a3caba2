#pragma once

// Brute-force Lindblad integration on the full density matrix. Provides the
// benchmark steady states the variational runs are compared against.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndo/model.hpp"

namespace ndo {

struct DenseDensityMatrix {
  int n_sites = 0;
  std::size_t dim = 0;
  std::vector<Complex> entries;  // row-major, dim * dim

  DenseDensityMatrix() = default;
  explicit DenseDensityMatrix(int n_sites);

  Complex& operator()(std::size_t row, std::size_t col) { return entries[row * dim + col]; }
  const Complex& operator()(std::size_t row, std::size_t col) const {
    return entries[row * dim + col];
  }

  Complex trace() const;
  double purity() const;
  /// max |rho - rho^dagger|
  double hermiticity_error() const;

  static DenseDensityMatrix maximally_mixed(int n_sites);
  static DenseDensityMatrix basis_state(const SpinConfiguration& config);
};

struct SiteObservables {
  std::vector<double> site_excited_population;
  double magnetization_z = 0.0;
};

struct SteadyStateResult {
  DenseDensityMatrix rho;
  double residual = 0.0;
  long steps_taken = 0;
  std::vector<double> site_excited_population;
  double magnetization_z = 0.0;
};

/// Applies L to a dense rho using per-configuration Hamiltonian stencils and
/// elementwise dissipators; the 4^N superoperator is never formed.
class LindbladIntegrator {
 public:
  explicit LindbladIntegrator(ChainParameters params);

  const ChainParameters& params() const { return params_; }

  void apply(const DenseDensityMatrix& rho, DenseDensityMatrix& out) const;
  DenseDensityMatrix apply(const DenseDensityMatrix& rho) const;

  /// Classic RK4. When k1 is non-null it receives L rho at the start of the
  /// step (used as the residual). step_index only labels error messages.
  DenseDensityMatrix step(const DenseDensityMatrix& rho, double dt,
                          DenseDensityMatrix* k1 = nullptr, long step_index = 0) const;

 private:
  ChainParameters params_;
  std::size_t dim_;
  std::vector<double> h_diag_;
  std::vector<std::uint32_t> ff_offsets_;  // CSR over configurations
  std::vector<std::uint32_t> ff_target_;
  std::vector<double> ff_amp_;
  std::vector<double> decay_diag_;  // sum_i gamma_out n_i + gamma_in (1 - n_i)

  mutable DenseDensityMatrix k_[4];
  mutable DenseDensityMatrix tmp_;
};

double default_time_step(const ChainParameters& params);

DenseDensityMatrix rk4_step(const DenseDensityMatrix& rho, const ChainParameters& params,
                            double dt);

struct SteadyStateOptions {
  double dt = 0.0;  // 0 selects default_time_step
  double residual_tol = 1e-9;
  long max_steps = 1'000'000;
};

SteadyStateResult find_steady_state(const ChainParameters& params,
                                    const DenseDensityMatrix& initial,
                                    const SteadyStateOptions& options = {});

SiteObservables observables_from_dense(const DenseDensityMatrix& rho);

/// Max-norm of L rho.
double liouvillian_residual(const ChainParameters& params, const DenseDensityMatrix& rho);

/// Unit-trace kernel vector of the dense Liouvillian via a direct linear
/// solve with one row replaced by the trace condition. N <= 7.
DenseDensityMatrix dense_kernel_state(const ChainParameters& params);

nlohmann::json to_json(const SteadyStateResult& result);

/// 16-byte header ("NDO0", u32 dim, 8 reserved zero bytes) followed by
/// dim*dim little-endian complex doubles, row-major.
void write_rho_dump(const std::filesystem::path& path, const DenseDensityMatrix& rho);
DenseDensityMatrix read_rho_dump(const std::filesystem::path& path);

}  // namespace ndo
