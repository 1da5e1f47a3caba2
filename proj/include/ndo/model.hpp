#pragma once

// Boundary-driven isotropic Heisenberg chain with site-local pumping and
// decay. Spin strings are packed into a word: bit i set means site i is up
// (s_i = +1, excited), cleared means down (s_i = -1). Sites are 0-based.

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace ndo {

using Complex = std::complex<double>;

inline constexpr int kMaxSites = 24;
inline constexpr int kMaxDenseSites = 13;
inline constexpr int kMaxLiouvillianSites = 7;

struct SpinConfiguration {
  std::uint32_t bits = 0;
  int n_sites = 0;

  SpinConfiguration() = default;
  SpinConfiguration(std::uint32_t bits, int n_sites);

  bool up(int site) const { return (bits >> site) & 1u; }
  int spin(int site) const { return up(site) ? 1 : -1; }
  int popcount() const;
  SpinConfiguration flipped(int site) const {
    return {bits ^ (1u << site), n_sites};
  }

  friend bool operator==(const SpinConfiguration&, const SpinConfiguration&) = default;
  friend auto operator<=>(const SpinConfiguration&, const SpinConfiguration&) = default;
};

struct SamplePair {
  SpinConfiguration sigma;
  SpinConfiguration eta;

  int n_sites() const { return sigma.n_sites; }
  bool is_diagonal() const { return sigma.bits == eta.bits; }

  friend bool operator==(const SamplePair&, const SamplePair&) = default;
  friend auto operator<=>(const SamplePair&, const SamplePair&) = default;
};

struct ChainParameters {
  int n_sites = 0;
  double coupling_j = 0.0;
  std::vector<double> gamma_in;
  std::vector<double> gamma_out;

  /// Throws ArgumentError when sizes or rates are invalid.
  void validate() const;
  bool is_symmetric() const;
  /// Uniform bulk with at least one edge differing from it.
  bool is_boundary_driven() const;
  double max_rate() const;

  static ChainParameters uniform(int n_sites, double coupling_j, double gamma_in,
                                 double gamma_out);
  /// Bulk rates everywhere, with the two end sites overridden.
  static ChainParameters boundary_driven(int n_sites, double coupling_j,
                                         double bulk_in, double bulk_out,
                                         double left_in, double left_out,
                                         double right_in, double right_out);
};

void to_json(nlohmann::json& j, const ChainParameters& p);
void from_json(const nlohmann::json& j, ChainParameters& p);

struct ConfigAmplitude {
  SpinConfiguration config;
  Complex amplitude;
};

struct StencilEntry {
  SamplePair target;
  Complex amplitude;
};

/// One row of the Liouvillian: (L rho)(source) = sum amplitude * rho(target).
struct LiouvillianStencil {
  SamplePair source;
  std::vector<StencilEntry> entries;
};

/// Largest number of entries liouvillian_row can return for n sites.
constexpr int max_stencil_entries(int n_sites) {
  return 1 + 2 * (n_sites - 1) + 2 * n_sites;
}

/// H|config> expanded in the spin basis; first entry is the diagonal term.
std::vector<ConfigAmplitude> hamiltonian_action(const SpinConfiguration& config,
                                                const ChainParameters& params);

LiouvillianStencil liouvillian_row(const SamplePair& pair,
                                   const ChainParameters& params);

/// Same as liouvillian_row but reuses the output buffer.
void liouvillian_row(const SamplePair& pair, const ChainParameters& params,
                     LiouvillianStencil& out);

/// Row/column index of (sigma, eta) is sigma.bits * 2^N + eta.bits, matching
/// the row-major flattening of a density matrix.
Eigen::MatrixXcd build_dense_liouvillian(const ChainParameters& params);

/// All 2^N configurations in ascending bit order.
class ConfigurationRange {
 public:
  class iterator {
   public:
    using value_type = SpinConfiguration;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(std::uint32_t bits, int n) : bits_(bits), n_(n) {}
    SpinConfiguration operator*() const { return {bits_, n_}; }
    iterator& operator++() {
      ++bits_;
      return *this;
    }
    iterator operator++(int) {
      auto tmp = *this;
      ++bits_;
      return tmp;
    }
    bool operator==(const iterator& o) const { return bits_ == o.bits_; }

   private:
    std::uint32_t bits_ = 0;
    int n_ = 0;
  };

  explicit ConfigurationRange(int n_sites);
  iterator begin() const { return {0u, n_}; }
  iterator end() const { return {1u << n_, n_}; }
  std::size_t size() const { return std::size_t{1} << n_; }

 private:
  int n_;
};

inline ConfigurationRange enumerate_configurations(int n_sites) {
  return ConfigurationRange(n_sites);
}

}  // namespace ndo
