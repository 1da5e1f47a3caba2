#pragma once

// Restricted-Boltzmann-machine density operator with visible biases a,
// per-side hidden layers (b, W) and a mixing layer (c, U) that couples the
// row and column spins:
//
//   ln rho(s, e) = ln 8 + a.s + a*.e
//                + sum_m [ln cosh(b_m + W_m.s) + ln cosh(b_m* + W_m*.e)]
//                + sum_k  ln cosh(c_k + c_k* + U_k.s + U_k*.e)
//
// Complex parameters are trained as independent real and imaginary parts.
// Im c never enters (only c + c* does), so it is stored but kept at zero and
// excluded from the flat parameter vector.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndo/model.hpp"

namespace ndo {

struct NdoParameters {
  int n_visible = 0;  // N
  int n_hidden = 0;   // M
  int n_mixing = 0;   // K
  std::vector<Complex> a;  // N
  std::vector<Complex> b;  // M
  std::vector<Complex> c;  // K
  std::vector<Complex> w;  // M x N, row-major
  std::vector<Complex> u;  // K x N, row-major

  NdoParameters() = default;
  NdoParameters(int n, int m, int k);

  Complex& W(int m, int i) { return w[static_cast<std::size_t>(m) * n_visible + i]; }
  const Complex& W(int m, int i) const { return w[static_cast<std::size_t>(m) * n_visible + i]; }
  Complex& U(int k, int i) { return u[static_cast<std::size_t>(k) * n_visible + i]; }
  const Complex& U(int k, int i) const { return u[static_cast<std::size_t>(k) * n_visible + i]; }

  /// 2N + 2M + K + 2MN + 2KN
  std::size_t n_real_parameters() const;
  bool all_finite() const;

  friend bool operator==(const NdoParameters&, const NdoParameters&) = default;
};

constexpr std::size_t count_real_parameters(std::size_t n, std::size_t m, std::size_t k) {
  return 2 * n + 2 * m + k + 2 * m * n + 2 * k * n;
}

/// Parameter blocks in flattening order.
enum class ParameterBlock { ReA, ImA, ReB, ImB, ReC, ReW, ImW, ReU, ImU };

const char* block_name(ParameterBlock block);

/// Block of flat index `index`.
ParameterBlock block_of(const NdoParameters& shape, std::size_t index);

/// Flat order: Re a, Im a, Re b, Im b, Re c, Re W, Im W, Re U, Im U
/// (matrices row-major).
std::vector<double> flatten(const NdoParameters& params);
NdoParameters unflatten(const std::vector<double>& flat, int n, int m, int k);

/// Every real/imaginary part uniform in [-0.01, 0.01] \ {0}; Im c = 0.
NdoParameters init_random(int n, int m, int k, std::uint64_t seed);

/// ln cosh(z) without overflow for large |Re z|; conj-symmetric.
Complex log_cosh(Complex z);

Complex log_rho(const NdoParameters& params, const SamplePair& pair);

/// log_rho(to) - log_rho(from)
Complex log_rho_ratio(const NdoParameters& params, const SamplePair& from,
                      const SamplePair& to);

/// d ln rho / d theta_l for every real slot l of the flat layout.
using LogDerivatives = std::vector<Complex>;
LogDerivatives log_derivatives(const NdoParameters& params, const SamplePair& pair);

/// Hidden-unit activations of one matrix element.
struct LocalState {
  SamplePair pair;
  Complex log_rho;
  std::vector<Complex> tanh_sigma;  // tanh(b + W s), M
  std::vector<Complex> tanh_eta;    // tanh(b* + W* e), M
  std::vector<Complex> tanh_mix;    // tanh(c + c* + U s + U* e), K
};

/// Caches cosh/tanh of the angle shifts produced by single-site flips,
/// anti-aligned neighbour exchanges and joint (row+column) flips, so the
/// amplitude ratio to a Liouvillian-connected element costs one complex
/// multiply per affected hidden unit.
class NdoEvaluator {
 public:
  explicit NdoEvaluator(const NdoParameters& params);

  const NdoParameters& params() const { return params_; }

  void evaluate(const SamplePair& pair, LocalState& out) const;
  LocalState evaluate(const SamplePair& pair) const;

  /// rho(to) / rho(from.pair); fills `to_state` activations (log_rho of
  /// to_state is from.log_rho + log of the ratio).
  Complex transition(const LocalState& from, const SamplePair& to, LocalState& to_state) const;

 private:
  struct ShiftTable {
    std::vector<Complex> cosh;
    std::vector<Complex> tanh;
  };
  static ShiftTable make_table(std::size_t size);

  // Single-site and bond shifts for a spin at +1 (negate tanh for -1).
  void apply_single(const ShiftTable& t, int rows, int site, int sign, bool conjugate,
                    std::vector<Complex>& tanh_vals, Complex& factor) const;
  void apply_bond(const ShiftTable& t, int rows, int bond, int sign, bool conjugate,
                  std::vector<Complex>& tanh_vals, Complex& factor) const;

  NdoParameters params_;
  ShiftTable w_single_, w_bond_;   // 2 W_mi, 2 (W_mi - W_m,i+1)
  ShiftTable u_single_, u_bond_;   // 2 U_ki, 2 (U_ki - U_k,i+1)
  ShiftTable u_joint_;             // 4 Re U_ki
};

nlohmann::json checkpoint_to_json(const NdoParameters& params, std::uint64_t seed);
/// Returns parameters; writes the stored seed to *seed when non-null.
NdoParameters checkpoint_from_json(const nlohmann::json& j, std::uint64_t* seed = nullptr);

}  // namespace ndo
