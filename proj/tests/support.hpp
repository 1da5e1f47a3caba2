#pragma once

// Independent reference constructions used by the tests. Nothing here calls
// the stencil code under test.

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ndo/model.hpp"
#include "ndo/network.hpp"

namespace ndo::testing {

using Mat = Eigen::MatrixXcd;

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

// Single-site basis: index 0 = down, 1 = up. Site 0 is the least
// significant bit of the configuration index.
inline Mat site_operator(const Mat& op, int site, int n) {
  Mat out = Mat::Identity(1, 1);
  for (int s = n - 1; s >= 0; --s) out = kron(out, s == site ? op : Mat::Identity(2, 2));
  return out;
}

inline Mat pauli_x() { Mat m(2, 2); m << 0, 1, 1, 0; return m; }
inline Mat pauli_y() {
  Mat m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}
inline Mat pauli_z() { Mat m(2, 2); m << -1, 0, 0, 1; return m; }
inline Mat raising() { Mat m(2, 2); m << 0, 0, 1, 0; return m; }  // |up><down|
inline Mat lowering() { return raising().adjoint(); }

inline Mat heisenberg_hamiltonian(const ChainParameters& p) {
  const int n = p.n_sites;
  const Eigen::Index dim = Eigen::Index{1} << n;
  Mat h = Mat::Zero(dim, dim);
  for (int i = 0; i + 1 < n; ++i) {
    for (const Mat& s : {pauli_x(), pauli_y(), pauli_z()}) {
      h += p.coupling_j / 4.0 * site_operator(s, i, n) * site_operator(s, i + 1, n);
    }
  }
  return h;
}

// Superoperator acting on row-major vec(rho): vec(A rho B) = (A kron B^T) vec(rho).
inline Mat kronecker_liouvillian(const ChainParameters& p) {
  const int n = p.n_sites;
  const Eigen::Index dim = Eigen::Index{1} << n;
  const Mat id = Mat::Identity(dim, dim);
  const Mat h = heisenberg_hamiltonian(p);
  Mat l = Complex(0, -1) * (kron(h, id) - kron(id, h.transpose()));
  for (int i = 0; i < n; ++i) {
    const Mat sm = site_operator(lowering(), i, n);
    const Mat sp = site_operator(raising(), i, n);
    const Mat num = sp * sm;
    const Mat hole = sm * sp;
    l += p.gamma_out[i] * (kron(sm, sp.transpose()) - 0.5 * kron(num, id) -
                           0.5 * kron(id, num.transpose()));
    l += p.gamma_in[i] * (kron(sp, sm.transpose()) - 0.5 * kron(hole, id) -
                          0.5 * kron(id, hole.transpose()));
  }
  return l;
}

inline ChainParameters random_chain(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rate(0.0, 0.5);
  ChainParameters c;
  c.n_sites = n;
  c.coupling_j = rate(rng) + 0.05;
  for (int i = 0; i < n; ++i) {
    c.gamma_in.push_back(rate(rng));
    c.gamma_out.push_back(rate(rng));
  }
  return c;
}

inline NdoParameters random_params(int n, int m, int k, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<double> flat(count_real_parameters(n, m, k));
  for (double& x : flat) x = d(rng);
  return unflatten(flat, n, m, k);
}

inline double spin_value(const SpinConfiguration& c, int i) { return c.up(i) ? 1.0 : -1.0; }

// rho(sigma, eta) straight from the product formula with std::cosh.
inline Complex naive_rho(const NdoParameters& p, const SamplePair& pair) {
  Complex value = 8.0;
  Complex lin = 0.0;
  for (int i = 0; i < p.n_visible; ++i) {
    lin += p.a[i] * spin_value(pair.sigma, i) + std::conj(p.a[i]) * spin_value(pair.eta, i);
  }
  value *= std::exp(lin);
  for (int m = 0; m < p.n_hidden; ++m) {
    Complex ts = p.b[m], te = std::conj(p.b[m]);
    for (int i = 0; i < p.n_visible; ++i) {
      ts += p.W(m, i) * spin_value(pair.sigma, i);
      te += std::conj(p.W(m, i)) * spin_value(pair.eta, i);
    }
    value *= std::cosh(ts) * std::cosh(te);
  }
  for (int k = 0; k < p.n_mixing; ++k) {
    Complex t = p.c[k] + std::conj(p.c[k]);
    for (int i = 0; i < p.n_visible; ++i) {
      t += p.U(k, i) * spin_value(pair.sigma, i) + std::conj(p.U(k, i)) * spin_value(pair.eta, i);
    }
    value *= std::cosh(t);
  }
  return value;
}

// Row-major vec of the (unnormalised) network density matrix.
inline Eigen::VectorXcd dense_rho_vector(const NdoParameters& p) {
  const int n = p.n_visible;
  const std::uint32_t dim = 1u << n;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(dim) * dim);
  for (std::uint32_t s = 0; s < dim; ++s) {
    for (std::uint32_t e = 0; e < dim; ++e) {
      v(static_cast<Eigen::Index>(s) * dim + e) = naive_rho(p, {{s, n}, {e, n}});
    }
  }
  return v;
}

// ||L rho||^2 / ||rho||^2 with the Kronecker Liouvillian.
inline double dense_normalized_cost(const NdoParameters& p, const ChainParameters& chain) {
  const Eigen::VectorXcd rho = dense_rho_vector(p);
  return (kronecker_liouvillian(chain) * rho).squaredNorm() / rho.squaredNorm();
}

// Parameters of the exact single-site steady state: a real, off-diagonals
// cancelled by one mixing unit with Im U = pi/4 (cosh(+-i pi/2) = 0).
inline NdoParameters single_site_steady_state(double gamma_in, double gamma_out) {
  NdoParameters p(1, 0, 1);
  p.a[0] = Complex(std::log(gamma_in / gamma_out) / 4.0, 0.0);
  p.u[0] = Complex(0.0, M_PI / 4.0);
  return p;
}

}  // namespace ndo::testing
