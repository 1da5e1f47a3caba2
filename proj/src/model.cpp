#include "ndo/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "ndo/errors.hpp"

namespace ndo {

SpinConfiguration::SpinConfiguration(std::uint32_t bits_, int n_sites_)
    : bits(bits_), n_sites(n_sites_) {
  if (n_sites < 1 || n_sites > kMaxSites) {
    throw ArgumentError("n_sites must be in [1, " + std::to_string(kMaxSites) +
                        "], got " + std::to_string(n_sites));
  }
  if (n_sites < 32 && (bits >> n_sites) != 0) {
    throw ArgumentError("configuration has bits set beyond n_sites");
  }
}

int SpinConfiguration::popcount() const { return std::popcount(bits); }

void ChainParameters::validate() const {
  if (n_sites < 1 || n_sites > kMaxSites) {
    throw ArgumentError("n_sites must be in [1, " + std::to_string(kMaxSites) + "]");
  }
  if (!std::isfinite(coupling_j)) throw ArgumentError("coupling_j must be finite");
  if (gamma_in.size() != static_cast<std::size_t>(n_sites) ||
      gamma_out.size() != static_cast<std::size_t>(n_sites)) {
    throw ArgumentError("gamma_in/gamma_out must have n_sites entries");
  }
  auto bad = [](double g) { return !std::isfinite(g) || g < 0.0; };
  if (std::ranges::any_of(gamma_in, bad) || std::ranges::any_of(gamma_out, bad)) {
    throw ArgumentError("rates must be finite and nonnegative");
  }
}

bool ChainParameters::is_symmetric() const {
  for (int i = 1; i < n_sites; ++i) {
    if (gamma_in[i] != gamma_in[0] || gamma_out[i] != gamma_out[0]) return false;
  }
  return true;
}

bool ChainParameters::is_boundary_driven() const {
  if (n_sites < 3 || is_symmetric()) return false;
  for (int i = 2; i < n_sites - 1; ++i) {
    if (gamma_in[i] != gamma_in[1] || gamma_out[i] != gamma_out[1]) return false;
  }
  return true;
}

double ChainParameters::max_rate() const {
  double m = std::abs(coupling_j);
  for (double g : gamma_in) m = std::max(m, g);
  for (double g : gamma_out) m = std::max(m, g);
  return m;
}

ChainParameters ChainParameters::uniform(int n, double j, double g_in, double g_out) {
  ChainParameters p{n, j, std::vector<double>(n, g_in), std::vector<double>(n, g_out)};
  p.validate();
  return p;
}

ChainParameters ChainParameters::boundary_driven(int n, double j, double bulk_in,
                                                 double bulk_out, double left_in,
                                                 double left_out, double right_in,
                                                 double right_out) {
  auto p = uniform(n, j, bulk_in, bulk_out);
  p.gamma_in.front() = left_in;
  p.gamma_out.front() = left_out;
  p.gamma_in.back() = right_in;
  p.gamma_out.back() = right_out;
  p.validate();
  return p;
}

void to_json(nlohmann::json& j, const ChainParameters& p) {
  j = nlohmann::json{{"n_sites", p.n_sites},
                     {"coupling_j", p.coupling_j},
                     {"gamma_in", p.gamma_in},
                     {"gamma_out", p.gamma_out}};
}

void from_json(const nlohmann::json& j, ChainParameters& p) {
  for (const auto& [key, _] : j.items()) {
    if (key != "n_sites" && key != "coupling_j" && key != "gamma_in" && key != "gamma_out") {
      throw ConfigError("chain: unknown key '" + key + "'");
    }
  }
  try {
    p.n_sites = j.at("n_sites").get<int>();
    p.coupling_j = j.at("coupling_j").get<double>();
    // a scalar rate applies to every site
    const auto rates = [&](const char* key) {
      const auto& v = j.at(key);
      if (v.is_number()) return std::vector<double>(std::max(p.n_sites, 0), v.get<double>());
      return v.get<std::vector<double>>();
    };
    p.gamma_in = rates("gamma_in");
    p.gamma_out = rates("gamma_out");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
}

namespace {

void check_sizes(int n, const ChainParameters& params) {
  if (n != params.n_sites) {
    throw ArgumentError("configuration has " + std::to_string(n) +
                        " sites but chain has " + std::to_string(params.n_sites));
  }
}

// Flip-flop partners and diagonal energy of one side. Calls emit(bits, amp).
template <class Emit>
double hamiltonian_terms(std::uint32_t bits, int n, double j, Emit&& emit) {
  double diag = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    const bool a = (bits >> i) & 1u;
    const bool b = (bits >> (i + 1)) & 1u;
    if (a == b) {
      diag += 0.25 * j;
    } else {
      diag -= 0.25 * j;
      emit(bits ^ (3u << i), 0.5 * j);
    }
  }
  return diag;
}

}  // namespace

std::vector<ConfigAmplitude> hamiltonian_action(const SpinConfiguration& config,
                                                const ChainParameters& params) {
  check_sizes(config.n_sites, params);
  std::vector<ConfigAmplitude> out;
  out.reserve(config.n_sites);
  out.push_back({config, 0.0});
  const double diag = hamiltonian_terms(
      config.bits, config.n_sites, params.coupling_j, [&](std::uint32_t b, double amp) {
        out.push_back({SpinConfiguration{b, config.n_sites}, amp});
      });
  out.front().amplitude = diag;
  return out;
}

void liouvillian_row(const SamplePair& pair, const ChainParameters& params,
                     LiouvillianStencil& out) {
  const int n = pair.sigma.n_sites;
  check_sizes(n, params);
  check_sizes(pair.eta.n_sites, params);
  out.source = pair;
  out.entries.clear();
  out.entries.push_back({pair, 0.0});

  const std::uint32_t s = pair.sigma.bits;
  const std::uint32_t e = pair.eta.bits;
  const Complex minus_i{0.0, -1.0};

  // -i H rho: H acts on the row index; +i rho H: on the column index.
  const double diag_s = hamiltonian_terms(s, n, params.coupling_j, [&](std::uint32_t b, double amp) {
    out.entries.push_back({{{b, n}, pair.eta}, minus_i * amp});
  });
  const double diag_e = hamiltonian_terms(e, n, params.coupling_j, [&](std::uint32_t b, double amp) {
    out.entries.push_back({{pair.sigma, {b, n}}, -minus_i * amp});
  });
  Complex diag = minus_i * (diag_s - diag_e);

  for (int i = 0; i < n; ++i) {
    const int ns = (s >> i) & 1u;
    const int ne = (e >> i) & 1u;
    diag -= 0.5 * (params.gamma_out[i] * (ns + ne) + params.gamma_in[i] * (2 - ns - ne));
    // Jump terms feed population from the opposite state on both sides.
    if (ns == 1 && ne == 1 && params.gamma_in[i] != 0.0) {
      out.entries.push_back({{{s ^ (1u << i), n}, {e ^ (1u << i), n}}, params.gamma_in[i]});
    } else if (ns == 0 && ne == 0 && params.gamma_out[i] != 0.0) {
      out.entries.push_back({{{s ^ (1u << i), n}, {e ^ (1u << i), n}}, params.gamma_out[i]});
    }
  }
  out.entries.front().amplitude = diag;

  // Flip-flop and jump targets are distinct from each other and from the
  // source, so only zero amplitudes need pruning.
  std::erase_if(out.entries, [](const StencilEntry& x) { return x.amplitude == Complex{}; });
}

LiouvillianStencil liouvillian_row(const SamplePair& pair, const ChainParameters& params) {
  LiouvillianStencil out;
  out.entries.reserve(max_stencil_entries(pair.sigma.n_sites));
  liouvillian_row(pair, params, out);
  return out;
}

Eigen::MatrixXcd build_dense_liouvillian(const ChainParameters& params) {
  params.validate();
  const int n = params.n_sites;
  if (n > kMaxLiouvillianSites) {
    throw CapacityError("dense Liouvillian limited to " +
                        std::to_string(kMaxLiouvillianSites) + " sites");
  }
  const Eigen::Index dim = Eigen::Index{1} << n;
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim * dim, dim * dim);
  LiouvillianStencil row;
  for (auto sigma : enumerate_configurations(n)) {
    for (auto eta : enumerate_configurations(n)) {
      liouvillian_row({sigma, eta}, params, row);
      const Eigen::Index r = sigma.bits * dim + eta.bits;
      for (const auto& entry : row.entries) {
        m(r, entry.target.sigma.bits * dim + entry.target.eta.bits) += entry.amplitude;
      }
    }
  }
  return m;
}

ConfigurationRange::ConfigurationRange(int n_sites) : n_(n_sites) {
  if (n_sites < 1 || n_sites > kMaxSites) {
    throw ArgumentError("n_sites out of range: " + std::to_string(n_sites));
  }
}

}  // namespace ndo
