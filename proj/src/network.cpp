#include "ndo/network.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ndo/errors.hpp"

namespace ndo {

namespace {

const double kLn8 = std::log(8.0);

void check_pair(const NdoParameters& p, const SamplePair& pair) {
  if (pair.sigma.n_sites != p.n_visible || pair.eta.n_sites != p.n_visible) {
    throw ArgumentError("pair has " + std::to_string(pair.sigma.n_sites) +
                        " sites but network has " + std::to_string(p.n_visible));
  }
}

// Spin value (+1/-1) of bit i.
inline double spin_of(std::uint32_t bits, int i) { return ((bits >> i) & 1u) ? 1.0 : -1.0; }

struct Angles {
  Complex visible;
  std::vector<Complex> sigma, eta, mix;
};

void compute_angles(const NdoParameters& p, const SamplePair& pair, Angles& out) {
  const int n = p.n_visible;
  const std::uint32_t s = pair.sigma.bits;
  const std::uint32_t e = pair.eta.bits;
  out.visible = {};
  for (int i = 0; i < n; ++i) {
    out.visible += p.a[i] * spin_of(s, i) + std::conj(p.a[i]) * spin_of(e, i);
  }
  out.sigma.resize(p.n_hidden);
  out.eta.resize(p.n_hidden);
  for (int m = 0; m < p.n_hidden; ++m) {
    Complex ts = p.b[m];
    Complex te = std::conj(p.b[m]);
    const Complex* row = &p.w[static_cast<std::size_t>(m) * n];
    for (int i = 0; i < n; ++i) {
      ts += row[i] * spin_of(s, i);
      te += std::conj(row[i]) * spin_of(e, i);
    }
    out.sigma[m] = ts;
    out.eta[m] = te;
  }
  out.mix.resize(p.n_mixing);
  for (int k = 0; k < p.n_mixing; ++k) {
    Complex t = 2.0 * p.c[k].real();
    const Complex* row = &p.u[static_cast<std::size_t>(k) * n];
    for (int i = 0; i < n; ++i) {
      t += row[i] * spin_of(s, i) + std::conj(row[i]) * spin_of(e, i);
    }
    out.mix[k] = t;
  }
}

Complex sum_log_rho(const Angles& angles) {
  Complex total = kLn8 + angles.visible;
  for (const auto& z : angles.sigma) total += log_cosh(z);
  for (const auto& z : angles.eta) total += log_cosh(z);
  for (const auto& z : angles.mix) total += log_cosh(z);
  return total;
}

}  // namespace

NdoParameters::NdoParameters(int n, int m, int k)
    : n_visible(n), n_hidden(m), n_mixing(k), a(n), b(m), c(k),
      w(static_cast<std::size_t>(m) * n), u(static_cast<std::size_t>(k) * n) {
  if (n < 1 || n > kMaxSites || m < 0 || k < 0) {
    throw ArgumentError("invalid network shape");
  }
}

std::size_t NdoParameters::n_real_parameters() const {
  return count_real_parameters(n_visible, n_hidden, n_mixing);
}

bool NdoParameters::all_finite() const {
  auto finite = [](const std::vector<Complex>& v) {
    for (const auto& x : v) {
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    }
    return true;
  };
  return finite(a) && finite(b) && finite(c) && finite(w) && finite(u);
}

const char* block_name(ParameterBlock block) {
  switch (block) {
    case ParameterBlock::ReA: return "Re a";
    case ParameterBlock::ImA: return "Im a";
    case ParameterBlock::ReB: return "Re b";
    case ParameterBlock::ImB: return "Im b";
    case ParameterBlock::ReC: return "Re c";
    case ParameterBlock::ReW: return "Re W";
    case ParameterBlock::ImW: return "Im W";
    case ParameterBlock::ReU: return "Re U";
    case ParameterBlock::ImU: return "Im U";
  }
  return "?";
}

ParameterBlock block_of(const NdoParameters& shape, std::size_t index) {
  const std::size_t n = shape.n_visible, m = shape.n_hidden, k = shape.n_mixing;
  const std::size_t sizes[] = {n, n, m, m, k, m * n, m * n, k * n, k * n};
  for (int blk = 0; blk < 9; ++blk) {
    if (index < sizes[blk]) return static_cast<ParameterBlock>(blk);
    index -= sizes[blk];
  }
  throw ArgumentError("flat index out of range");
}

std::vector<double> flatten(const NdoParameters& p) {
  std::vector<double> flat;
  flat.reserve(p.n_real_parameters());
  for (const auto& x : p.a) flat.push_back(x.real());
  for (const auto& x : p.a) flat.push_back(x.imag());
  for (const auto& x : p.b) flat.push_back(x.real());
  for (const auto& x : p.b) flat.push_back(x.imag());
  for (const auto& x : p.c) flat.push_back(x.real());
  for (const auto& x : p.w) flat.push_back(x.real());
  for (const auto& x : p.w) flat.push_back(x.imag());
  for (const auto& x : p.u) flat.push_back(x.real());
  for (const auto& x : p.u) flat.push_back(x.imag());
  return flat;
}

NdoParameters unflatten(const std::vector<double>& flat, int n, int m, int k) {
  NdoParameters p(n, m, k);
  if (flat.size() != p.n_real_parameters()) {
    throw ArgumentError("flat vector has " + std::to_string(flat.size()) +
                        " entries, expected " + std::to_string(p.n_real_parameters()));
  }
  auto it = flat.begin();
  for (auto& x : p.a) x.real(*it++);
  for (auto& x : p.a) x.imag(*it++);
  for (auto& x : p.b) x.real(*it++);
  for (auto& x : p.b) x.imag(*it++);
  for (auto& x : p.c) x = {*it++, 0.0};
  for (auto& x : p.w) x.real(*it++);
  for (auto& x : p.w) x.imag(*it++);
  for (auto& x : p.u) x.real(*it++);
  for (auto& x : p.u) x.imag(*it++);
  return p;
}

NdoParameters init_random(int n, int m, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.01, 0.01);
  auto draw = [&] {
    double x = 0.0;
    while (x == 0.0) x = dist(rng);
    return x;
  };
  std::vector<double> flat(count_real_parameters(n, m, k));
  for (auto& x : flat) x = draw();
  return unflatten(flat, n, m, k);
}

Complex log_cosh(Complex z) {
  // cosh z = e^{z} (1 + e^{-2z}) / 2, taken on the half-plane Re z >= 0.
  const Complex zs = z.real() >= 0.0 ? z : -z;
  return zs + std::log(1.0 + std::exp(-2.0 * zs)) - std::numbers::ln2;
}

Complex log_rho(const NdoParameters& params, const SamplePair& pair) {
  check_pair(params, pair);
  thread_local Angles angles;
  compute_angles(params, pair, angles);
  return sum_log_rho(angles);
}

Complex log_rho_ratio(const NdoParameters& params, const SamplePair& from,
                      const SamplePair& to) {
  if (from == to) return {};
  return log_rho(params, to) - log_rho(params, from);
}

LogDerivatives log_derivatives(const NdoParameters& p, const SamplePair& pair) {
  check_pair(p, pair);
  Angles angles;
  compute_angles(p, pair, angles);
  const int n = p.n_visible;
  const Complex i_unit{0.0, 1.0};
  LogDerivatives d;
  d.reserve(p.n_real_parameters());
  std::vector<double> s(n), e(n);
  for (int i = 0; i < n; ++i) {
    s[i] = spin_of(pair.sigma.bits, i);
    e[i] = spin_of(pair.eta.bits, i);
  }
  std::vector<Complex> ts(p.n_hidden), te(p.n_hidden), tm(p.n_mixing);
  for (int m = 0; m < p.n_hidden; ++m) {
    ts[m] = std::tanh(angles.sigma[m]);
    te[m] = std::tanh(angles.eta[m]);
  }
  for (int k = 0; k < p.n_mixing; ++k) tm[k] = std::tanh(angles.mix[k]);

  for (int i = 0; i < n; ++i) d.push_back(s[i] + e[i]);
  for (int i = 0; i < n; ++i) d.push_back(i_unit * (s[i] - e[i]));
  for (int m = 0; m < p.n_hidden; ++m) d.push_back(ts[m] + te[m]);
  for (int m = 0; m < p.n_hidden; ++m) d.push_back(i_unit * (ts[m] - te[m]));
  for (int k = 0; k < p.n_mixing; ++k) d.push_back(2.0 * tm[k]);
  for (int m = 0; m < p.n_hidden; ++m)
    for (int i = 0; i < n; ++i) d.push_back(ts[m] * s[i] + te[m] * e[i]);
  for (int m = 0; m < p.n_hidden; ++m)
    for (int i = 0; i < n; ++i) d.push_back(i_unit * (ts[m] * s[i] - te[m] * e[i]));
  for (int k = 0; k < p.n_mixing; ++k)
    for (int i = 0; i < n; ++i) d.push_back(tm[k] * (s[i] + e[i]));
  for (int k = 0; k < p.n_mixing; ++k)
    for (int i = 0; i < n; ++i) d.push_back(i_unit * tm[k] * (s[i] - e[i]));
  return d;
}

NdoEvaluator::ShiftTable NdoEvaluator::make_table(std::size_t size) {
  return {std::vector<Complex>(size), std::vector<Complex>(size)};
}

NdoEvaluator::NdoEvaluator(const NdoParameters& params) : params_(params) {
  const int n = params_.n_visible, m = params_.n_hidden, k = params_.n_mixing;
  const std::size_t bonds = n > 1 ? n - 1 : 0;
  w_single_ = make_table(static_cast<std::size_t>(m) * n);
  w_bond_ = make_table(static_cast<std::size_t>(m) * bonds);
  u_single_ = make_table(static_cast<std::size_t>(k) * n);
  u_bond_ = make_table(static_cast<std::size_t>(k) * bonds);
  u_joint_ = make_table(static_cast<std::size_t>(k) * n);
  auto fill = [](ShiftTable& t, std::size_t idx, Complex shift) {
    t.cosh[idx] = std::cosh(shift);
    t.tanh[idx] = std::tanh(shift);
  };
  for (int r = 0; r < m; ++r) {
    for (int i = 0; i < n; ++i) {
      fill(w_single_, r * n + i, 2.0 * params_.W(r, i));
      if (i + 1 < n) fill(w_bond_, r * bonds + i, 2.0 * (params_.W(r, i) - params_.W(r, i + 1)));
    }
  }
  for (int r = 0; r < k; ++r) {
    for (int i = 0; i < n; ++i) {
      fill(u_single_, r * n + i, 2.0 * params_.U(r, i));
      fill(u_joint_, r * n + i, 4.0 * params_.U(r, i).real());
      if (i + 1 < n) fill(u_bond_, r * bonds + i, 2.0 * (params_.U(r, i) - params_.U(r, i + 1)));
    }
  }
}

void NdoEvaluator::evaluate(const SamplePair& pair, LocalState& out) const {
  check_pair(params_, pair);
  thread_local Angles angles;
  compute_angles(params_, pair, angles);
  out.pair = pair;
  out.log_rho = sum_log_rho(angles);
  out.tanh_sigma.resize(params_.n_hidden);
  out.tanh_eta.resize(params_.n_hidden);
  out.tanh_mix.resize(params_.n_mixing);
  for (int m = 0; m < params_.n_hidden; ++m) {
    out.tanh_sigma[m] = std::tanh(angles.sigma[m]);
    out.tanh_eta[m] = std::tanh(angles.eta[m]);
  }
  for (int k = 0; k < params_.n_mixing; ++k) out.tanh_mix[k] = std::tanh(angles.mix[k]);
}

LocalState NdoEvaluator::evaluate(const SamplePair& pair) const {
  LocalState s;
  evaluate(pair, s);
  return s;
}

// Shifting an angle by d multiplies cosh by cosh(d) (1 + tanh(angle) tanh(d)).
void NdoEvaluator::apply_single(const ShiftTable& t, int rows, int site, int sign,
                                bool conjugate, std::vector<Complex>& tanh_vals,
                                Complex& factor) const {
  const int n = params_.n_visible;
  for (int r = 0; r < rows; ++r) {
    const std::size_t idx = static_cast<std::size_t>(r) * n + site;
    Complex ch = t.cosh[idx], th = t.tanh[idx];
    if (conjugate) {
      ch = std::conj(ch);
      th = std::conj(th);
    }
    const Complex d = -static_cast<double>(sign) * th;
    const Complex tv = tanh_vals[r];
    const Complex denom = 1.0 + tv * d;
    factor *= ch * denom;
    tanh_vals[r] = (tv + d) / denom;
  }
}

void NdoEvaluator::apply_bond(const ShiftTable& t, int rows, int bond, int sign,
                              bool conjugate, std::vector<Complex>& tanh_vals,
                              Complex& factor) const {
  const int bonds = params_.n_visible - 1;
  for (int r = 0; r < rows; ++r) {
    const std::size_t idx = static_cast<std::size_t>(r) * bonds + bond;
    Complex ch = t.cosh[idx], th = t.tanh[idx];
    if (conjugate) {
      ch = std::conj(ch);
      th = std::conj(th);
    }
    const Complex d = -static_cast<double>(sign) * th;
    const Complex tv = tanh_vals[r];
    const Complex denom = 1.0 + tv * d;
    factor *= ch * denom;
    tanh_vals[r] = (tv + d) / denom;
  }
}

Complex NdoEvaluator::transition(const LocalState& from, const SamplePair& to,
                                 LocalState& to_state) const {
  const std::uint32_t s = from.pair.sigma.bits, e = from.pair.eta.bits;
  const std::uint32_t ms = s ^ to.sigma.bits;
  const std::uint32_t me = e ^ to.eta.bits;

  // Move kinds covered by the shift tables.
  enum class Kind { None, Single, Bond, Other };
  auto classify = [](std::uint32_t bits, std::uint32_t mask, int& pos) {
    if (mask == 0) return Kind::None;
    pos = std::countr_zero(mask);
    if (std::has_single_bit(mask)) return Kind::Single;
    if (mask == (3u << pos) && (((bits >> pos) ^ (bits >> (pos + 1))) & 1u)) return Kind::Bond;
    return Kind::Other;
  };
  int ps = 0, pe = 0;
  const Kind ks = classify(s, ms, ps);
  const Kind ke = classify(e, me, pe);
  const bool joint = ks == Kind::Single && ke == Kind::Single && ps == pe &&
                     (((s ^ e) >> ps) & 1u) == 0;
  const bool tabulated = ks != Kind::Other && ke != Kind::Other &&
                         (ks == Kind::None || ke == Kind::None || joint);
  if (!tabulated) {
    evaluate(to, to_state);
    return std::exp(to_state.log_rho - from.log_rho);
  }

  to_state.pair = to;
  to_state.tanh_sigma = from.tanh_sigma;
  to_state.tanh_eta = from.tanh_eta;
  to_state.tanh_mix = from.tanh_mix;
  if (ks == Kind::None && ke == Kind::None) {
    to_state.log_rho = from.log_rho;
    return 1.0;
  }

  const int m = params_.n_hidden, k = params_.n_mixing;
  Complex visible{};
  for (std::uint32_t bits = ms; bits; bits &= bits - 1) {
    const int i = std::countr_zero(bits);
    visible -= 2.0 * spin_of(s, i) * params_.a[i];
  }
  for (std::uint32_t bits = me; bits; bits &= bits - 1) {
    const int i = std::countr_zero(bits);
    visible -= 2.0 * spin_of(e, i) * std::conj(params_.a[i]);
  }

  Complex factor = 1.0;
  const int ss = static_cast<int>(spin_of(s, ps));
  const int se = static_cast<int>(spin_of(e, pe));
  if (ks == Kind::Single) apply_single(w_single_, m, ps, ss, false, to_state.tanh_sigma, factor);
  if (ks == Kind::Bond) apply_bond(w_bond_, m, ps, ss, false, to_state.tanh_sigma, factor);
  if (ke == Kind::Single) apply_single(w_single_, m, pe, se, true, to_state.tanh_eta, factor);
  if (ke == Kind::Bond) apply_bond(w_bond_, m, pe, se, true, to_state.tanh_eta, factor);

  if (joint) {
    apply_single(u_joint_, k, ps, ss, false, to_state.tanh_mix, factor);
  } else if (ks == Kind::Single) {
    apply_single(u_single_, k, ps, ss, false, to_state.tanh_mix, factor);
  } else if (ks == Kind::Bond) {
    apply_bond(u_bond_, k, ps, ss, false, to_state.tanh_mix, factor);
  } else if (ke == Kind::Single) {
    apply_single(u_single_, k, pe, se, true, to_state.tanh_mix, factor);
  } else if (ke == Kind::Bond) {
    apply_bond(u_bond_, k, pe, se, true, to_state.tanh_mix, factor);
  }

  to_state.log_rho = from.log_rho + visible + std::log(factor);
  return std::exp(visible) * factor;
}

nlohmann::json checkpoint_to_json(const NdoParameters& params, std::uint64_t seed) {
  return {{"schema", "ndo-checkpoint/1"},
          {"N", params.n_visible},
          {"M", params.n_hidden},
          {"K", params.n_mixing},
          {"seed", seed},
          {"parameters", flatten(params)}};
}

NdoParameters checkpoint_from_json(const nlohmann::json& j, std::uint64_t* seed) {
  try {
    auto p = unflatten(j.at("parameters").get<std::vector<double>>(), j.at("N").get<int>(),
                       j.at("M").get<int>(), j.at("K").get<int>());
    if (seed) *seed = j.at("seed").get<std::uint64_t>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace ndo
