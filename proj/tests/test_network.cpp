#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ndo/errors.hpp"
#include "ndo/network.hpp"
#include "support.hpp"

using namespace ndo;
using namespace ndo::testing;

namespace {

SamplePair random_pair(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> d(0, (1u << n) - 1);
  return {{d(rng), n}, {d(rng), n}};
}

}  // namespace

TEST(LogRho, ZeroParametersGiveLn8) {
  const NdoParameters p(3, 3, 3);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const Complex v = log_rho(p, random_pair(3, rng));
    EXPECT_NEAR(v.real(), std::log(8.0), 1e-15);
    EXPECT_NEAR(v.imag(), 0.0, 1e-15);
  }
}

TEST(LogRho, SingleVisibleBias) {
  NdoParameters p(1, 0, 0);
  p.a[0] = Complex(0.3, 0.0);
  const Complex v = log_rho(p, {{1, 1}, {1, 1}});
  EXPECT_NEAR(v.real(), std::log(8.0) + 0.6, 1e-15);
}

TEST(LogRho, MatchesDirectProduct) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_params(3, 3, 3, 100 + rep, 0.7);
    const auto pair = random_pair(3, rng);
    const Complex direct = naive_rho(p, pair);
    const Complex ours = std::exp(log_rho(p, pair));
    EXPECT_LT(std::abs(ours - direct) / std::abs(direct), 1e-12);
  }
}

TEST(LogRho, HermitianByConstruction) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = random_params(4, 3, 5, 200 + rep, 1.5);
    const auto pair = random_pair(4, rng);
    const Complex forward = log_rho(p, pair);
    const Complex backward = log_rho(p, {pair.eta, pair.sigma});
    EXPECT_NEAR(forward.real(), backward.real(), 1e-12);
    // imaginary parts agree up to the 2 pi branch of log
    const double d = std::remainder(forward.imag() + backward.imag(), 2.0 * std::numbers::pi);
    EXPECT_NEAR(d, 0.0, 1e-12);
  }
}

TEST(LogRho, DiagonalIsRealPositive) {
  for (int rep = 0; rep < 30; ++rep) {
    const auto p = random_params(4, 4, 4, 300 + rep, 2.0);
    for (auto s : enumerate_configurations(4)) {
      const Complex v = log_rho(p, {s, s});
      EXPECT_NEAR(std::remainder(v.imag(), 2.0 * std::numbers::pi), 0.0, 1e-10);
    }
  }
}

TEST(LogRho, FiniteForLargeParameters) {
  const auto p = random_params(5, 5, 5, 400, 1000.0);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const Complex v = log_rho(p, random_pair(5, rng));
    EXPECT_TRUE(std::isfinite(v.real()) && std::isfinite(v.imag()));
  }
}

TEST(LogCosh, MatchesStdCoshAndIsConjugateSymmetric) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-15.0, 15.0);
  for (int i = 0; i < 200; ++i) {
    const Complex z(d(rng), d(rng));
    const Complex expected = std::log(std::cosh(z));
    const Complex got = log_cosh(z);
    EXPECT_NEAR(got.real(), expected.real(), 1e-12);
    EXPECT_NEAR(std::remainder(got.imag() - expected.imag(), 2.0 * std::numbers::pi), 0.0,
                1e-10);
    const Complex conj_val = log_cosh(std::conj(z));
    EXPECT_NEAR(std::abs(conj_val - std::conj(got)), 0.0, 1e-12);
  }
  EXPECT_NEAR(log_cosh(Complex(800.0, 0.3)).real(), 800.0 - std::log(2.0), 1e-12);
  EXPECT_NEAR(log_cosh(Complex(-800.0, 0.3)).real(), 800.0 - std::log(2.0), 1e-12);
}

TEST(LogRhoRatio, MatchesSubtraction) {
  std::mt19937_64 rng(6);
  const auto p = random_params(5, 4, 6, 500, 0.9);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_pair(5, rng);
    const auto b = random_pair(5, rng);
    EXPECT_NEAR(std::abs(log_rho_ratio(p, a, b) - (log_rho(p, b) - log_rho(p, a))), 0.0, 1e-10);
  }
  const auto a = random_pair(5, rng);
  EXPECT_EQ(log_rho_ratio(p, a, a), Complex{});
  EXPECT_EQ(log_rho_ratio(NdoParameters(5, 4, 6), a, random_pair(5, rng)), Complex{});
}

TEST(Evaluator, TransitionsMatchSubtractionOnEveryStencilEntry) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 3 + rep;
    const auto chain = random_chain(n, rng);
    const auto p = random_params(n, n, n, 600 + rep, 1.0);
    const NdoEvaluator eval(p);
    LocalState to;
    for (int i = 0; i < 40; ++i) {
      const auto pair = random_pair(n, rng);
      const LocalState from = eval.evaluate(pair);
      EXPECT_NEAR(std::abs(from.log_rho - log_rho(p, pair)), 0.0, 1e-12);
      for (const auto& e : liouvillian_row(pair, chain).entries) {
        const Complex ratio = eval.transition(from, e.target, to);
        const Complex expected = std::exp(log_rho(p, e.target) - log_rho(p, pair));
        EXPECT_LT(std::abs(ratio - expected) / std::abs(expected), 1e-10);
        const LocalState fresh = eval.evaluate(e.target);
        for (int m = 0; m < p.n_hidden; ++m) {
          EXPECT_NEAR(std::abs(to.tanh_sigma[m] - fresh.tanh_sigma[m]), 0.0, 1e-10);
          EXPECT_NEAR(std::abs(to.tanh_eta[m] - fresh.tanh_eta[m]), 0.0, 1e-10);
        }
        for (int k = 0; k < p.n_mixing; ++k) {
          EXPECT_NEAR(std::abs(to.tanh_mix[k] - fresh.tanh_mix[k]), 0.0, 1e-10);
        }
      }
    }
  }
}

TEST(LogDerivatives, ZeroParameters) {
  const NdoParameters p(2, 2, 2);
  const SamplePair pair{{0b01, 2}, {0b11, 2}};
  const auto d = log_derivatives(p, pair);
  ASSERT_EQ(d.size(), p.n_real_parameters());
  // Re a block: sigma_i + eta_i
  EXPECT_EQ(d[0], Complex(2.0, 0.0));
  EXPECT_EQ(d[1], Complex(0.0, 0.0));
  // Im a block: i (sigma_i - eta_i)
  EXPECT_EQ(d[2], Complex(0.0, 0.0));
  EXPECT_EQ(d[3], Complex(0.0, -2.0));
  for (std::size_t l = 4; l < d.size(); ++l) {
    const auto block = block_of(p, l);
    if (block == ParameterBlock::ReB || block == ParameterBlock::ImB ||
        block == ParameterBlock::ReC || block == ParameterBlock::ReW ||
        block == ParameterBlock::ImW || block == ParameterBlock::ReU ||
        block == ParameterBlock::ImU) {
      EXPECT_EQ(d[l], Complex{}) << block_name(block);
    }
  }
}

TEST(LogDerivatives, MatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 2 + rep % 3;
    const auto p = random_params(n, 2, 2, 700 + rep, 0.8);
    const auto pair = random_pair(n, rng);
    const auto d = log_derivatives(p, pair);
    auto flat = flatten(p);
    const double h = 1e-5;
    for (std::size_t l = 0; l < flat.size(); ++l) {
      auto up = flat, down = flat;
      up[l] += h;
      down[l] -= h;
      const Complex fd =
          (log_rho(unflatten(up, n, 2, 2), pair) - log_rho(unflatten(down, n, 2, 2), pair)) /
          (2.0 * h);
      EXPECT_LT(std::abs(fd - d[l]), 1e-6 + 1e-5 * std::abs(d[l]))
          << "slot " << l << " " << block_name(block_of(p, l));
    }
  }
}

TEST(LogDerivatives, ImaginaryMixingBiasIsInert) {
  auto p = random_params(3, 3, 3, 800, 0.5);
  const SamplePair pair{{0b011, 3}, {0b110, 3}};
  const Complex before = log_rho(p, pair);
  p.c[1] += Complex(0.0, 0.37);
  EXPECT_NEAR(std::abs(log_rho(p, pair) - before), 0.0, 1e-15);
}

TEST(Flatten, ParameterCounts) {
  EXPECT_EQ(count_real_parameters(10, 10, 10), 450u);
  EXPECT_EQ(count_real_parameters(6, 6, 6), 174u);
  EXPECT_EQ(NdoParameters(10, 10, 10).n_real_parameters(), 450u);
  EXPECT_EQ(flatten(NdoParameters(6, 6, 6)).size(), 174u);
}

TEST(Flatten, RoundTripAndLengthCheck) {
  const auto p = random_params(4, 3, 2, 900, 1.0);
  EXPECT_EQ(unflatten(flatten(p), 4, 3, 2), p);
  EXPECT_THROW(unflatten(std::vector<double>(5), 4, 3, 2), ArgumentError);
}

TEST(Flatten, BlockOrder) {
  const NdoParameters shape(2, 3, 4);
  std::vector<ParameterBlock> seen;
  for (std::size_t l = 0; l < shape.n_real_parameters(); ++l) {
    const auto b = block_of(shape, l);
    if (seen.empty() || seen.back() != b) seen.push_back(b);
  }
  const std::vector<ParameterBlock> expected = {
      ParameterBlock::ReA, ParameterBlock::ImA, ParameterBlock::ReB,
      ParameterBlock::ImB, ParameterBlock::ReC, ParameterBlock::ReW,
      ParameterBlock::ImW, ParameterBlock::ReU, ParameterBlock::ImU};
  EXPECT_EQ(seen, expected);
}

TEST(InitRandom, RangeDeterminismAndSeeds) {
  const auto p = init_random(10, 10, 10, 42);
  for (double x : flatten(p)) {
    EXPECT_LE(std::abs(x), 0.01);
    EXPECT_NE(x, 0.0);
  }
  for (const auto& c : p.c) EXPECT_EQ(c.imag(), 0.0);
  EXPECT_EQ(init_random(10, 10, 10, 42), p);
  EXPECT_NE(init_random(10, 10, 10, 43), p);
}

TEST(Checkpoint, RoundTripKeepsSeedAndShape) {
  const auto p = random_params(3, 6, 2, 1000, 1.0);
  const auto j = checkpoint_to_json(p, 77);
  EXPECT_EQ(j.at("N").get<int>(), 3);
  EXPECT_EQ(j.at("M").get<int>(), 6);
  EXPECT_EQ(j.at("K").get<int>(), 2);
  std::uint64_t seed = 0;
  const auto back = checkpoint_from_json(nlohmann::json::parse(j.dump()), &seed);
  EXPECT_EQ(back, p);
  EXPECT_EQ(seed, 77u);
  auto bad = j;
  bad["parameters"].erase(bad["parameters"].begin());
  EXPECT_ANY_THROW(checkpoint_from_json(bad));
}
