#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "teu/prox.hpp"

using namespace teu;

namespace {

// Finite-difference divergence over both real and imaginary directions of
// every coordinate, averaged over 2N.
double fd_divergence(const AnalyticProx& p, const CVec& u, double mu, double h = 1e-6) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (cplx dir : {cplx{1.0, 0.0}, cplx{0.0, 1.0}}) {
      CVec up = u, dn = u;
      up[i] += h * dir;
      dn[i] -= h * dir;
      const cplx d = (apply(p, up, mu)[i] - apply(p, dn, mu)[i]) / (2.0 * h);
      acc += dir.real() * d.real() + dir.imag() * d.imag();
    }
  return acc / (2.0 * static_cast<double>(u.size()));
}

}  // namespace

TEST(Prox, SoftThresholdTextbookValues) {
  const auto p = AnalyticProx::soft_threshold(1.0);
  const auto out = apply(p, CVec{3.0, -0.5}, 1.0);
  EXPECT_DOUBLE_EQ(out[0].real(), 2.0);
  EXPECT_EQ(out[1], cplx(0.0, 0.0));
  // Complex shrinkage keeps the phase.
  const auto c = apply(p, CVec{cplx{3.0, 4.0}}, 1.0);
  EXPECT_NEAR(c[0].real(), 3.0 * 0.8, 1e-15);
  EXPECT_NEAR(c[0].imag(), 4.0 * 0.8, 1e-15);
}

TEST(Prox, IdentityAndTikhonov) {
  std::mt19937_64 rng(1);
  auto u = oracle::random_cvec(11, rng);
  EXPECT_EQ(apply(AnalyticProx::identity(), u, 1.0), u);
  const auto t = apply(AnalyticProx::tikhonov(1.0), u, 1.0);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(t[i], u[i] * 0.5);
  // gain mu sigma^2 / (mu sigma^2 + 1) with sigma^2 = 1/gamma
  const double gamma = 3.0, mu = 0.7, s2 = 1.0 / gamma;
  EXPECT_NEAR(AnalyticProx::tikhonov(gamma).tikhonov_gain(mu), mu * s2 / (mu * s2 + 1.0), 1e-15);
}

TEST(Prox, DivergenceClosedForms) {
  std::mt19937_64 rng(2);
  auto u = oracle::random_cvec(13, rng);
  EXPECT_EQ(divergence(AnalyticProx::identity(), u, 3.0), 1.0);
  EXPECT_EQ(divergence(AnalyticProx::tikhonov(1.0), u, 1.0), 0.5);
}

TEST(Prox, SoftThresholdDivergenceMatchesFiniteDifferences) {
  // Real u = [3, -0.5, 2], theta = 1: active entries contribute 1 - 1/(2|u|).
  const auto p = AnalyticProx::soft_threshold(1.0);
  const CVec u{3.0, -0.5, 2.0};
  const double closed = divergence(p, u, 1.0);
  EXPECT_NEAR(closed, ((1.0 - 1.0 / 6.0) + (1.0 - 1.0 / 4.0)) / 3.0, 1e-15);
  EXPECT_NEAR(closed, 19.0 / 36.0, 1e-15);
  EXPECT_NEAR(closed, fd_divergence(p, u, 1.0), 1e-8);

  std::mt19937_64 rng(3);
  auto v = oracle::random_cvec(40, rng);
  EXPECT_NEAR(divergence(p, v, 1.0), fd_divergence(p, v, 1.0), 1e-7);
}

TEST(Prox, NoiseScaledThreshold) {
  const auto p = AnalyticProx::soft_threshold(2.0, true);
  EXPECT_DOUBLE_EQ(p.threshold(4.0), 1.0);
  EXPECT_DOUBLE_EQ(apply(p, CVec{3.0}, 4.0)[0].real(), 2.0);
  EXPECT_THROW(apply(p, CVec{3.0}, 0.0), std::invalid_argument);
  EXPECT_THROW(AnalyticProx::soft_threshold(-1.0), std::invalid_argument);
  EXPECT_THROW(AnalyticProx::tikhonov(-1.0), std::invalid_argument);
}

TEST(Prox, NonExpansiveAndBoundedDivergence) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = oracle::random_cvec(20, rng), b = oracle::random_cvec(20, rng);
    for (const auto& p : {AnalyticProx::soft_threshold(0.7), AnalyticProx::tikhonov(2.0)}) {
      const double d_in = norm2(sub(a, b));
      EXPECT_LE(norm2(sub(apply(p, a, 1.3), apply(p, b, 1.3))), d_in * (1 + 1e-12));
      const double div = divergence(p, a, 1.3);
      EXPECT_GE(div, 0.0);
      EXPECT_LE(div, 1.0);
    }
  }
}

TEST(Prox, MonteCarloDivergence) {
  std::mt19937_64 rng(5);
  auto u = oracle::random_cvec(4096, rng);
  EXPECT_NEAR(mc_divergence(as_prox_fn(AnalyticProx::identity()), u, 1.0, 1e-3, 1), 1.0, 1e-9);
  EXPECT_NEAR(mc_divergence(as_prox_fn(AnalyticProx::tikhonov(1.0)), u, 1.0, 1e-4, 2), 0.5, 0.01);
  const auto st = AnalyticProx::soft_threshold(1.0);
  const double closed = divergence(st, u, 1.0);
  EXPECT_NEAR(mc_divergence(as_prox_fn(st), u, 1.0, 1e-4, 3), closed, 0.03 * closed);
  EXPECT_EQ(mc_divergence(as_prox_fn(st), u, 1.0, 1e-4, 3), mc_divergence(as_prox_fn(st), u, 1.0, 1e-4, 3));
}

TEST(Prox, MonteCarloConvergesWithSize) {
  const auto st = AnalyticProx::soft_threshold(0.8);
  double prev_err = 1.0;
  for (std::size_t n : {256u, 16384u}) {
    std::mt19937_64 rng(n);
    auto u = oracle::random_cvec(n, rng);
    double err = 0.0;
    for (std::uint64_t s = 0; s < 8; ++s)
      err += std::abs(mc_divergence(as_prox_fn(st), u, 1.0, 1e-5, s) - divergence(st, u, 1.0));
    err /= 8;
    EXPECT_LT(err, prev_err);
    prev_err = err;
  }
  EXPECT_LT(prev_err, 0.01);
}
