#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "teu/metrics.hpp"

using namespace teu;
using namespace teu::metrics;

namespace {

std::vector<double> random_image(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Psnr, KnownValues) {
  std::vector<double> ref(100, 0.5), test(100, 0.5);
  EXPECT_TRUE(std::isinf(psnr(ref, test, 1.0)));
  for (auto& t : test) t += 0.1;  // MSE 0.01
  EXPECT_NEAR(psnr(ref, test, 1.0), 20.0, 1e-12);
  EXPECT_THROW(psnr(ref, std::vector<double>(99), 1.0), DimensionError);
  EXPECT_THROW(psnr(ref, test, 0.0), std::invalid_argument);
}

TEST(Psnr, ScaleInvariant) {
  std::mt19937_64 rng(1);
  auto a = random_image(256, rng), b = random_image(256, rng);
  const double p = psnr(a, b, 1.0);
  for (auto& v : a) v *= 3.7;
  for (auto& v : b) v *= 3.7;
  EXPECT_NEAR(psnr(a, b, 3.7), p, 1e-10);
}

TEST(Psnr, DecreasesWithNoiseLevel) {
  std::mt19937_64 rng(2);
  const auto ref = random_image(64 * 64, rng);
  std::normal_distribution<double> g;
  std::vector<double> n(ref.size());
  for (auto& v : n) v = g(rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    std::vector<double> t(ref.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = ref[i] + s * n[i];
    const double p = psnr(ref, t);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdenticalIsOne) {
  std::mt19937_64 rng(3);
  const auto a = random_image(20 * 20, rng);
  EXPECT_EQ(ssim(a, a, 20, 20), 1.0);
  ComplexImage img(16, 16, oracle::random_cvec(256, rng));
  EXPECT_EQ(ssim(img, img), 1.0);
}

TEST(Ssim, MatchesWindowedOracle) {
  std::mt19937_64 rng(4);
  const auto a = random_image(32 * 32, rng), b = random_image(32 * 32, rng);
  EXPECT_NEAR(ssim(a, b, 32, 32, 1.0), oracle::ssim_windows(a, b, 32, 32, 1.0), 1e-10);
  std::vector<double> c(a);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.8 * a[i] + 0.2 * b[i];
  EXPECT_NEAR(ssim(a, c, 32, 32, 1.0), oracle::ssim_windows(a, c, 32, 32, 1.0), 1e-10);
}

TEST(Ssim, NegatedReferenceAndSymmetry) {
  std::mt19937_64 rng(5);
  const auto a = random_image(24 * 24, rng);
  std::vector<double> neg(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i];
  EXPECT_LT(ssim(a, neg, 24, 24, 2.0), 1.0);
  const auto b = random_image(24 * 24, rng);
  EXPECT_NEAR(ssim(a, b, 24, 24, 1.0), ssim(b, a, 24, 24, 1.0), 1e-14);
  EXPECT_THROW(ssim(std::vector<double>(100), std::vector<double>(100), 10, 10), DimensionError);
}

TEST(Nmse, KnownValues) {
  std::mt19937_64 rng(6);
  const auto r = oracle::random_cvec(50, rng);
  EXPECT_EQ(nmse(r, r), 0.0);
  EXPECT_NEAR(nmse(r, CVec(50)), 1.0, 1e-15);
  EXPECT_NEAR(nmse(r, scaled(r, 1.1)), 0.01, 1e-12);
  EXPECT_THROW(nmse(CVec(3), CVec(3)), std::invalid_argument);
}

TEST(Metrics, ComplexImagesUseMagnitude) {
  std::mt19937_64 rng(7);
  ComplexImage a(16, 16, oracle::random_cvec(256, rng));
  ComplexImage b = a;
  for (auto& v : b.data) v *= std::polar(1.0, 0.7);
  const auto rep = evaluate(a, b);
  EXPECT_GT(rep.psnr_db, 250.0);
  EXPECT_NEAR(rep.ssim, 1.0, 1e-12);
  EXPECT_GT(rep.nmse, 0.0);
  const auto crop = center_crop(a, 8, 8);
  EXPECT_EQ(crop(0, 0), a(4, 4));
}
