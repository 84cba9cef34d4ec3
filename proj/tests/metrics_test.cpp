// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "dmq/error.hpp"
#include "dmq/metrics.hpp"
#include "oracles.hpp"

namespace dmq {
namespace {

Tensor2D random_spd(std::size_t d, RngStream& rng, double ridge = 0.1) {
  Tensor2D a(d, d);
  for (double& v : a.values()) v = rng.normal();
  Tensor2D s = matmul_nt(a, a);
  for (std::size_t i = 0; i < d; ++i) s(i, i) += ridge;
  return s;
}

std::vector<double> random_vec(std::size_t d, RngStream& rng) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

GaussianFit fit1(double mu, double var) { return make_gaussian_fit({mu}, Tensor2D(1, 1, var)); }

TEST(FitGaussian, IdenticalRowsGiveZeroCovariance) {
  const GaussianFit f = fit_gaussian(Tensor2D(5, 3, {1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3}));
  for (double v : f.sigma.values()) EXPECT_EQ(v, 0.0);
}

TEST(FitGaussian, CornerSquareMean) {
  const GaussianFit f = fit_gaussian(Tensor2D(4, 2, {0, 0, 2, 0, 0, 2, 2, 2}));
  EXPECT_DOUBLE_EQ(f.mu[0], 1.0);
  EXPECT_DOUBLE_EQ(f.mu[1], 1.0);
  // Unbiased: sum of squared deviations 4 over n - 1 = 3.
  EXPECT_DOUBLE_EQ(f.sigma(0, 0), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.sigma(0, 1), 0.0);
}

TEST(FitGaussian, StandardNormalCovarianceNearIdentity) {
  RngStream rng(3, 3);
  const GaussianFit f = fit_gaussian(gaussian_sample(rng, 100000, 3));
  double frob = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double d = f.sigma(i, j) - (i == j ? 1.0 : 0.0);
      frob += d * d;
    }
  EXPECT_LT(std::sqrt(frob), 0.02 * std::sqrt(3.0));
}

TEST(FitGaussian, NeedsTwoRows) { EXPECT_THROW(fit_gaussian(Tensor2D(1, 2)), ArgumentError); }

TEST(JacobiEigen, ReconstructsMatrix) {
  RngStream rng(4, 4);
  for (std::size_t d : {1u, 2u, 3u, 5u, 8u, 16u}) {
    const Tensor2D s = random_spd(d, rng);
    const EigenDecomposition e = jacobi_eigen(s);
    for (std::size_t k = 1; k < d; ++k) EXPECT_LE(e.values[k - 1], e.values[k]);
    Tensor2D r(d, d);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          r(i, j) += e.values[k] * e.vectors(i, k) * e.vectors(j, k);
    double frob = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double diff = r.values()[i] - s.values()[i];
      frob += diff * diff;
    }
    EXPECT_LT(std::sqrt(frob), 1e-8) << "d=" << d;
  }
}

TEST(SqrtmPsd, SquaresBack) {
  RngStream rng(5, 5);
  const Tensor2D s = random_spd(4, rng);
  const Tensor2D r = sqrtm_psd(s);
  const Tensor2D rr = matmul(r, r);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(rr.values()[i], s.values()[i], 1e-9);
}

TEST(SqrtmPsd, ClampsNegativeEigenvalues) {
  const Tensor2D r = sqrtm_psd(Tensor2D(2, 2, {1.0, 0.0, 0.0, -1e-12}));
  EXPECT_NEAR(r(0, 0), 1.0, 1e-15);
  EXPECT_EQ(r(1, 1), 0.0);
}

TEST(FrechetDistance, SelfDistanceIsZero) {
  RngStream rng(6, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const GaussianFit a = make_gaussian_fit(random_vec(3, rng), random_spd(3, rng));
    EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-9);
  }
}

TEST(FrechetDistance, OneDimensionalClosedForm) {
  RngStream rng(7, 7);
  for (int trial = 0; trial < 100; ++trial) {
    const double m1 = rng.normal(), m2 = rng.normal();
    const double s1 = 0.1 + rng.uniform() * 3.0, s2 = 0.1 + rng.uniform() * 3.0;
    const double expected = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
    EXPECT_NEAR(frechet_distance(fit1(m1, s1 * s1), fit1(m2, s2 * s2)), expected, 1e-9);
  }
}

TEST(FrechetDistance, SymmetricAndBoundedBelowByMeanGap) {
  RngStream rng(8, 8);
  for (int trial = 0; trial < 200; ++trial) {
    const auto mu_a = random_vec(3, rng), mu_b = random_vec(3, rng);
    const GaussianFit a = make_gaussian_fit(mu_a, random_spd(3, rng));
    const GaussianFit b = make_gaussian_fit(mu_b, random_spd(3, rng));
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    EXPECT_NEAR(ab, ba, 1e-8);
    double gap = 0.0;
    for (int i = 0; i < 3; ++i) gap += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]);
    EXPECT_GE(ab, gap - 1e-12);
  }
}

TEST(FrechetDistance, AgreesWithPowerIterationOracleIn3D) {
  RngStream rng(9, 9);
  for (int trial = 0; trial < 25; ++trial) {
    const auto mu_a = random_vec(3, rng), mu_b = random_vec(3, rng);
    const Tensor2D sa = random_spd(3, rng, 0.5), sb = random_spd(3, rng, 0.5);
    const double fd = frechet_distance(make_gaussian_fit(mu_a, sa), make_gaussian_fit(mu_b, sb));
    EXPECT_NEAR(fd, oracle::frechet(mu_a, sa, mu_b, sb), 1e-6);
  }
}

TEST(FrechetDistance, DimensionMismatchThrows) {
  EXPECT_THROW(frechet_distance(fit1(0, 1), make_gaussian_fit({0, 0}, Tensor2D::identity(2))),
               ArgumentError);
}

TEST(KlGaussian, ZeroForEqualFits) {
  RngStream rng(10, 10);
  const GaussianFit a = make_gaussian_fit(random_vec(3, rng), random_spd(3, rng));
  EXPECT_NEAR(kl_gaussian(a, a), 0.0, 1e-10);
}

TEST(KlGaussian, OneDimensionalClosedForm) {
  // Hand values: KL(N(0,1) || N(1,4)) = log 2 + (1 + 1) / 8 - 1/2.
  EXPECT_NEAR(kl_gaussian(fit1(0, 1), fit1(1, 4)), std::log(2.0) + 0.25 - 0.5, 1e-12);
  RngStream rng(11, 11);
  for (int trial = 0; trial < 100; ++trial) {
    const double ma = rng.normal(), mb = rng.normal();
    const double sa = 0.2 + rng.uniform() * 2, sb = 0.2 + rng.uniform() * 2;
    const double expected =
        std::log(sb / sa) + (sa * sa + (ma - mb) * (ma - mb)) / (2 * sb * sb) - 0.5;
    EXPECT_NEAR(kl_gaussian(fit1(ma, sa * sa), fit1(mb, sb * sb)), expected, 1e-9);
    EXPECT_NEAR(kl_gaussian_1d(ma, sa * sa, mb, sb * sb), expected, 1e-9);
  }
}

TEST(KlGaussian, NonNegativeOnRandomPairs) {
  RngStream rng(12, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.uniform_index(4);
    const GaussianFit a = make_gaussian_fit(random_vec(d, rng), random_spd(d, rng, 0.01));
    const GaussianFit b = make_gaussian_fit(random_vec(d, rng), random_spd(d, rng, 0.01));
    EXPECT_GE(kl_gaussian(a, b), -1e-10);
  }
}

TEST(KlGaussian, SingularCovarianceIsRegularized) {
  const GaussianFit a = make_gaussian_fit({0, 0}, Tensor2D(2, 2, {1, 0, 0, 0}));
  const double kl = kl_gaussian(a, a);
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_NEAR(kl, 0.0, 1e-10);
}

TEST(MakeGaussianFit, RejectsAsymmetricCovariance) {
  EXPECT_THROW(make_gaussian_fit({0, 0}, Tensor2D(2, 2, {1, 0.5, 0.4, 1})), ArgumentError);
}

}  // namespace
}  // namespace dmq
