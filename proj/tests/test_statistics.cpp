#include <gtest/gtest.h>

#include "nodalmc/core.hpp"
#include "nodalmc/random.hpp"
#include "nodalmc/statistics.hpp"

using namespace nodalmc;

TEST(Blocking, IidSeriesGivesNaiveError) {
  RandomStream rng(3, 0, 0, StreamPurpose::test);
  const std::size_t n = 1 << 16;
  std::vector<double> x(n);
  for (auto& v : x) v = 2.0 * rng.gaussian();
  const auto b = stats::blocking_error(x);
  EXPECT_TRUE(b.plateau);
  EXPECT_NEAR(b.std_error, 2.0 / std::sqrt(double(n)), 0.15 * 2.0 / std::sqrt(double(n)));
}

TEST(Blocking, Ar1SeriesRecoversIntegratedAutocorrelation) {
  // x_t = φ x_{t−1} + e_t: var(mean) → σ²/(1−φ²)·(1+φ)/(1−φ)/n
  const double phi = 0.9;
  const std::size_t n = 1 << 18;
  RandomStream rng(4, 0, 0, StreamPurpose::test);
  std::vector<double> x(n);
  double v = 0.0;
  for (auto& xi : x) xi = v = phi * v + rng.gaussian();
  const double expected = std::sqrt(1.0 / (1 - phi * phi) * (1 + phi) / (1 - phi) / double(n));
  const auto b = stats::blocking_error(x);
  EXPECT_TRUE(b.plateau);
  EXPECT_GT(b.level, 2u);
  EXPECT_NEAR(b.std_error, expected, 0.2 * expected);
}

TEST(Blocking, ConstantSeriesHasZeroError) {
  std::vector<double> x(64, 1.5);
  EXPECT_EQ(stats::blocking_error(x).std_error, 0.0);
  EXPECT_THROW(stats::blocking_error(std::vector<double>(8, 1.0)), UsageError);
}

TEST(Jackknife, DeleteOneOfMeanIsTheSampleError) {
  RandomStream rng(8, 0, 0, StreamPurpose::test);
  const std::size_t n = 500;
  std::vector<double> x(n);
  for (auto& v : x) v = rng.gaussian() + 1.0;
  double m = 0, s2 = 0;
  for (double v : x) m += v / n;
  for (double v : x) s2 += (v - m) * (v - m) / (n - 1);
  const auto sums = stats::block_sums(n, 2, n, [&](std::size_t i, std::span<double> out) {
    out[0] = x[i];
    out[1] = 1.0;
  });
  const auto jk = stats::jackknife_sums(sums, [](std::span<const double> t) { return std::vector<double>{t[0] / t[1]}; });
  EXPECT_NEAR(jk.value[0], m, 1e-12);
  EXPECT_NEAR(jk.std_error[0], std::sqrt(s2 / n), 1e-12);
}

TEST(Jackknife, RatioErrorIsCalibrated) {
  // a = 2b + 0.3ε makes Σa/Σb − 2 = 0.3Σε/Σb, so the true error is 0.3/√n; one 64-block estimate
  // scatters by about 9%, so the check averages over replicates
  const std::size_t n = 5000, reps = 60;
  double mean_ratio = 0.0, spread = 0.0;
  for (std::size_t k = 0; k < reps; ++k) {
    RandomStream rng(9, static_cast<std::uint32_t>(k), 0, StreamPurpose::test);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = 1.0 + 0.2 * rng.gaussian();
      a[i] = 2.0 * b[i] + 0.3 * rng.gaussian();
    }
    const auto sums = stats::block_sums(n, 2, 64, [&](std::size_t i, std::span<double> out) {
      out[0] = a[i];
      out[1] = b[i];
    });
    const auto jk = stats::jackknife_sums(sums, [](std::span<const double> t) { return std::vector<double>{t[0] / t[1]}; });
    ASSERT_EQ(jk.covariance.size(), 1u);
    EXPECT_DOUBLE_EQ(jk.covariance[0], jk.std_error[0] * jk.std_error[0]);
    const double r = jk.std_error[0] / (0.3 / std::sqrt(double(n)));
    mean_ratio += r / reps;
    spread += (jk.value[0] - 2.0) * (jk.value[0] - 2.0) / reps;
  }
  EXPECT_NEAR(mean_ratio, 1.0, 4 * 0.09 / std::sqrt(double(reps)));
  EXPECT_NEAR(std::sqrt(spread), 0.3 / std::sqrt(double(n)), 0.3 * 0.3 / std::sqrt(double(n)));
}

TEST(Jackknife, BlockBoundariesCoverAllItems) {
  const auto e = stats::block_boundaries(103, 10);
  ASSERT_EQ(e.size(), 11u);
  EXPECT_EQ(e.front(), 0u);
  EXPECT_EQ(e.back(), 103u);
  for (std::size_t i = 0; i + 1 < e.size(); ++i) EXPECT_GE(e[i + 1] - e[i], 10u);
  EXPECT_EQ(stats::block_boundaries(3, 64).size(), 4u);
}

TEST(Kish, EffectiveSize) {
  EXPECT_DOUBLE_EQ(stats::kish_effective_size(std::vector<double>(10, 0.3)), 10.0);
  EXPECT_DOUBLE_EQ(stats::kish_effective_size(std::vector<double>{1.0, 0.0, 0.0}), 1.0);
}

TEST(Estimate, ZScore) {
  const auto e = EstimateWithError::scalar_estimate(1.5, 0.25, 10, "test");
  EXPECT_DOUBLE_EQ(e.z(0, 1.0), 2.0);
  const auto exact = EstimateWithError::scalar_estimate(1.0, 0.0, 10, "test");
  EXPECT_EQ(exact.z(0, 1.0), 0.0);
  EXPECT_TRUE(std::isinf(exact.z(0, 0.0)));
}
