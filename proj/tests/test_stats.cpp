#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "lineup/stats.hpp"

using namespace lineup;

namespace {

// Inverse normal CDF by bisection on erfc, independent of the rational
// approximation. Works on the lower tail and reflects, so p near 1 keeps precision.
double qnorm_oracle(double p) {
  const bool upper = p > 0.5;
  const double tail = upper ? 1.0 - p : p;
  double lo = -40.0, hi = 0.0;
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < tail)
      lo = mid;
    else
      hi = mid;
  }
  const double x = 0.5 * (lo + hi);
  return upper ? -x : x;
}

}  // namespace

TEST(Pearson, SelfCorrelationIsOne) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_DOUBLE_EQ(pearson(x, x), 1.0);
}

TEST(Pearson, ReversalIsMinusOne) {
  EXPECT_DOUBLE_EQ(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0);
}

TEST(Pearson, HandComputedHalf) {
  EXPECT_NEAR(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 0.5, 1e-15);
}

TEST(Pearson, MissingAndDegenerateCases) {
  EXPECT_TRUE(is_missing(pearson(std::vector<double>{1, 2}, std::vector<double>{2, 1})));
  EXPECT_TRUE(is_missing(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3})));
  // Pairwise-complete: the NaN pair is ignored.
  EXPECT_DOUBLE_EQ(pearson(std::vector<double>{1, 2, kNaN, 3}, std::vector<double>{1, 2, 9, 3}), 1.0);
  EXPECT_TRUE(is_missing(pearson(std::vector<double>{1, kNaN, 2, 3}, std::vector<double>{1, 2, kNaN, 3})));
}

TEST(Pearson, BoundedOnRandomData) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> x(20), y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      x[i] = z(rng);
      y[i] = 0.3 * x[i] + z(rng);
    }
    const double r = pearson(x, y);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
    EXPECT_NEAR(pearson(y, x), r, 1e-15);
  }
}

TEST(Median, OddEvenAndMissing) {
  EXPECT_DOUBLE_EQ(median({0.2, 0.8, 0.9}), 0.8);
  EXPECT_DOUBLE_EQ(median({0.2, 0.8}), 0.5);
  EXPECT_DOUBLE_EQ(median({0.7}), 0.7);
  EXPECT_DOUBLE_EQ(median({kNaN, 0.4, kNaN}), 0.4);
  EXPECT_TRUE(is_missing(median({kNaN})));
}

TEST(Qnorm, MatchesErfcBisection) {
  for (double p : {1e-10, 1e-4, 0.01, 0.025, 0.25, 0.5, 0.6, 0.75, 0.975, 0.999, 1 - 1e-6})
    EXPECT_NEAR(qnorm(p), qnorm_oracle(p), 1e-9 * std::max(1.0, std::fabs(qnorm_oracle(p)))) << p;
}

TEST(NormalQuantile, SingleValueIsZero) {
  const auto z = normal_quantile_transform(std::vector<double>{7.3});
  EXPECT_DOUBLE_EQ(z[0], 0.0);
}

TEST(NormalQuantile, TwoValues) {
  const auto z = normal_quantile_transform(std::vector<double>{10, 20});
  EXPECT_NEAR(z[0], -0.6745, 1e-4);
  EXPECT_NEAR(z[1], 0.6745, 1e-4);
  EXPECT_NEAR(z[0], qnorm_oracle(0.25), 1e-9);
}

TEST(NormalQuantile, MissingPreservedAndCountExcludesIt) {
  const auto z = normal_quantile_transform(std::vector<double>{3, kNaN, 1});
  EXPECT_TRUE(is_missing(z[1]));
  EXPECT_NEAR(z[0], 0.6745, 1e-4);
  EXPECT_NEAR(z[2], -0.6745, 1e-4);
}

TEST(NormalQuantile, TiesGetAverageRank) {
  const auto z = normal_quantile_transform(std::vector<double>{1, 2, 2, 3});
  EXPECT_DOUBLE_EQ(z[1], z[2]);
  EXPECT_NEAR(z[1], qnorm_oracle((2.5 - 0.5) / 4), 1e-9);
}

TEST(NormalQuantile, AllMissingThrows) {
  EXPECT_THROW(normal_quantile_transform(std::vector<double>{kNaN, kNaN}), std::invalid_argument);
}

TEST(NormalQuantile, RankInvariantUnderMonotoneMaps) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  std::vector<double> x(37);
  for (auto& v : x) v = z(rng);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::exp(3.0 * x[i]) + 1.0;
  EXPECT_EQ(normal_quantile_transform(x), normal_quantile_transform(y));
}

TEST(NormalQuantile, EvenSampleMeanIsZero) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-5, 5);
  for (std::size_t n = 2; n <= 400; n += 2) {
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    const auto t = normal_quantile_transform(x);
    EXPECT_NEAR(std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(n), 0.0, 1e-9);
  }
}
