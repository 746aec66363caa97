#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ctbuq/diagnostics.hpp"
#include "ctbuq/rng.hpp"

using namespace ctbuq;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal_vector(n, rng);
}

std::vector<double> ar1(std::size_t n, double phi, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> x(n);
  x[0] = z(rng) / std::sqrt(1 - phi * phi);
  for (std::size_t t = 1; t < n; ++t) x[t] = phi * x[t - 1] + z(rng);
  return x;
}

std::vector<double> bimodal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 0.5);
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = (uniform01(rng) < 0.5 ? -3.0 : 3.0) + z(rng);
  return x;
}

}  // namespace

TEST(Acf, LagZeroIsOne) {
  for (std::uint64_t s = 1; s <= 5; ++s) EXPECT_DOUBLE_EQ(acf(ar1(500, 0.5, s), 10)[0], 1.0);
}

TEST(Acf, WhiteNoiseAndAr1) {
  EXPECT_LT(std::abs(acf(normals(100000, 2), 10)[10]), 0.02);
  const double r1 = acf(ar1(100000, 0.9, 3), 1)[1];
  EXPECT_GE(r1, 0.88);
  EXPECT_LE(r1, 0.92);
}

TEST(Acf, ConstantChainIsUndefined) {
  const std::vector<double> c(100, 0.37);
  EXPECT_THROW(acf(c, 5), UndefinedStatistic);
  EXPECT_THROW(ess(c), UndefinedStatistic);
}

TEST(Acf, FirstLagBelow) {
  const std::vector<double> rho{1.0, 0.5, 0.1, 0.04, 0.2};
  EXPECT_EQ(first_lag_below(rho), 3u);
  EXPECT_FALSE(first_lag_below(std::vector<double>{1.0, 0.9}).has_value());
}

TEST(Ess, IidChain) {
  EXPECT_NEAR(ess(normals(10000, 4)), 10000.0, 1500.0);
}

TEST(Ess, Ar1Chain) {
  const double expect = 100000.0 * 0.1 / 1.9;
  EXPECT_NEAR(ess(ar1(100000, 0.9, 5)), expect, 0.2 * expect);
}

TEST(Ess, DuplicatedChainHalves) {
  const auto base = normals(5000, 6);
  std::vector<double> x;
  for (double v : base) x.push_back(v), x.push_back(v);
  EXPECT_NEAR(ess(x), 5000.0, 1000.0);
}

TEST(Ess, AffineInvariant) {
  const auto x = ar1(20000, 0.7, 7);
  std::vector<double> y;
  for (double v : x) y.push_back(-3.5 * v + 12.0);
  EXPECT_NEAR(ess(x), ess(y), 1e-8 * ess(x));
}

TEST(Hpd, StandardNormal95) {
  const auto h = hpd_1d(normals(100000, 8), 0.95);
  ASSERT_EQ(h.intervals.size(), 1u);
  EXPECT_NEAR(h.intervals[0].lo, -1.959, 0.1);
  EXPECT_NEAR(h.intervals[0].hi, 1.959, 0.1);
}

TEST(Hpd, BimodalGivesTwoIntervals) {
  const auto h = hpd_1d(bimodal(100000, 9), 0.9);
  ASSERT_EQ(h.intervals.size(), 2u);
  EXPECT_TRUE(h.contains(-3.0));
  EXPECT_TRUE(h.contains(3.0));
  EXPECT_FALSE(h.contains(0.0));
}

// Counting noise at the threshold splits a unimodal sample when gaps are
// not bridged; an empty valley is never bridged.
TEST(Hpd, BridgesNoiseGapsOnly) {
  std::size_t split_raw = 0, split_bridged = 0;
  for (std::uint64_t s = 40; s < 80; ++s) {
    const auto x = normals(100000, s);
    split_raw += hpd_1d(x, 0.95, 0.0).intervals.size() > 1;
    split_bridged += hpd_1d(x, 0.95).intervals.size() > 1;
    EXPECT_EQ(hpd_1d(bimodal(20000, s), 0.9).intervals.size(), 2u) << s;
  }
  EXPECT_GT(split_raw, 0u);
  EXPECT_LT(split_bridged, split_raw);
  EXPECT_LE(split_bridged, 2u);
  EXPECT_THROW(hpd_1d(normals(200, 1), 0.9, -1.0), InvalidArgument);
}

// Refined endpoints resolve the normal quantile below the bin width (about
// 0.028 here); unrefined ones sit on the bin grid.
TEST(Hpd, RefinedEndpointsBeatTheBinGrid) {
  double err = 0.0;
  for (std::uint64_t s = 90; s < 100; ++s) {
    const auto x = normals(100000, s);
    const auto h = hpd_1d(x, 0.95);
    ASSERT_EQ(h.intervals.size(), 1u) << s;
    err = std::max({err, std::abs(h.intervals[0].lo + 1.95996), std::abs(h.intervals[0].hi - 1.95996)});
    EXPECT_GE(h.mass, 0.95);
    EXPECT_LE(h.mass, 0.95 + 1e-5);
    std::size_t in = 0;
    for (double v : x) in += h.contains(v);
    EXPECT_GE(double(in) / double(x.size()), 0.95);

    const auto b = hpd_1d(x, 0.95, 3.0, false);
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    const double w = (*mx - *mn) / 317.0;
    const double pos = (b.intervals[0].lo - *mn) / w;
    EXPECT_NEAR(pos, std::round(pos), 1e-6);
  }
  EXPECT_LT(err, 0.06);
}

TEST(Hpd, HighLevelCoversMass) {
  const auto x = normals(20000, 10);
  const auto h = hpd_1d(x, 0.999);
  std::size_t in = 0;
  for (double v : x) in += h.contains(v);
  EXPECT_GE(double(in) / double(x.size()), 0.999);
}

TEST(Hpd, ShrinksWithLevel) {
  for (std::uint64_t s = 11; s <= 14; ++s) {
    const auto x = s % 2 ? normals(20000, s) : bimodal(20000, s);
    double prev = 0.0;
    for (double level : {0.5, 0.7, 0.9, 0.95, 0.99}) {
      const double len = hpd_1d(x, level).total_length();
      EXPECT_GE(len, prev) << level;
      prev = len;
    }
  }
}

// Independent histogram: bins strictly denser than the reported threshold must
// hold less than `level`, and the reported set at least `level`.
TEST(Hpd, SmallestSuperLevelSet) {
  for (std::uint64_t s = 20; s < 30; ++s) {
    for (std::size_t n : {1000u, 10000u}) {
      std::vector<double> x;
      switch (s % 3) {
        case 0: x = normals(n, s); break;
        case 1: x = bimodal(n, s); break;
        default: x = ar1(n, 0.6, s);
      }
      const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
      const std::size_t nb = std::size_t(std::ceil(std::sqrt(double(n))));
      const double w = (*mx - *mn) / double(nb);
      std::vector<std::size_t> counts(nb, 0);
      for (double v : x) counts[std::min(nb - 1, std::size_t((v - *mn) / w))]++;
      for (double level : {0.5, 0.9, 0.95, 0.99}) {
        const auto h = hpd_1d(x, level, 0);
        const double cut = h.threshold * double(n) * w;
        std::size_t above = 0;
        for (std::size_t c : counts) above += double(c) > cut + 0.5 ? c : 0;
        EXPECT_GE(h.mass, level);
        EXPECT_LT(double(above) / double(n), level) << s << " " << n << " " << level;
      }
    }
  }
}

TEST(MultiChain, Examples) {
  const std::vector<double> a{0.3, 0.31, 0.29}, b{0.35, 0.36, 0.34}, c{0.2, 0.4, 0.3};
  EXPECT_EQ(multi_chain_mean_check({a, a}), 0.0);
  EXPECT_NEAR(multi_chain_mean_check({a, b}), 0.05, 1e-12);
  EXPECT_THROW(multi_chain_mean_check({a}), InvalidArgument);
}

TEST(MultiChain, Pseudometric) {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<double>> v(3, std::vector<double>(16));
    for (auto& c : v)
      for (double& x : c) x = uniform01(rng);
    const double ab = multi_chain_mean_check({v[0], v[1]});
    EXPECT_EQ(ab, multi_chain_mean_check({v[1], v[0]}));
    EXPECT_LE(multi_chain_mean_check({v[0], v[2]}), ab + multi_chain_mean_check({v[1], v[2]}) + 1e-15);
  }
}
