#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "golden.inc"
#include "splicemix/rng.hpp"

using splicemix::SeededStream;

TEST(SeededStream, RawOutputsMatchPythonModel) {
  SeededStream rng(42);
  for (auto expected : golden::kStream42Next) EXPECT_EQ(rng.next(), expected);
}

TEST(SeededStream, BoundedDrawsMatchPythonModel) {
  SeededStream rng(7);
  for (auto expected : golden::kStream7Uniform10) EXPECT_EQ(rng.uniform(10), expected);
  SeededStream again(7);
  for (auto bits : golden::kStream7Uniform01Bits) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(again.uniform01()), bits);
  }
}

TEST(SeededStream, FisherYatesMatchesPythonModel) {
  SeededStream rng(123);
  const auto perm = rng.sample_without_replacement(16, 16);
  EXPECT_EQ(perm, golden::kSample123);
}

TEST(SeededStream, DeriveSeedMatchesPythonModel) {
  for (std::uint64_t k = 0; k < golden::kDerive42.size(); ++k) {
    EXPECT_EQ(splicemix::derive_seed(42, k), golden::kDerive42[k]);
  }
}

TEST(SeededStream, UniformStaysInRangeAndCoversIt) {
  SeededStream rng(1);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.uniform(7);
    ASSERT_LT(v, 7u);
    ++hist[v];
  }
  // chi-square with 6 dof; 22.46 is the 0.999 quantile
  double chi2 = 0;
  for (int h : hist) chi2 += (h - 10000.0) * (h - 10000.0) / 10000.0;
  EXPECT_LT(chi2, 22.46);
}

TEST(SeededStream, UniformOfOneConsumesOneDraw) {
  SeededStream a(5), b(5);
  EXPECT_EQ(a.uniform(1), 0u);
  b.next();
  EXPECT_EQ(a.state(), b.state());
}

TEST(SeededStream, UniformZeroThrows) {
  SeededStream rng(5);
  EXPECT_THROW(rng.uniform(0), std::invalid_argument);
}

TEST(SeededStream, Uniform01InHalfOpenUnitInterval) {
  SeededStream rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(SeededStream, BernoulliExtremes) {
  SeededStream rng(3);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(rng.bernoulli(0.0));
    EXPECT_TRUE(rng.bernoulli(1.0));
  }
}

TEST(SeededStream, SampleWithoutReplacementIsDistinct) {
  SeededStream rng(11);
  for (std::size_t n = 1; n < 40; ++n) {
    for (std::size_t k = 0; k <= n; ++k) {
      auto s = rng.sample_without_replacement(n, k);
      ASSERT_EQ(s.size(), k);
      std::set<std::size_t> seen(s.begin(), s.end());
      ASSERT_EQ(seen.size(), k);
      ASSERT_TRUE(std::all_of(s.begin(), s.end(), [&](auto v) { return v < n; }));
    }
  }
  EXPECT_THROW(rng.sample_without_replacement(3, 4), std::invalid_argument);
}

TEST(SeededStream, NormalMoments) {
  SeededStream rng(17);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    ASSERT_TRUE(std::isfinite(v));
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.015);
}

TEST(SeededStream, SameSeedSameStream) {
  SeededStream a(99), b(99), c(100);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(DeriveSeed, ChildrenDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (std::uint64_t k = 0; k < 10; ++k) seen.insert(splicemix::derive_seed(s, k));
  }
  EXPECT_EQ(seen.size(), 100u);
}
