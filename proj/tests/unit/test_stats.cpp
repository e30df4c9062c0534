#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "esl/stats.hpp"
#include "oracles.hpp"

using namespace esl;

namespace {

SubCenterBank one_center_bank(int classes = 1) {
  SubCenterBank bank(classes, 2);
  for (int j = 0; j < classes; ++j) bank.add(j, Vector::Unit(2, 0));
  return bank;
}

}  // namespace

TEST(Stats, SingleObservation) {
  StatsAccumulator acc(one_center_bank());
  acc.add(0, 0, 0.9);
  const auto s = acc.finalize(2.0).at(0, 0);
  EXPECT_EQ(s.n, 1);
  EXPECT_DOUBLE_EQ(s.mu, 0.9);
  EXPECT_DOUBLE_EQ(s.sigma, 0.0);
  EXPECT_DOUBLE_EQ(s.threshold, 0.9);
}

TEST(Stats, TwoPointPopulationStd) {
  StatsAccumulator acc(one_center_bank());
  acc.add(0, 0, 0.8);
  acc.add(0, 0, 1.0);
  const auto s = acc.finalize(2.0).at(0, 0);
  EXPECT_NEAR(s.mu, 0.9, 1e-15);
  EXPECT_NEAR(s.sigma, 0.1, 1e-12);
}

TEST(Stats, MatchesTwoPassOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  oracle::Vec values(1000);
  StatsAccumulator acc(one_center_bank());
  for (double& v : values) {
    v = u(rng);
    acc.add(0, 0, v);
  }
  const auto ref = oracle::two_pass(values);
  const auto s = acc.finalize(2.0).at(0, 0);
  EXPECT_NEAR(s.mu, ref.mean, 1e-12);
  EXPECT_NEAR(s.sigma, ref.std, 1e-12);
}

TEST(Stats, HighMeanLowSpread) {
  // Cosines concentrated near 1 stress the sum-of-squares form.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.97, 1e-3);
  oracle::Vec values(5000);
  StatsAccumulator acc(one_center_bank());
  for (double& v : values) {
    v = n(rng);
    acc.add(0, 0, v);
  }
  const auto ref = oracle::two_pass(values);
  const auto s = acc.finalize(2.0).at(0, 0);
  EXPECT_NEAR(s.mu, ref.mean, 1e-12);
  EXPECT_NEAR(s.sigma, ref.std, 1e-9);
}

TEST(Stats, ThresholdFromMeanAndSpread) {
  // mu = 0.5, sigma = 0.1, lambda1 = 2 -> D = 0.7
  StatsAccumulator acc(one_center_bank());
  acc.add(0, 0, 0.4);
  acc.add(0, 0, 0.6);
  EXPECT_NEAR(acc.finalize(2.0).at(0, 0).threshold, 0.7, 1e-12);
}

TEST(Stats, EmptyCenterNeverMasks) {
  StatsAccumulator acc(one_center_bank());
  const auto s = acc.finalize(2.0).at(0, 0);
  EXPECT_EQ(s.n, 0);
  EXPECT_EQ(s.threshold, std::numeric_limits<double>::infinity());
}

TEST(Stats, ZeroSpreadThresholdIsMean) {
  StatsAccumulator acc(one_center_bank());
  for (int i = 0; i < 5; ++i) acc.add(0, 0, 0.25);
  const auto s = acc.finalize(3.0).at(0, 0);
  EXPECT_DOUBLE_EQ(s.sigma, 0.0);
  EXPECT_DOUBLE_EQ(s.threshold, 0.25);
}

TEST(Stats, MergeEqualsSingleAccumulator) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto bank = one_center_bank(3);
  StatsAccumulator whole(bank), left(bank), right(bank);
  for (int i = 0; i < 600; ++i) {
    const int j = i % 3;
    const double v = u(rng);
    whole.add(j, 0, v);
    (i < 300 ? left : right).add(j, 0, v);
  }
  left.merge(right);
  const auto a = whole.finalize(2.0), b = left.finalize(2.0);
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(a.at(j, 0).n, b.at(j, 0).n);
    EXPECT_NEAR(a.at(j, 0).mu, b.at(j, 0).mu, 1e-14);
    EXPECT_NEAR(a.at(j, 0).sigma, b.at(j, 0).sigma, 1e-12);
  }
}

TEST(Stats, UnseenSlotsReadEmpty) {
  const SubCenterStats stats;
  EXPECT_EQ(stats.at(4, 2).n, 0);
}

TEST(Stats, ThresholdTableSkipsFreshAndInactive) {
  SubCenterBank bank(1, 2);
  bank.add(0, Vector::Unit(2, 0));
  bank.add(0, Vector::Unit(2, 1));
  bank.add(0, Vector::Unit(2, 0), true);
  StatsAccumulator acc(bank);
  for (int m = 0; m < 3; ++m) acc.add(0, m, 0.5);
  const auto stats = acc.finalize(2.0);
  bank.deactivate(0, 1);
  const auto thr = stats.thresholds(bank);
  EXPECT_DOUBLE_EQ(thr[0][0], 0.5);
  EXPECT_EQ(thr[0][1], std::numeric_limits<double>::infinity());
  EXPECT_EQ(thr[0][2], std::numeric_limits<double>::infinity());
}
