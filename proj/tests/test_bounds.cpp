#include <gtest/gtest.h>

#include <cmath>

#include "biaswm/bounds.hpp"
#include "oracles.hpp"

using namespace biaswm;

namespace {

void expect_close_to(const BoundCheckResult& r, double truth, double sigmas = 5.0) {
  const double se = std::max(r.standard_error, std::sqrt(truth * (1 - truth) / static_cast<double>(r.trials)));
  EXPECT_NEAR(r.empirical, truth, sigmas * se + 1e-12) << r.name;
}

}  // namespace

TEST(GaussianNormTail, MatchesChiSquareAndBound) {
  const auto r = check_gaussian_norm_tail(100, 0.5, 100000, 1);
  EXPECT_EQ(r.name, "gaussian_norm_tail");
  EXPECT_EQ(r.trials, 100000u);
  EXPECT_NEAR(r.analytic_bound, 2 * std::exp(-3.125), 1e-15);
  expect_close_to(r, oracle::chi_square_outside(100, 50, 150));
  EXPECT_TRUE(r.satisfied);
}

TEST(GaussianNormTail, ShrinksWithDimension) {
  const auto small = check_gaussian_norm_tail(50, 0.3, 20000, 2);
  const auto large = check_gaussian_norm_tail(2000, 0.3, 2000, 3);
  EXPECT_GT(small.empirical, 0.01);
  EXPECT_EQ(large.empirical, 0.0);
}

TEST(GaussianNormTail, NearOneStillHolds) {
  const auto r = check_gaussian_norm_tail(10, 0.999, 100000, 4);
  EXPECT_NEAR(r.analytic_bound, 2 * std::exp(-10 * 0.999 * 0.999 / 8), 1e-15);
  expect_close_to(r, oracle::chi_square_outside(10, 10 * 0.001, 10 * 1.999));
  EXPECT_TRUE(r.satisfied);
}

TEST(GaussianNormTail, RejectsBadParameters) {
  EXPECT_THROW(check_gaussian_norm_tail(10, 0.0, 10, 1), ParameterError);
  EXPECT_THROW(check_gaussian_norm_tail(10, 1.0, 10, 1), ParameterError);
  EXPECT_THROW(check_gaussian_norm_tail(0, 0.5, 10, 1), ParameterError);
}

TEST(GaussianTail, ZeroThresholdIsCertain) {
  const auto r = check_gaussian_tail(1.0, 0.0, 10000, 1);
  EXPECT_EQ(r.empirical, 1.0);
  EXPECT_EQ(r.analytic_bound, 2.0);
  EXPECT_TRUE(r.satisfied);
}

TEST(GaussianTail, TwoSigma) {
  const auto r = check_gaussian_tail(1.0, 2.0, 1000000, 2);
  expect_close_to(r, 2 * oracle::normal_upper_tail(2.0));
  EXPECT_NEAR(r.analytic_bound, 0.2707, 1e-4);
  EXPECT_TRUE(r.satisfied);
}

TEST(GaussianTail, FiveSigma) {
  const auto r = check_gaussian_tail(1.0, 5.0, 1000000, 3);
  EXPECT_LE(r.empirical, 10e-6);
  EXPECT_NEAR(r.analytic_bound, 2 * std::exp(-12.5), 1e-20);
  EXPECT_TRUE(r.satisfied);
}

TEST(GaussianTail, ScalesWithSigma) {
  const auto r = check_gaussian_tail(3.0, 3.0, 200000, 4);
  expect_close_to(r, 2 * oracle::normal_upper_tail(1.0));
}

TEST(Hoeffding, ThreeParameterizations) {
  const auto a = check_hoeffding(10, 0.0, 1.0, 1.0, 100000, 1);
  const auto b = check_hoeffding(100, -1.0, 1.0, 10.0, 100000, 2);
  const auto c = check_hoeffding(50, 0.0, 2.0, 5.0, 100000, 3);
  EXPECT_NEAR(a.analytic_bound, 2 * std::exp(-1.0 / 10), 1e-15);
  EXPECT_NEAR(b.analytic_bound, 2 * std::exp(-100.0 / 400), 1e-15);
  EXPECT_NEAR(c.analytic_bound, 2 * std::exp(-25.0 / 200), 1e-15);
  for (const auto& r : {a, b, c}) {
    EXPECT_TRUE(r.satisfied) << r.params.at("k");
    EXPECT_GT(r.empirical, 0.0);
  }
  // Sum of 10 U[0,1]: Pr[|S - 5| >= 1] from the CLT, sd sqrt(10/12).
  EXPECT_NEAR(a.empirical, 2 * oracle::normal_upper_tail(1.0 / std::sqrt(10.0 / 12)), 0.01);
}

TEST(TextSoundness, UnionBoundMatchesDirectSum) {
  double expect = 0.0;
  for (int i = 100; i <= 500; ++i) expect += 2 * std::exp(-i * 0.25 * 0.25 * 0.25);
  EXPECT_NEAR(text_soundness_bound(100, 500, 0.25, 0.5), expect, 1e-12);
  double halved = 0.0;
  for (int i = 100; i <= 500; ++i) halved += 2 * std::exp(-i * 0.25 / 2);
  EXPECT_NEAR(text_soundness_bound(100, 500, 0.5, 1.0, 2.0), halved, 1e-12);
}

TEST(TextSoundness, EmpiricalRateBelowBound) {
  const auto r = check_text_soundness(100, 0.5, 0.5, 500, 10000, 4000, 7);
  EXPECT_LE(r.empirical, r.analytic_bound);
  EXPECT_TRUE(r.satisfied);
  EXPECT_EQ(r.params.at("distinct"), 500.0);
}

TEST(TextStepTail, MatchesGaussianTail) {
  for (std::size_t i : {20u, 100u}) {
    const auto r = check_text_step_tail(i, 0.25, 1.0, 100000, 9);
    expect_close_to(r, oracle::normal_upper_tail(std::sqrt(static_cast<double>(i)) * 0.25));
    EXPECT_LE(r.empirical, r.params.at("gaussian_tail_bound"));
  }
}

TEST(TextStepTail, UnhalvedExponentIsViolatedAtLargeDeviation) {
  // Q(2.5) = 0.0062 exceeds 2 exp(-6.25) = 0.0039.
  const auto r = check_text_step_tail(100, 0.25, 1.0, 200000, 10);
  EXPECT_FALSE(r.satisfied);
  EXPECT_GT(oracle::normal_upper_tail(2.5), r.analytic_bound);
  EXPECT_LE(r.empirical, r.params.at("gaussian_tail_bound"));
}

TEST(TextMissBound, IsCappedAndDecreasing) {
  EXPECT_EQ(text_miss_bound(0, 0.5, 0.5, 20), 1.0);
  EXPECT_GT(text_miss_bound(1000, 0.5, 0.5, 20), text_miss_bound(2000, 0.5, 0.5, 20));
  EXPECT_NEAR(text_miss_bound(10000, 1.0, 0.5, 16), 2 * std::exp(-10000 * 0.25 / 8), 1e-300);
}

TEST(ExpectedValLemma, SampledMatchesExactEnumeration) {
  LemmaCheckConfig cfg;
  cfg.trials = 20000;
  const auto r = check_expected_val_lemma(cfg);
  EXPECT_EQ(r.kind, BoundKind::lower);
  EXPECT_LT(std::abs(r.params.at("sampled_minus_exact_z")), 3.0);
  EXPECT_GT(r.params.at("certified_fraction"), 0.9);
  // Near-uniform regime at T = 1: expectation is eps^2 (1 - 1/n) to first order.
  EXPECT_NEAR(r.params.at("exact_mean"), 0.01, 0.002);
  EXPECT_NEAR(r.empirical, 0.01, 0.004);
  EXPECT_TRUE(r.params.contains("bound_c1eps2_over_c2"));
  EXPECT_TRUE(r.params.contains("bound_c2eps2_over_c1"));
}

TEST(ExpectedValLemma, ZeroEpsilonHasZeroMean) {
  LemmaCheckConfig cfg;
  cfg.epsilon = 0.0;
  cfg.trials = 500;
  const auto r = check_expected_val_lemma(cfg);
  EXPECT_EQ(r.empirical, 0.0);
  EXPECT_EQ(r.params.at("exact_mean"), 0.0);
}

TEST(ExpectedValLemma, ExhaustiveAtEightTokens) {
  LemmaCheckConfig cfg;
  cfg.model.n = 8;
  cfg.epsilon = 0.3;
  cfg.trials = 40000;
  cfg.bounds = {100.0, 0.0};
  const auto r = check_expected_val_lemma(cfg);
  EXPECT_LT(std::abs(r.params.at("sampled_minus_exact_z")), 3.0);
  EXPECT_EQ(r.params.at("certified_fraction"), 1.0);
}

TEST(ExpectedValLemma, NoCertifiedStepsIsAnError) {
  LemmaCheckConfig cfg;
  cfg.trials = 10;
  cfg.bounds = {0.5, 2.0};
  EXPECT_THROW(check_expected_val_lemma(cfg), ParameterError);
}

TEST(RemovalBound, IsAProbabilityAndGrowsWithNorm) {
  const double a = removal_probability_bound(4096, 0.5, 0.0, 0.5);
  const double b = removal_probability_bound(4096, 0.5, 500.0, 0.5);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(b, 1.0);
  EXPECT_LE(a, b);
}

TEST(UnremovabilityGeometry, ZeroNormRarelyRemoves) {
  const auto rs = check_unremovability_geometry(4096, 0.5, {0.0}, 0.9, 5000, 1);
  ASSERT_EQ(rs.size(), 2u);
  // Pr[chi^2_4096 < 0.9 * 4096].
  const double truth = boost::math::cdf(boost::math::chi_squared(4096), 0.9 * 4096);
  expect_close_to(rs[0], truth);
  EXPECT_LT(rs[0].empirical, 0.01);
}

TEST(UnremovabilityGeometry, OracleDirectionAlwaysRemoves) {
  const double budget = loss_budget(4096, 0.5);
  const auto rs = check_unremovability_geometry(4096, 0.5, {budget}, 0.5, 2000, 2);
  EXPECT_EQ(rs[1].name, "unremovability_geometry.oracle");
  EXPECT_EQ(rs[1].empirical, 1.0);
}

TEST(UnremovabilityGeometry, RandomDirectionAtBudget) {
  const double budget = loss_budget(4096, 0.5);
  const auto rs = check_unremovability_geometry(4096, 0.5, {budget}, 0.5, 5000, 3);
  EXPECT_LE(rs[0].empirical, 0.05);
  // (v - u).v ~ |v|^2 - |u| N(0, eps^2): Pr[Z > (eps^2 n - tau eps^2 n) / (|u| eps)].
  const double truth = oracle::normal_upper_tail(0.5 * 0.25 * 4096 / (budget * 0.5));
  EXPECT_NEAR(rs[0].empirical, truth, 0.012);
  EXPECT_DOUBLE_EQ(rs[0].params.at("norm_over_budget"), 1.0);
}
