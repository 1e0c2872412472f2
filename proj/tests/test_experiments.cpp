#include <gtest/gtest.h>

#include <cmath>

#include "biaswm/experiments.hpp"

using namespace biaswm;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.model.n = 3000;
  cfg.model.logit_scale = 0.5;
  cfg.epsilons = {0.0, 0.3};
  cfg.responses_per_point = 40;
  cfg.max_tokens = 80;
  cfg.target_fprs = {0.05};
  cfg.null_trials = 2000;
  cfg.holdout_trials = 2000;
  cfg.quality_contexts = 16;
  cfg.quality_keys = 2;
  cfg.certify_steps = 8;
  cfg.attack_ks = {1.0};
  cfg.rhos = {0.0, 0.5};
  cfg.lengths = {20, 80};
  cfg.seed = 5;
  return cfg;
}

const SweepRow& find(const std::vector<SweepRow>& rows, double eps, const std::string& det, double magnitude = 0.0) {
  for (const auto& r : rows) {
    if (r.epsilon == eps && r.detector == det && r.magnitude == magnitude) return r;
  }
  throw std::runtime_error("row not found");
}

}  // namespace

TEST(Sweeps, DetectIsDeterministicAndCsvRoundTrips) {
  const auto cfg = small_config();
  const auto a = run_detectability_sweep(cfg);
  const auto b = run_detectability_sweep(cfg);
  const auto text = sweep_csv(a);
  EXPECT_EQ(text, sweep_csv(b));
  EXPECT_EQ(a.size(), 2u * 2u * 1u);
  const auto parsed = parse_sweep_csv(text);
  ASSERT_EQ(parsed.size(), a.size());
  EXPECT_EQ(sweep_csv(parsed), text);
}

TEST(Sweeps, DetectRowsAreWellFormed) {
  const auto rows = run_detectability_sweep(small_config());
  for (const auto& r : rows) {
    EXPECT_EQ(r.sweep, "detect");
    EXPECT_EQ(r.responses, 40u);
    EXPECT_GE(r.tpr, 0.0);
    EXPECT_LE(r.tpr, 1.0);
    EXPECT_NEAR(r.filtered_fraction, 1.0 - static_cast<double>(r.kept) / 40.0, 1e-12);
    EXPECT_LE(r.holdout_fpr, 0.05 + 3 * std::sqrt(0.05 * 0.95 * 2.0 / 2000));
  }
  EXPECT_EQ(find(rows, 0.0, "inner_product").mean_l2, 0.0);
  EXPECT_EQ(find(rows, 0.0, "inner_product").mean_quality_proxy, 0.0);
  EXPECT_GT(find(rows, 0.3, "inner_product").tpr, find(rows, 0.0, "inner_product").tpr);
  EXPECT_NEAR(find(rows, 0.3, "inner_product").mean_l2, 0.3 * std::sqrt(3000.0), 0.05 * 0.3 * std::sqrt(3000.0));
}

TEST(Sweeps, ZeroEpsilonDetectsAtTheFalsePositiveRate) {
  auto cfg = small_config();
  cfg.epsilons = {0.0};
  cfg.responses_per_point = 400;
  const auto rows = run_detectability_sweep(cfg);
  for (const auto& r : rows) {
    const double se = std::sqrt(0.05 * 0.95 / static_cast<double>(r.kept));
    EXPECT_NEAR(r.tpr, 0.05, 4 * se) << r.detector;
  }
}

TEST(Sweeps, SubstitutionAtZeroRhoMatchesDetect) {
  const auto cfg = small_config();
  const auto detect = run_detectability_sweep(cfg);
  const auto sub = run_substitution_sweep(cfg);
  EXPECT_EQ(sub.size(), 2u * 2u * 2u);
  for (double eps : cfg.epsilons) {
    for (const std::string det : {"inner_product", "count"}) {
      const auto& d = find(detect, eps, det);
      const auto& s = find(sub, eps, det, 0.0);
      EXPECT_EQ(s.tpr, d.tpr);
      EXPECT_EQ(s.threshold, d.threshold);
      EXPECT_EQ(s.kept, d.kept);
      EXPECT_LE(find(sub, eps, det, 0.5).mean_distinct_tokens, d.mean_distinct_tokens + 5.0);
    }
  }
}

TEST(Sweeps, RemovalPointsCarryAttackMagnitude) {
  const auto cfg = small_config();
  const auto rows = run_removal_sweep(cfg);
  EXPECT_EQ(rows.size(), 1u * 2u * 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.attack, "gaussian_perturb");
    EXPECT_EQ(r.magnitude, 1.0);
  }
  // k = 1 adds noise of the same scale as the key.
  EXPECT_NEAR(find(rows, 0.3, "inner_product", 1.0).mean_l2, 0.3 * std::sqrt(2 * 3000.0), 0.5);
}

TEST(Sweeps, FilteredPointsAreFlagged) {
  auto cfg = small_config();
  cfg.epsilons = {0.3};
  cfg.min_distinct = 1000;
  const auto rows = run_detectability_sweep(cfg);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.flagged);
    EXPECT_EQ(r.kept, 0u);
    EXPECT_EQ(r.filtered_fraction, 1.0);
  }
}

TEST(Sweeps, ScalingUsesPrefixes) {
  auto cfg = small_config();
  cfg.epsilons = {0.5};
  const auto rows = run_scaling_sweep(cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].max_tokens, 20u);
  EXPECT_LE(rows[0].mean_distinct_tokens, rows[1].mean_distinct_tokens);
  EXPECT_LE(rows[0].tpr, rows[1].tpr);
  EXPECT_DOUBLE_EQ(rows[0].threshold, 0.5 * 0.25);
}

TEST(Sweeps, ScalingFitRecoversSlope) {
  std::vector<SweepRow> rows;
  for (double eps : {0.2, 0.4}) {
    for (double d : {50.0, 100.0, 200.0}) {
      SweepRow r;
      r.sweep = "scaling";
      r.epsilon = eps;
      r.mean_distinct_tokens = d;
      r.tpr = 1.0 - std::exp(-0.5 * eps * eps * eps * eps * d);
      rows.push_back(r);
    }
  }
  const auto fit = fit_scaling(rows);
  EXPECT_EQ(fit.points, 6u);
  EXPECT_NEAR(fit.eps4.slope, -0.5, 1e-9);
  EXPECT_NEAR(fit.eps4.r_squared, 1.0, 1e-9);
  EXPECT_LT(fit.eps2.r_squared, 1.0);
}

TEST(Sweeps, ConfigJsonRoundTrip) {
  auto cfg = small_config();
  cfg.model.support_size = 4;
  cfg.text.lambda = 33;
  const auto back = config_from_json(io::json::parse(config_to_json(cfg).dump()));
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
  EXPECT_THROW(config_from_json(io::json{{"epsilons", "x"}}), FormatError);
}

TEST(Sweeps, InvalidConfigsAreRejected) {
  auto cfg = small_config();
  cfg.null_trials = 10;
  EXPECT_THROW(run_detectability_sweep(cfg), ParameterError);
  cfg = small_config();
  cfg.rhos = {1.5};
  EXPECT_THROW(run_substitution_sweep(cfg), ParameterError);
  cfg = small_config();
  cfg.epsilons = {};
  EXPECT_THROW(run_detectability_sweep(cfg), ParameterError);
}

TEST(Sweeps, ParseRejectsWrongHeader) {
  EXPECT_THROW(parse_sweep_csv("a,b\r\n1,2\r\n"), FormatError);
  EXPECT_THROW(parse_sweep_csv(""), FormatError);
}
