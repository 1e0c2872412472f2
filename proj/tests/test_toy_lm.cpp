#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "biaswm/core_watermark.hpp"
#include "biaswm/stats.hpp"
#include "biaswm/toy_lm.hpp"
#include "oracles.hpp"

using namespace biaswm;

namespace {

TokenSequence ctx(std::vector<Token> t, std::size_t n) { return TokenSequence{std::move(t), n}; }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

/// Chi-square goodness of fit of `draws` samples against `probs`, pooling
/// cells with expected count below 5.
double chi_square_stat(const std::vector<std::size_t>& counts, const std::vector<double>& probs, std::size_t draws,
                       std::size_t& dof) {
  double stat = 0.0;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  std::size_t cells = 0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const double e = probs[t] * static_cast<double>(draws);
    if (e < 5.0) {
      pooled_obs += static_cast<double>(counts[t]);
      pooled_exp += e;
      continue;
    }
    stat += (static_cast<double>(counts[t]) - e) * (static_cast<double>(counts[t]) - e) / e;
    ++cells;
  }
  if (pooled_exp > 0.0) {
    stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / std::max(pooled_exp, 1e-300);
    ++cells;
  }
  dof = cells - 1;
  return stat;
}

}  // namespace

TEST(Logits, ZeroScaleGivesZeroLogits) {
  ToyModelSpec spec;
  spec.logit_scale = 0.0;
  spec.n = 500;
  for (double v : logits(spec, ctx({1, 2}, 500))) EXPECT_EQ(v, 0.0);
}

TEST(Logits, DeterministicInSeedAndContext) {
  ToyModelSpec spec;
  spec.n = 1000;
  const auto a = logits(spec, ctx({3, 4, 5}, 1000));
  EXPECT_EQ(a, logits(spec, ctx({3, 4, 5}, 1000)));
  // Only the last context_order tokens matter.
  EXPECT_EQ(a, logits(spec, ctx({9, 4, 5}, 1000)));
  EXPECT_NE(a, logits(spec, ctx({4, 4, 6}, 1000)));
  spec.base_seed = 1;
  EXPECT_NE(a, logits(spec, ctx({3, 4, 5}, 1000)));
}

TEST(Logits, VarianceOverContextsIsScaleSquared) {
  ToyModelSpec spec;
  spec.n = 10000;
  spec.logit_scale = 0.3;
  const ToyModel model(spec);
  std::vector<double> all;
  Stream rng(1);
  for (int c = 0; c < 20; ++c) {
    const std::vector<Token> context{static_cast<Token>(rng.below(spec.n)), static_cast<Token>(rng.below(spec.n))};
    const auto l = model.logits(context);
    all.insert(all.end(), l.begin(), l.end());
  }
  EXPECT_NEAR(stats::variance(all) / 0.09, 1.0, 0.05);
}

TEST(Logits, SupportModelPutsOtherTokensFarBelow) {
  ToyModelSpec spec;
  spec.n = 1000;
  spec.support_size = 4;
  const ToyModel model(spec);
  const auto l = model.logits(std::vector<Token>{1, 2});
  const auto cand = model.support(model.context_hash(std::vector<Token>{1, 2}));
  EXPECT_GE(cand.size(), 1u);
  EXPECT_LE(cand.size(), 4u);
  std::size_t off = 0;
  for (double v : l) off += v == spec.off_support_logit ? 1 : 0;
  EXPECT_EQ(off, spec.n - cand.size());
}

TEST(StepDistribution, ZeroLogitsAndBiasAreUniform) {
  ToyModelSpec spec;
  spec.logit_scale = 0.0;
  spec.n = 64;
  const auto d = step_distribution(spec, BiasVector::zeros(64), ctx({}, 64), 1.0);
  for (double p : d.probs) EXPECT_DOUBLE_EQ(p, 1.0 / 64);
  EXPECT_EQ(d.significant_set.size(), 64u);
}

TEST(StepDistribution, LogTwoBiasDoublesOdds) {
  ToyModelSpec spec;
  spec.logit_scale = 0.0;
  spec.n = 100;
  auto bias = BiasVector::zeros(100);
  bias.values[7] = std::log(2.0);
  const auto d = step_distribution(spec, bias, ctx({}, 100), 1.0);
  EXPECT_NEAR(d.probs[7], 2.0 / 101, 1e-15);
  EXPECT_NEAR(d.probs[8], 1.0 / 101, 1e-15);
}

TEST(StepDistribution, MatchesLongDoubleSoftmax) {
  ToyModelSpec spec;
  spec.n = 300;
  spec.logit_scale = 1.5;
  const ToyModel model(spec);
  const auto key = setup(300, 0.8, 2);
  for (double temp : {0.5, 0.9, 2.0}) {
    const std::vector<Token> c{11, 12};
    auto l = model.logits(c);
    for (std::size_t t = 0; t < l.size(); ++t) l[t] += key.delta_at(t);
    const auto expect = oracle::softmax(l, temp);
    const auto got = model.step_distribution(key.delta(), c, temp);
    for (std::size_t t = 0; t < l.size(); ++t) ASSERT_NEAR(got.probs[t], expect[t], 1e-15) << t;
  }
}

TEST(StepDistribution, RatioIsExpDeltaTimesNormalizerRatio) {
  ToyModelSpec spec;
  spec.n = 2000;
  spec.logit_scale = 0.3;
  const ToyModel model(spec);
  const auto key = setup(2000, 0.1, 5);
  const auto zeros = BiasVector::zeros(2000);
  Stream rng(3);
  for (int c = 0; c < 100; ++c) {
    const std::vector<Token> context{static_cast<Token>(rng.below(2000)), static_cast<Token>(rng.below(2000))};
    const auto l = model.logits(context);
    long double zq = 0, zp = 0;
    for (std::size_t t = 0; t < l.size(); ++t) {
      zq += std::exp(static_cast<long double>(l[t]));
      zp += std::exp(static_cast<long double>(l[t] + key.delta_at(t)));
    }
    const auto p = model.step_distribution(key.delta(), context, 1.0);
    const auto q = model.step_distribution(zeros.values, context, 1.0);
    for (std::size_t t = 0; t < 2000; t += 97) {
      const double expect = std::exp(key.delta_at(t)) * static_cast<double>(zq / zp);
      ASSERT_NEAR(p.probs[t] / q.probs[t], expect, 1e-12 * expect);
    }
  }
}

TEST(StepDistribution, RejectsNonPositiveTemperature) {
  ToyModelSpec spec;
  spec.n = 10;
  EXPECT_THROW(step_distribution(spec, BiasVector::zeros(10), ctx({}, 10), 0.0), ParameterError);
  EXPECT_THROW(step_distribution(spec, BiasVector::zeros(10), ctx({}, 10), -1.0), ParameterError);
  EXPECT_THROW(step_distribution(spec, BiasVector::zeros(11), ctx({}, 10), 1.0), DimensionError);
}

TEST(StepDistribution, SignificantSetRespectsFloor) {
  ToyModelSpec spec;
  spec.n = 1000;
  spec.support_size = 5;
  const auto d = step_distribution(spec, BiasVector::zeros(1000), ctx({1, 2}, 1000), 0.9);
  EXPECT_LE(d.significant_set.size(), 5u);
  for (Token t : d.significant_set) EXPECT_GE(d.probs[t], spec.significance_floor);
  EXPECT_NEAR(sum(d.probs), 1.0, 1e-12);
}

TEST(Generate, HugeBiasForcesTokenZero) {
  ToyModelSpec spec;
  spec.n = 2;
  BiasVector bias{{0.0, -1000.0}};
  GenerationConfig cfg;
  cfg.max_tokens = 50;
  const auto text = generate(spec, bias, cfg);
  EXPECT_EQ(text.tokens, std::vector<Token>(50, 0));
  EXPECT_EQ(text.n, 2u);
}

TEST(Generate, SameSeedsSameSequence) {
  ToyModelSpec spec;
  spec.n = 5000;
  GenerationConfig cfg;
  cfg.sampler_seed = 9;
  const auto bias = watermark(BiasVector::zeros(5000), setup(5000, 0.5, 1));
  const ToyModel model(spec);
  EXPECT_EQ(model.generate(bias, cfg), model.generate(bias, cfg));
  cfg.sampler_seed = 10;
  const auto other = model.generate(bias, cfg);
  cfg.sampler_seed = 9;
  EXPECT_NE(model.generate(bias, cfg), other);
}

TEST(Generate, UniformModelDistinctCountMatchesBirthdayFormula) {
  ToyModelSpec spec;
  spec.n = 10000;
  spec.logit_scale = 0.0;
  const ToyModel model(spec);
  const double expect = oracle::expected_distinct(10000, 300);
  EXPECT_NEAR(expect, 295.6, 0.05);
  const auto zeros = BiasVector::zeros(10000);
  double total = 0;
  constexpr int kRuns = 50;
  for (int i = 0; i < kRuns; ++i) {
    GenerationConfig cfg;
    cfg.sampler_seed = derive_seed(4, i);
    const double d = static_cast<double>(count_distinct(model.generate(zeros, cfg)));
    if (i == 0) {
      EXPECT_NEAR(d, expect, 5.0);
    }
    total += d;
  }
  EXPECT_NEAR(total / kRuns, expect, 1.0);
}

TEST(Generate, RejectsBadConfig) {
  ToyModelSpec spec;
  spec.n = 10;
  GenerationConfig cfg;
  cfg.max_tokens = 0;
  EXPECT_THROW(generate(spec, BiasVector::zeros(10), cfg), ParameterError);
  cfg.max_tokens = 5;
  cfg.prompt = ctx({10}, 10);
  EXPECT_THROW(generate(spec, BiasVector::zeros(10), cfg), ParameterError);
  cfg.prompt = ctx({1}, 11);
  EXPECT_THROW(generate(spec, BiasVector::zeros(10), cfg), ParameterError);
}

TEST(Generate, PromptSetsInitialContext) {
  ToyModelSpec spec;
  spec.n = 3000;
  spec.context_order = 1;
  spec.support_size = 1;
  const ToyModel model(spec);
  GenerationConfig cfg;
  cfg.max_tokens = 1;
  cfg.prompt = ctx({42}, 3000);
  const auto text = model.generate(BiasVector::zeros(3000), cfg);
  const auto cand = model.support(model.context_hash(std::vector<Token>{42}));
  ASSERT_EQ(cand.size(), 1u);
  EXPECT_EQ(text.tokens[0], cand[0]);
}

// Each fast sampling path must reproduce step_distribution exactly.
class SamplerExactness : public ::testing::TestWithParam<std::tuple<ToyModelSpec, SamplingPath, double>> {};

TEST_P(SamplerExactness, ChiSquareAgainstStepDistribution) {
  const auto& [spec, path, eps] = GetParam();
  const ToyModel model(spec);
  const auto bias = watermark(BiasVector::zeros(spec.n), setup(spec.n, eps, 3));
  const double temp = 0.9;
  const std::vector<Token> context{1, 2};
  const auto h = model.context_hash(context);
  const auto dist = model.step_distribution(bias.values, context, temp);
  const BiasTable table(bias.values, temp);
  Stream rng(17);
  constexpr std::size_t kDraws = 200000;
  std::vector<std::size_t> counts(spec.n);
  for (std::size_t i = 0; i < kDraws; ++i) ++counts[model.sample_next(table, bias.values, h, rng, path)];
  std::size_t dof = 0;
  const double stat = chi_square_stat(counts, dist.probs, kDraws, dof);
  ASSERT_GE(dof, 1u);
  EXPECT_LT(stat, oracle::chi_square_quantile_upper(static_cast<double>(dof), 1e-6)) << "dof " << dof;
}

INSTANTIATE_TEST_SUITE_P(
    Paths, SamplerExactness,
    ::testing::Values(std::make_tuple(ToyModelSpec{.n = 16, .logit_scale = 0.5}, SamplingPath::automatic, 0.5),
                      std::make_tuple(ToyModelSpec{.n = 16, .logit_scale = 0.5}, SamplingPath::full_scan, 0.5),
                      std::make_tuple(ToyModelSpec{.n = 64, .logit_scale = 2.0}, SamplingPath::automatic, 1.0),
                      std::make_tuple(ToyModelSpec{.n = 40, .support_size = 6, .off_support_logit = -2.0},
                                      SamplingPath::automatic, 0.5),
                      std::make_tuple(ToyModelSpec{.n = 40, .support_size = 6, .off_support_logit = -2.0},
                                      SamplingPath::full_scan, 0.5),
                      std::make_tuple(ToyModelSpec{.n = 30, .logit_scale = 0.0}, SamplingPath::automatic, 2.0)));

TEST(Certify, UniformAgainstItselfIsOneOne) {
  StepDistribution p;
  p.probs = {0.25, 0.25, 0.25, 0.25, 0.0};
  p.significant_set = {0, 1, 2, 3};
  const auto cert = certify_entropy_quality(p, p);
  EXPECT_DOUBLE_EQ(cert.c1, 1.0);
  EXPECT_DOUBLE_EQ(cert.c2, 1.0);
  EXPECT_TRUE(cert.satisfied);
  EXPECT_EQ(cert.significant_count, 4u);
}

TEST(Certify, HalvedReferenceGivesOneHalf) {
  StepDistribution p;
  p.probs = {0.25, 0.25, 0.25, 0.25};
  p.significant_set = {0, 1, 2, 3};
  StepDistribution q;
  q.probs = {0.125, 0.125, 0.125, 0.125};
  const auto cert = certify_entropy_quality(p, q);
  EXPECT_DOUBLE_EQ(cert.c2, 0.5);
  EXPECT_TRUE(cert.satisfied);
  EXPECT_FALSE(certify_entropy_quality(p, q, {2.0, 0.6}).satisfied);
}

TEST(Certify, SkewedDistributionHasLargeC1) {
  StepDistribution p;
  p.probs = {0.7, 0.1, 0.1, 0.1};
  p.significant_set = {0, 1, 2, 3};
  const auto cert = certify_entropy_quality(p, p);
  EXPECT_DOUBLE_EQ(cert.c1, 1.0 / (4 * 0.1));
  EXPECT_FALSE(cert.satisfied);
  EXPECT_TRUE(certify_entropy_quality(p, p, {2.5, 0.5}).satisfied);
  p.probs = {0.4, 0.2, 0.2, 0.2};
  EXPECT_DOUBLE_EQ(certify_entropy_quality(p, p).c1, 1.25);
  EXPECT_TRUE(certify_entropy_quality(p, p).satisfied);
}

TEST(Certify, EmptySignificantSetIsAnError) {
  StepDistribution p;
  p.probs = {1.0};
  EXPECT_THROW(certify_entropy_quality(p, p), ParameterError);
}

TEST(Certify, FactHoldsOnRandomSoftmaxPairs) {
  ToyModelSpec spec;
  spec.n = 500;
  spec.logit_scale = 0.5;
  const ToyModel model(spec);
  const auto zeros = BiasVector::zeros(500);
  Stream rng(8);
  for (int i = 0; i < 200; ++i) {
    const auto key = setup(500, 0.05, rng.bits());
    const std::vector<Token> c{static_cast<Token>(rng.below(500)), static_cast<Token>(rng.below(500))};
    const auto p = model.step_distribution(key.delta(), c, 1.0);
    const auto q = model.step_distribution(zeros.values, c, 1.0);
    EntropyCertificate cert;
    ASSERT_NO_THROW(cert = certify_entropy_quality(p, q));
    const double cap = cert.c1 * static_cast<double>(p.significant_set.size()) / cert.c2;
    for (Token t : p.significant_set) ASSERT_LE(1.0 / q.probs[t], cap * (1 + 1e-12));
  }
}

TEST(Quality, KlIsZeroForIdenticalModelsAndGrowsWithPerturbation) {
  ToyModelSpec spec;
  spec.n = 1000;
  const ToyModel model(spec);
  const auto zeros = BiasVector::zeros(1000);
  EXPECT_EQ(quality_proxy(model, zeros, zeros, 0.9, 1), 0.0);
  double last = 0.0;
  for (double eps : {0.1, 0.3, 1.0, 3.0}) {
    const auto kl = quality_proxy(model, zeros, watermark(zeros, setup(1000, eps, 2)), 0.9, 1);
    EXPECT_GT(kl, last);
    last = kl;
  }
  const auto report = quality_report(model, zeros, watermark(zeros, setup(1000, 0.5, 2)), 0.9, 1);
  EXPECT_TRUE(report.kl_proxy.has_value());
  EXPECT_GT(report.l2, 0.0);
}

TEST(Quality, KlDivergenceMatchesDirectSum) {
  const std::vector<double> q{0.5, 0.25, 0.25, 0.0};
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  EXPECT_NEAR(kl_divergence(q, p), 0.5 * std::log(2.0), 1e-15);
}

TEST(Quality, ApproximationErrorShrinksLinearlyWithEpsilon) {
  ToyModelSpec spec;
  spec.n = 64;
  spec.logit_scale = 0.1;
  const ToyModel model(spec);
  const auto zeros = BiasVector::zeros(64);
  const std::vector<Token> c{1, 2};
  const auto q = model.step_distribution(zeros.values, c, 1.0);
  auto err = [&](double eps) {
    const auto key = setup(64, eps, 3);
    return approximation_error(model.step_distribution(key.delta(), c, 1.0), q, key.delta(), zeros.values);
  };
  // The normalizer drift sum_t p_t delta_t is first order in eps.
  EXPECT_LT(err(0.01), 0.01);
  EXPECT_NEAR(err(0.001) / err(0.01), 0.1, 0.02);
}

TEST(WatermarkSignal, SampledTokenCarriesPositivePerturbation) {
  ToyModelSpec spec;
  spec.n = 10000;
  spec.logit_scale = 0.3;
  const ToyModel model(spec);
  const double eps = 0.5;
  double per_token = 0.0;
  constexpr int kResponses = 40;
  for (int i = 0; i < kResponses; ++i) {
    const auto key = setup(spec.n, eps, derive_seed(5, i));
    GenerationConfig cfg;
    cfg.sampler_seed = derive_seed(6, i);
    const auto view = distinct_view(model.generate(watermark(BiasVector::zeros(spec.n), key), cfg));
    double s = 0.0;
    for (Token t : view.tokens) s += key.delta_at(t);
    per_token += s / static_cast<double>(view.tokens.size());
  }
  EXPECT_GE(per_token / kResponses, 0.4 * eps * eps);
}

TEST(ToyModelSpec, Validation) {
  EXPECT_THROW(ToyModel(ToyModelSpec{.n = 1}), ParameterError);
  EXPECT_THROW(ToyModel(ToyModelSpec{.n = 10, .logit_scale = -1}), ParameterError);
  EXPECT_THROW(ToyModel(ToyModelSpec{.n = 10, .significance_floor = 0}), ParameterError);
  EXPECT_THROW(ToyModel(ToyModelSpec{.n = 10, .support_size = 11}), ParameterError);
}
