#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dp2nilm/dp/accountant.hpp"
#include "dp2nilm/dp/mechanism.hpp"

namespace dp2nilm::dp {
namespace {

// sqrt(2 ln(1.25e5)) / eps evaluated with 30-digit arithmetic.
constexpr double kSigmaEps4 = 1.2112013156513473553;
constexpr double kSigmaEps8 = 0.60560065782567367766;
constexpr double kSigmaEps12 = 0.40373377188378245177;
// sqrt(2 ln(1.25e6)) / kSigmaEps4: one round at eps=4 with delta split over 10 rounds.
constexpr double kRoundEpsEps4 = 4.3748322086332432377;

nn::Gradient Grad(std::vector<double> v) { return nn::Gradient{std::move(v), 1}; }

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments SampleMoments(const std::vector<double>& x) {
  Moments m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  for (double v : x) m.var += (v - m.mean) * (v - m.mean);
  m.var /= static_cast<double>(x.size() - 1);
  return m;
}

PrivacyConfig Cfg(PrivacyMode mode, double eps = 4.0) {
  PrivacyConfig c;
  c.mode = mode;
  c.epsilon = eps;
  return c;
}

TEST(Clip, ScalesDownLongGradients) {
  // norm 8 = sqrt(4^2 + 4^2 + 4^2 + 4^2)
  const auto g = clip(Grad({4, 4, 4, 4}), 4.0);
  for (double v : g.values) EXPECT_NEAR(v, 2.0, 1e-14);
  EXPECT_LE(nn::l2_norm(g.values), 4.0);
}

TEST(Clip, LeavesShortGradientsAlone) {
  const auto in = Grad({1.0, 2.0, 2.0});  // norm 3
  EXPECT_EQ(clip(in, 4.0).values, in.values);
  EXPECT_EQ(clip(Grad({0, 0, 0}), 4.0).values, (std::vector<double>{0, 0, 0}));
}

TEST(Clip, NormBoundHoldsExactly) {
  Rng rng(11);
  std::normal_distribution<double> d(0.0, 1.0);
  std::uniform_real_distribution<double> scale(-3.0, 6.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> v(1 + trial % 97);
    const double s = std::pow(10.0, scale(rng));
    for (double& x : v) x = s * d(rng);
    EXPECT_LE(nn::l2_norm(clip(Grad(v), 4.0).values), 4.0);
  }
  EXPECT_THROW(clip(Grad({1.0}), 0.0), ConfigError);
}

TEST(Sigma, MatchesHighPrecisionValues) {
  EXPECT_NEAR(sigma_for(4.0, 1e-5), kSigmaEps4, 1e-12);
  EXPECT_NEAR(sigma_for(8.0, 1e-5), kSigmaEps8, 1e-12);
  EXPECT_NEAR(sigma_for(12.0, 1e-5), kSigmaEps12, 1e-12);
  EXPECT_EQ(sigma_for(8.0, 1e-5), sigma_for(4.0, 1e-5) / 2.0);
}

TEST(Sigma, StrictlyDecreasingInEpsilonAndDelta) {
  double prev = sigma_for(0.1, 1e-5);
  for (double e = 0.2; e < 20.0; e += 0.1) {
    const double s = sigma_for(e, 1e-5);
    EXPECT_LT(s, prev);
    prev = s;
  }
  prev = sigma_for(4.0, 1e-9);
  for (double d : {1e-8, 1e-6, 1e-4, 1e-2, 0.5, 0.9}) {
    const double s = sigma_for(4.0, d);
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Sigma, RejectsDomainViolations) {
  EXPECT_THROW(sigma_for(0.0, 1e-5), ConfigError);
  EXPECT_THROW(sigma_for(-1.0, 1e-5), ConfigError);
  EXPECT_THROW(sigma_for(4.0, 0.0), ConfigError);
  EXPECT_THROW(sigma_for(4.0, 1.0), ConfigError);
}

TEST(GaussianPerturb, ZeroStdIsIdentity) {
  const std::vector<double> v{1.5, -2.0, 0.25};
  EXPECT_EQ(gaussian_perturb(v, 0.0, 7), v);
  EXPECT_THROW(gaussian_perturb(v, -1.0, 7), ConfigError);
}

TEST(GaussianPerturb, MonteCarloMoments) {
  const auto x = gaussian_perturb(std::vector<double>(100000, 0.0), 1.0, 2024);
  const auto m = SampleMoments(x);
  EXPECT_LT(std::abs(m.mean), 4.0 / std::sqrt(1e5));
  EXPECT_NEAR(m.var, 1.0, 0.02);
}

TEST(GaussianPerturb, SeededAndDeterministic) {
  const std::vector<double> v(64, 1.0);
  EXPECT_EQ(gaussian_perturb(v, 0.5, 3), gaussian_perturb(v, 0.5, 3));
  EXPECT_NE(gaussian_perturb(v, 0.5, 3), gaussian_perturb(v, 0.5, 4));
}

TEST(GlobalHook, NoiseStdIsClipTimesSigma) {
  const auto cfg = Cfg(PrivacyMode::kGlobal);
  EXPECT_DOUBLE_EQ(global_noise_std(cfg), 4.0 * kSigmaEps4);
  nn::ModelParams p{std::vector<double>(100000, 0.0), {}};
  const auto out = gdpfl_aggregate_hook(p, cfg, 99);
  const auto m = SampleMoments(out.values);
  const double target = 4.0 * kSigmaEps4;
  EXPECT_LT(std::abs(m.mean), 4.0 * target / std::sqrt(1e5));
  EXPECT_NEAR(m.var / (target * target), 1.0, 0.02);
}

TEST(GlobalHook, SeedsDifferAndModeIsChecked) {
  const auto cfg = Cfg(PrivacyMode::kGlobal);
  nn::ModelParams p{std::vector<double>(10, 0.0), {}};
  const auto a = gdpfl_aggregate_hook(p, cfg, 1);
  const auto b = gdpfl_aggregate_hook(p, cfg, 2);
  EXPECT_NE(a.values, b.values);
  EXPECT_EQ(a.values.size(), b.values.size());
  EXPECT_THROW(gdpfl_aggregate_hook(p, Cfg(PrivacyMode::kLocal), 1), ConfigError);
  auto zero = cfg;
  zero.sigma = 0.0;
  EXPECT_EQ(gdpfl_aggregate_hook(p, zero, 1).values, p.values);
}

TEST(LocalHook, SingleClientMatchesGlobalScale) {
  const auto cfg = Cfg(PrivacyMode::kLocal);
  EXPECT_DOUBLE_EQ(local_noise_std(cfg, 1), global_noise_std(cfg));
  EXPECT_DOUBLE_EQ(local_noise_std(cfg, 9), 4.0 * kSigmaEps4 / 3.0);
  EXPECT_THROW(ldpfl_gradient_hook(Grad({1.0}), Cfg(PrivacyMode::kGlobal), 1, 0), ConfigError);
}

TEST(LocalHook, ZeroSigmaGivesClippedGradient) {
  auto cfg = Cfg(PrivacyMode::kLocal);
  cfg.sigma = 0.0;
  const auto g = ldpfl_gradient_hook(Grad({6.0, 8.0}), cfg, 9, 5);
  EXPECT_EQ(g.values, clip(Grad({6.0, 8.0}), 4.0).values);
}

TEST(LocalHook, MonteCarloVarianceForNineClients) {
  const auto cfg = Cfg(PrivacyMode::kLocal);
  const auto g = ldpfl_gradient_hook(Grad(std::vector<double>(100000, 0.0)), cfg, 9, 77);
  const auto m = SampleMoments(g.values);
  const double target_var = 16.0 * kSigmaEps4 * kSigmaEps4 / 9.0;
  EXPECT_NEAR(m.var / target_var, 1.0, 0.02);
  EXPECT_LT(std::abs(m.mean), 4.0 * std::sqrt(target_var) / std::sqrt(1e5));
}

TEST(Accountant, RoundSpendMatchesClosedForm) {
  EXPECT_NEAR(round_epsilon(1e-5, kSigmaEps4, 10), kRoundEpsEps4, 1e-12);
  PrivacyLedger l{4.0, 10, false, {}};
  EXPECT_GT(privacy_account(l, 1e-5, kSigmaEps4, 1), 4.0);
  EXPECT_TRUE(l.exhausted());
}

TEST(Accountant, CumulativeIsRoundTimesStep) {
  PrivacyLedger l{100.0, 10, false, {}};
  const double step = round_epsilon(1e-5, 3.0, 10);
  double prev = 0.0;
  for (std::size_t r = 1; r <= 10; ++r) {
    const double c = privacy_account(l, 1e-5, 3.0, r);
    EXPECT_EQ(c, static_cast<double>(r) * step);
    EXPECT_GT(c, prev);
    EXPECT_EQ(l.entries.back().delta_eps, step);
    prev = c;
  }
  EXPECT_FALSE(l.exhausted());
  EXPECT_THROW(privacy_account(l, 1e-5, 3.0, 12), ConfigError);
}

TEST(Accountant, SimulatedHaltMatchesClosedForm) {
  Rng rng(5);
  std::uniform_real_distribution<double> eps(1.0, 20.0), sig(0.3, 8.0);
  std::uniform_int_distribution<std::size_t> rounds(1, 50);
  for (int t = 0; t < 200; ++t) {
    PrivacyLedger l{eps(rng), rounds(rng), false, {}};
    const double s = sig(rng);
    std::size_t r = 1;
    while (privacy_account(l, 1e-5, s, r) <= l.epsilon_budget) ++r;
    const double step = l.entries.front().delta_eps;
    EXPECT_EQ(r, halting_round(l.epsilon_budget, step));
    EXPECT_EQ(r, static_cast<std::size_t>(std::ceil(l.epsilon_budget / step)));
  }
}

TEST(Accountant, IntegerRatioHaltsOneLater) {
  // budget exactly 3 steps: round 3 spends exactly the budget, round 4 exceeds it.
  EXPECT_EQ(halting_round(3.0, 1.0), 4u);
  EXPECT_EQ(halting_round(2.5, 1.0), 3u);
}

TEST(Config, ValidationRules) {
  EXPECT_NO_THROW(validate(PrivacyConfig{}));
  EXPECT_THROW(validate(Cfg(PrivacyMode::kGlobal, 0.0)), ConfigError);
  auto c = Cfg(PrivacyMode::kLocal);
  c.clip_norm = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = Cfg(PrivacyMode::kLocal);
  c.delta = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = Cfg(PrivacyMode::kGlobal);
  c.sigma = -0.5;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_EQ(parse_mode("global"), PrivacyMode::kGlobal);
  EXPECT_THROW(parse_mode("central"), ConfigError);
}

}  // namespace
}  // namespace dp2nilm::dp
