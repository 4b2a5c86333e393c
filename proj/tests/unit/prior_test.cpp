// Copyright 2026 The dpmix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/gamma.hpp>
#include <cmath>

#include "dpmix/error.hpp"
#include "dpmix/prior.hpp"
#include "oracles.hpp"

namespace dpmix {
namespace {

TEST(Sticks, ConstantSticksGiveGeometricWeights) {
  const double v = 0.3;
  auto draw = stick_breaking_from(std::vector<double>(10, v), 1, std::vector<double>(10, 0.0));
  for (std::size_t h = 0; h < 10; ++h) EXPECT_NEAR(draw.measure.weight(h), v * std::pow(1.0 - v, double(h)), 1e-15);
}

TEST(Sticks, WeightsPlusDeficitSumToOne) {
  DPPrior prior = default_prior(2);
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    auto draw = draw_stick_breaking(prior, 25, rng);
    double prod = 1.0;
    for (double v : draw.sticks) prod *= 1.0 - v;
    EXPECT_NEAR(draw.measure.total_weight(), 1.0 - prod, 1e-12);
    EXPECT_NEAR(draw.tail_deficit, prod, 1e-15);
  }
}

TEST(Sticks, FirstWeightMeanUnderUnitMass) {
  DPPrior prior = default_prior(1);
  Rng rng(8);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = draw_stick_breaking(prior, 1, rng).measure.weight(0);
    s += w;
    s2 += w * w;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, 0.5, 3.0 * se);
}

TEST(Sigma, PrecisionMeanIsGammaMean) {
  DPPrior prior = default_prior(1);
  Rng rng(12);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = 1.0 / draw_sigma(prior, rng);
    s += g;
    s2 += g * g;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, 1.0, 3.0 * se);
}

TEST(Sigma, PrecisionPassesKolmogorovSmirnovInTwoDims) {
  DPPrior prior(BaseMeasure(1.0, 1.0, 2), BandwidthPrior(0.7, 2.0, 2));
  Rng rng(21);
  const std::size_t n = 20000;
  std::vector<double> g(n);
  for (auto& v : g) {
    const double s = draw_sigma(prior, rng);
    v = 1.0 / (s * s);
  }
  std::sort(g.begin(), g.end());
  boost::math::gamma_distribution<double> law(0.7, 1.0 / 2.0);
  double ks = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = boost::math::cdf(law, g[i]);
    ks = std::max({ks, std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)});
  }
  EXPECT_LT(ks, 1.63 / std::sqrt(double(n)));
}

TEST(Sigma, Deterministic) {
  DPPrior prior = default_prior(1);
  Rng a(99), b(99);
  EXPECT_EQ(draw_sigma(prior, a), draw_sigma(prior, b));
}

TEST(PriorDensity, DeficitBelowTolerance) {
  DPPrior prior(BaseMeasure(0.2, 1.0, 1), BandwidthPrior(1.0, 1.0, 1));
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    Rng rng(seed);
    const auto mix = draw_prior_density(prior, 0.5, rng);
    ASSERT_LT(mix.deficit(), 0.5);
  }
}

TEST(PriorDensity, AtomCountMatchesDirectSimulation) {
  DPPrior prior = default_prior(1);
  const double tol = 1e-3;
  const int n = 20000;
  Rng rng(5), direct(6);
  double s = 0.0, s2 = 0.0, ref = 0.0, ref2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double k = double(draw_prior_density(prior, tol, rng).mixing().size());
    s += k;
    s2 += k * k;
    double rest = 1.0;
    int h = 0;
    while (rest >= tol) {
      rest *= 1.0 - direct.beta(1.0, 1.0);
      ++h;
    }
    ref += h;
    ref2 += double(h) * h;
  }
  const double m = s / n, r = ref / n;
  const double se = std::sqrt((s2 / n - m * m) / n + (ref2 / n - r * r) / n);
  EXPECT_NEAR(m, r, 4.0 * se);
}

TEST(PriorDensity, BadToleranceIsUsageError) {
  Rng rng(1);
  EXPECT_THROW(draw_prior_density(default_prior(1), 1.0, rng), UsageError);
}

TEST(StickTail, ExponentialCase) {
  EXPECT_NEAR(stick_tail_prob(1, std::exp(-1.0), 1.0), 1.0 - std::exp(-1.0), 1e-14);
  EXPECT_NEAR(stick_tail_prob(1, std::exp(-1.0), 1.0), 0.63212, 1e-5);
}

TEST(StickTail, MatchesPoissonSumAndStirling) {
  for (std::size_t h : {1, 3, 7, 20})
    for (double alpha : {0.5, 1.0, 3.0})
      for (double eps : {0.5, 0.1, 1e-3}) {
        const double p = stick_tail_prob(h, eps, alpha);
        EXPECT_NEAR(p, oracle::gamma_cdf_integer_shape(h, alpha, std::log(1.0 / eps)), 1e-12);
        EXPECT_LE(p, stick_tail_stirling_bound(h, eps, alpha) * (1.0 + 1e-12));
      }
}

TEST(StickTail, VanishesAsEpsApproachesOne) {
  EXPECT_LT(stick_tail_prob(1, 1.0 - 1e-9, 1.0), 1e-8);
  EXPECT_THROW(stick_tail_prob(1, 1.0, 1.0), UsageError);
  EXPECT_THROW(stick_tail_prob(1, 0.0, 1.0), UsageError);
}

TEST(StickTail, MonteCarloAgreement) {
  DPPrior prior(BaseMeasure(2.0, 1.0, 1), BandwidthPrior(1.0, 1.0, 1));
  const std::size_t h = 4;
  const double eps = 0.1;
  const int n = 100000;
  Rng rng(31);
  int hits = 0;
  for (int i = 0; i < n; ++i)
    if (draw_stick_breaking(prior, h, rng).tail_deficit > eps) ++hits;
  const double p = stick_tail_prob(h, eps, 2.0);
  EXPECT_NEAR(double(hits) / n, p, 3.0 * std::sqrt(p * (1.0 - p) / n));
}

TEST(Base, BoxMassTendsToOneAndMatchesErf) {
  BaseMeasure base(1.0, 1.5, 2);
  const auto m = base.mass_of_box(2.0);
  const double axis = std::erf(2.0 / (1.5 * std::sqrt(2.0)));
  EXPECT_NEAR(m.inside, axis * axis, 1e-14);
  EXPECT_NEAR(m.inside + m.outside, 1.0, 1e-14);
  EXPECT_GT(base.mass_of_box(40.0).inside, 1.0 - 1e-15);
}

TEST(Base, DensityStrictlyPositive) {
  BaseMeasure base(1.0, 1.0, 3);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x{rng.normal() * 5, rng.normal() * 5, rng.normal() * 5};
    EXPECT_GT(base.density(x), 0.0);
  }
}

TEST(Base, ExpectedRandomMassOfBox) {
  DPPrior prior = default_prior(1);
  Rng rng(17);
  const int n = 20000;
  const double a = 0.7;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto mix = draw_prior_density(prior, 1e-6, rng);
    double f = 0.0;
    for (std::size_t h = 0; h < mix.mixing().size(); ++h)
      if (std::abs(mix.mixing().location(h)[0]) <= a) f += mix.mixing().weight(h);
    f /= mix.mixing().total_weight();
    s += f;
    s2 += f * f;
  }
  const double m = s / n, se = std::sqrt((s2 / n - m * m) / n);
  EXPECT_NEAR(m, prior.base.mass_of_box(a).inside, 3.0 * se);
}

}  // namespace
}  // namespace dpmix
