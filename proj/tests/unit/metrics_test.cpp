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

#include <cmath>

#include "dpmix/density.hpp"
#include "dpmix/error.hpp"
#include "dpmix/metrics.hpp"
#include "oracles.hpp"

namespace dpmix {
namespace {

DensityFunction gauss(double mu, double sigma) {
  return as_density(MixtureDensity(DiscreteMeasure::point_mass(Point{mu}), sigma));
}

DensityFunction uniform(double lo, double hi) {
  DensityFunction p;
  p.eval = [lo, hi](std::span<const double> x) { return x[0] >= lo && x[0] < hi ? 1.0 / (hi - lo) : 0.0; };
  p.support = Box{{lo}, {hi}};
  return p;
}

QuadratureScheme fine(const DensityFunction& p, const DensityFunction& q) {
  return QuadratureScheme::grid(p.support.united(q.support), 32768);
}

TEST(L1, IdenticalIsZero) {
  auto p = gauss(0.3, 1.0);
  EXPECT_NEAR(l1_distance(p, p).value, 0.0, 1e-15);
}

TEST(L1, DisjointUniformsGiveTwo) {
  auto p = uniform(0.0, 1.0), q = uniform(2.0, 3.0);
  EXPECT_NEAR(l1_distance(p, q, QuadratureScheme::grid(Box{{0.0}, {3.0}}, 3000)).value, 2.0, 1e-12);
}

TEST(L1, ShiftedGaussianClosedForm) {
  for (double delta : {0.1, 0.5, 2.0}) {
    auto p = gauss(0.0, 1.0), q = gauss(delta, 1.0);
    const double exact = 2.0 * (2.0 * oracle::std_normal_cdf(delta / 2.0) - 1.0);
    EXPECT_NEAR(l1_distance(p, q, fine(p, q)).value, exact, 1e-6);
  }
}

TEST(L1, UnequalScalesClosedForm) {
  auto p = gauss(0.0, 1.0), q = gauss(0.4, 0.7);
  oracle::GaussPair g{{0.0}, 1.0, {0.4}, 0.7};
  EXPECT_NEAR(l1_distance(p, q, fine(p, q)).value, oracle::l1(g), 1e-6);
}

TEST(Hellinger, ClosedFormAndDisjoint) {
  auto p = gauss(0.0, 0.5), q = gauss(0.8, 0.5);
  const double h2 = 2.0 * (1.0 - std::exp(-0.64 / (8.0 * 0.25)));
  EXPECT_NEAR(hellinger(p, q, fine(p, q)).value, std::sqrt(h2), 1e-6);
  EXPECT_NEAR(hellinger(p, p).value, 0.0, 1e-12);
  auto u = uniform(0.0, 1.0), v = uniform(2.0, 3.0);
  EXPECT_NEAR(hellinger(u, v, QuadratureScheme::grid(Box{{0.0}, {3.0}}, 3000)).value, std::sqrt(2.0), 1e-12);
}

TEST(Hellinger, TwoDimensionalClosedForm) {
  auto p = as_density(MixtureDensity(DiscreteMeasure::point_mass(Point{0.0, 0.0}), 1.0));
  auto q = as_density(MixtureDensity(DiscreteMeasure::point_mass(Point{0.5, -0.5}), 1.2));
  oracle::GaussPair g{{0.0, 0.0}, 1.0, {0.5, -0.5}, 1.2};
  const auto s = QuadratureScheme::grid(p.support.united(q.support), 4096);
  EXPECT_NEAR(hellinger(p, q, s).value, oracle::hellinger(g), 1e-6);
}

TEST(Kl, ShiftedGaussianMoments) {
  const double mu = 0.7;
  auto p = gauss(0.0, 1.0), q = gauss(mu, 1.0);
  EXPECT_NEAR(kl_div(p, q, fine(p, q)).value, mu * mu / 2.0, 1e-6);
  EXPECT_NEAR(kl_second(p, q, fine(p, q)).value, mu * mu + std::pow(mu, 4) / 4.0, 1e-6);
  EXPECT_NEAR(kl_div(p, p).value, 0.0, 1e-12);
  EXPECT_NEAR(kl_second(p, p).value, 0.0, 1e-12);
}

TEST(Kl, UnequalScalesAgainstOracle) {
  auto p = gauss(0.2, 0.8), q = gauss(-0.1, 1.1);
  oracle::GaussPair g{{0.2}, 0.8, {-0.1}, 1.1};
  EXPECT_NEAR(kl_div(p, q, fine(p, q)).value, oracle::kl(g), 1e-6);
  EXPECT_NEAR(kl_second(p, q, fine(p, q)).value, oracle::kl_second(g), 1e-6);
}

TEST(Kl, CompactAgainstPositiveIsFinite) {
  auto p = uniform(-1.0, 1.0), q = gauss(0.0, 1.0);
  const auto s = QuadratureScheme::grid(q.support, 4096);
  const auto k = kl_div(p, q, s);
  EXPECT_FALSE(k.infinite);
  EXPECT_TRUE(std::isfinite(k.value));
  const auto back = kl_div(q, p, s);
  EXPECT_TRUE(back.infinite);
}

TEST(Kl, SecondMomentDominatesSquare) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto p = gauss(rng.normal(), 0.5 + rng.uniform());
    auto q = gauss(rng.normal(), 0.5 + rng.uniform());
    const auto s = QuadratureScheme::default_for(p, q);
    const double k = kl_div(p, q, s).value, v = kl_second(p, q, s).value;
    EXPECT_GE(v, k * k - 1e-9);
  }
}

TEST(KlBall, SpecCases) {
  auto p = gauss(0.0, 1.0), q = gauss(0.1, 1.0);
  const auto s = fine(p, q);
  EXPECT_TRUE(kl_ball_contains(p, p, 1e-3, s));
  EXPECT_TRUE(kl_ball_contains(p, q, 0.2, s));
  const auto r = kl_ball(p, q, 0.05, s);
  EXPECT_FALSE(r.contains);
  EXPECT_NEAR(r.k.value, 0.005, 1e-6);
  EXPECT_NEAR(r.v.value, 0.010025, 1e-6);
  EXPECT_THROW(kl_ball(p, q, 0.0, s), UsageError);
}

TEST(Properties, SymmetryAndTriangle) {
  Rng rng(5);
  auto random_mix = [&] {
    std::vector<Point> atoms;
    std::vector<double> w;
    for (int h = 0; h < 3; ++h) {
      atoms.push_back(Point{rng.normal()});
      w.push_back(1.0 / 3.0);
    }
    return as_density(MixtureDensity(DiscreteMeasure(atoms, w).normalized(), 0.3 + rng.uniform()));
  };
  for (int t = 0; t < 20; ++t) {
    auto p = random_mix(), q = random_mix(), r = random_mix();
    const auto s = QuadratureScheme::grid(p.support.united(q.support).united(r.support), 2048);
    EXPECT_NEAR(l1_distance(p, q, s).value, l1_distance(q, p, s).value, 1e-12);
    const double hpq = hellinger(p, q, s).value, hqp = hellinger(q, p, s).value;
    EXPECT_NEAR(hpq, hqp, 1e-12);
    EXPECT_LE(hpq, hellinger(p, r, s).value + hellinger(r, q, s).value + 1e-9);
    const double l1 = l1_distance(p, q, s).value;
    EXPECT_LE(0.5 * l1, hpq + 1e-6);
    EXPECT_LE(hpq, std::sqrt(l1) + 1e-6);
  }
}

TEST(Properties, GridAndMonteCarloAgree) {
  auto p = gauss(0.0, 1.0), q = gauss(0.6, 0.9);
  const Box box = p.support.united(q.support);
  const auto g = hellinger(p, q, QuadratureScheme::grid(box, 2048));
  const auto m = hellinger(p, q, QuadratureScheme::monte_carlo(box, 200000, 9));
  EXPECT_NEAR(g.value, m.value, 3.0 * (g.error + m.error));
}

TEST(Properties, DeterministicAcrossCalls) {
  auto p = gauss(0.0, 1.0), q = gauss(0.6, 0.9);
  EXPECT_EQ(hellinger(p, q).value, hellinger(p, q).value);
}

TEST(Scheme, DefaultResolutions) {
  EXPECT_EQ(QuadratureScheme::default_points_per_axis(1), 2048u);
  EXPECT_EQ(QuadratureScheme::default_points_per_axis(2), 512u);
  EXPECT_EQ(QuadratureScheme::default_points_per_axis(3), 128u);
  EXPECT_THROW(QuadratureScheme::grid(Box{{0.0}, {1.0}}, 1), UsageError);
}

TEST(Scheme, DimensionMismatchIsUsageError) {
  auto p = gauss(0.0, 1.0);
  auto q = as_density(MixtureDensity(DiscreteMeasure::point_mass(Point{0.0, 0.0}), 1.0));
  EXPECT_THROW(l1_distance(p, q), UsageError);
}

TEST(Scheme, SupRatioOfShiftedGaussians) {
  auto p = gauss(0.0, 1.0), q = gauss(0.0, 2.0);
  const auto s = QuadratureScheme::grid(Box{{-4.0}, {4.0}}, 2048);
  EXPECT_NEAR(sup_ratio(p, q, s).value, 2.0, 1e-3);
}

}  // namespace
}  // namespace dpmix
