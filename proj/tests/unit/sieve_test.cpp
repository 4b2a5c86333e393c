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
#include <cmath>
#include <limits>

#include "dpmix/error.hpp"
#include "dpmix/sieve.hpp"

namespace dpmix {
namespace {

double l1_to_nearest(const std::vector<std::vector<double>>& net, const std::vector<double>& w) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : net) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += std::abs(v[i] - w[i]);
    best = std::min(best, s);
  }
  return best;
}

TEST(LocationNet, OneAxisExample) {
  const auto net = build_location_net(1.0, 0.5, 1);
  ASSERT_EQ(net.size(), 2u);
  EXPECT_DOUBLE_EQ(net[0][0], -0.5);
  EXPECT_DOUBLE_EQ(net[1][0], 0.5);
  LocationGrid grid(1.0, 0.5, 1);
  EXPECT_DOUBLE_EQ(grid.step(), 1.0);
}

TEST(LocationNet, TwoAxisCoverageByProbe) {
  const double radius = 0.5;
  const auto net = build_location_net(1.0, radius, 2);
  LocationGrid grid(1.0, radius, 2);
  EXPECT_NEAR(grid.step(), 2.0 * radius / std::sqrt(2.0), 1e-15);
  double worst = 0.0;
  for (int i = 0; i < 400; ++i)
    for (int j = 0; j < 400; ++j) {
      const double x = -1.0 + 2.0 * i / 399.0, y = -1.0 + 2.0 * j / 399.0;
      double best = 1e300;
      for (const auto& p : net) best = std::min(best, std::hypot(x - p[0], y - p[1]));
      worst = std::max(worst, best);
    }
  EXPECT_LE(worst, radius + 1e-12);
}

TEST(LocationNet, SizeGrowsLikePowerOfHalfWidth) {
  for (int d : {1, 2, 3}) {
    const double small = LocationGrid(4.0, 0.1, d).size(), big = LocationGrid(8.0, 0.1, d).size();
    EXPECT_NEAR(big / small, std::pow(2.0, d), 0.15 * std::pow(2.0, d));
  }
}

TEST(LocationNet, TiesGoToLowestIndex) {
  LocationGrid grid(1.0, 0.5, 1);
  EXPECT_EQ(grid.nearest(std::vector<double>{0.0}), 0u);
  EXPECT_THROW(build_location_net(1.0, 1e-9, 1), ResourceError);
}

TEST(SimplexNet, DegenerateAndSmallCases) {
  const auto one = build_simplex_net(1, 0.3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], std::vector<double>{1.0});
  const auto two = build_simplex_net(2, 0.5);
  ASSERT_EQ(two.size(), 5u);
  std::vector<std::vector<double>> expected{{0, 1}, {0.25, 0.75}, {0.5, 0.5}, {0.75, 0.25}, {1, 0}};
  for (const auto& e : expected) EXPECT_NE(std::find(two.begin(), two.end(), e), two.end());
  double worst = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double t = i / 10000.0;
    worst = std::max(worst, l1_to_nearest(two, {t, 1.0 - t}));
  }
  EXPECT_LE(worst, 0.5);
}

TEST(SimplexNet, ThreePartCoverage) {
  SimplexNet net(3, 0.25);
  Rng rng(2);
  double worst = 0.0;
  for (int t = 0; t < 100000; ++t) {
    double g[3], s = 0.0;
    for (double& v : g) s += (v = rng.exponential());
    std::vector<double> w{g[0] / s, g[1] / s, g[2] / s};
    const auto p = net.point(net.nearest(w));
    double d = 0.0;
    for (int i = 0; i < 3; ++i) d += std::abs(p[i] - w[i]);
    worst = std::max(worst, d);
  }
  EXPECT_LE(worst, 0.25);
}

TEST(SimplexNet, RankRoundTrip) {
  SimplexNet net(4, 0.5);
  const auto all = net.enumerate();
  ASSERT_EQ(double(all.size()), net.size());
  for (std::uint64_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(net.point(i), all[i]);
    EXPECT_EQ(net.nearest(all[i]), i);
  }
}

TEST(SigmaGrid, GeometricSequence) {
  SieveSpec spec;
  spec.eps = 0.1;
  spec.sigma_floor = 1.0;
  spec.sigma_steps = 3;
  const auto g = build_sigma_grid(spec);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_NEAR(g[0], 1.1, 1e-15);
  EXPECT_NEAR(g[1], 1.21, 1e-15);
  EXPECT_NEAR(g[2], 1.331, 1e-15);
  spec.sigma_steps = 1;
  EXPECT_EQ(build_sigma_grid(spec).size(), 1u);
}

TEST(SigmaGrid, Bracketing) {
  SieveSpec spec;
  spec.eps = 0.05;
  spec.sigma_floor = 0.2;
  spec.sigma_steps = 40;
  const auto g = build_sigma_grid(spec);
  Rng rng(4);
  const double lo = std::log(0.2), hi = spec.log_sigma_ceiling();
  for (int t = 0; t < 10000; ++t) {
    const double s = std::exp(lo + (hi - lo) * rng.uniform());
    const double r = g[bracket_sigma(spec, s)] / s;
    ASSERT_GE(r, 1.0);
    ASSERT_LT(r, 1.0 + spec.eps);
  }
}

SieveSpec small_spec() {
  SieveSpec spec;
  spec.eps = 0.1;
  spec.box_half_width = 2.0;
  spec.sigma_floor = 0.1;
  spec.sigma_steps = 20;
  spec.active_atoms = 2;
  return spec;
}

TEST(Membership, SpecCases) {
  const SieveSpec spec = small_spec();
  const double mid = spec.sigma_floor * std::pow(1.0 + spec.eps, 10.0);
  EXPECT_EQ(sieve_membership(MixtureDensity(DiscreteMeasure::point_mass(Point{0.0}), mid), spec), Membership::kMember);
  MixtureDensity outside(DiscreteMeasure({Point{0.0}, Point{3.0}}, {0.5, 0.5}), mid);
  EXPECT_EQ(sieve_membership(outside, spec), Membership::kNonMember);
  MixtureDensity at_floor(DiscreteMeasure::point_mass(Point{0.0}), spec.sigma_floor);
  EXPECT_EQ(sieve_membership(at_floor, spec), Membership::kNonMember);
  MixtureDensity undecided(DiscreteMeasure({Point{0.0}}, {0.85}), mid);
  EXPECT_EQ(sieve_membership(undecided, spec), Membership::kIndeterminate);
  MixtureDensity heavy_tail(DiscreteMeasure({Point{0.0}, Point{0.0}, Point{9.0}}, {0.5, 0.3, 0.2}), mid);
  EXPECT_EQ(sieve_membership(heavy_tail, spec), Membership::kNonMember);
}

TEST(Projection, NetPointIsFixed) {
  const SieveSpec spec = small_spec();
  const SieveNet net = build_sieve_net(spec);
  NetPoint np{{3, 17}, 5, 4};
  const MixtureDensity p = realize(net, np);
  const Projection pr = project_to_net(p, net);
  EXPECT_EQ(pr.point.atom_indices, np.atom_indices);
  EXPECT_EQ(pr.point.weight_index, np.weight_index);
  EXPECT_EQ(pr.point.sigma_index, np.sigma_index);
  EXPECT_LT(pr.measured_l1, 1e-6);
}

TEST(Projection, CertifiedAndDeterministic) {
  const SieveSpec spec = small_spec();
  const SieveNet net = build_sieve_net(spec);
  MixtureDensity p(DiscreteMeasure({Point{0.33}, Point{-1.21}, Point{5.0}}, {0.6, 0.35, 0.05}), 0.37);
  ASSERT_EQ(sieve_membership(p, spec), Membership::kMember);
  const Projection a = project_to_net(p, net), b = project_to_net(p, net);
  EXPECT_LE(a.certified_l1, 5.0 * spec.eps);
  EXPECT_LE(a.terms.sigma_term, 2.0 * spec.eps);
  EXPECT_LE(a.terms.tail_term, 2.0 * spec.eps);
  EXPECT_LE(a.terms.location_term, 2.0 * spec.eps);
  EXPECT_LE(a.terms.weight_term, 2.0 * spec.eps);
  EXPECT_EQ(a.point.atom_indices, b.point.atom_indices);
  EXPECT_EQ(a.point.weight_index, b.point.weight_index);
  EXPECT_EQ(a.measured_l1, b.measured_l1);
  MixtureDensity q(DiscreteMeasure::point_mass(Point{9.0}), 0.37);
  EXPECT_THROW(project_to_net(q, net), UsageError);
}

TEST(CoveringBound, Examples) {
  SieveSpec unit;
  unit.eps = 1.0;
  unit.sigma_floor = 1.0;
  unit.box_half_width = 1.0;
  EXPECT_NEAR(log_covering_bound(unit), 0.0, 1e-15);
  SieveSpec spec;
  spec.dim = 2;
  spec.active_atoms = 3;
  spec.box_half_width = 1.0;
  spec.sigma_floor = 0.1;
  spec.eps = 0.1;
  spec.sigma_steps = 10;
  EXPECT_NEAR(log_covering_bound(spec), 36.841361, 1e-6);
}

TEST(CoveringBound, ExactNetSizeStaysProportional) {
  for (double a : {1.0, 2.0, 4.0})
    for (std::uint64_t h : {1, 2, 4}) {
      SieveSpec spec = small_spec();
      spec.box_half_width = a;
      spec.active_atoms = h;
      const double ratio = build_sieve_net(spec).log_size() / log_covering_bound(spec);
      EXPECT_GT(ratio, 0.0);
      EXPECT_LE(ratio, 10.0);
    }
}

TEST(ComplementMass, VacuousSpecAndDeterminism) {
  SieveSpec spec;
  spec.eps = 0.5;
  spec.box_half_width = 50.0;
  spec.sigma_floor = 1e-6;
  spec.sigma_steps = 400;
  spec.active_atoms = 60;
  const auto r = prior_complement_mass(spec, default_prior(1), 2000, 3);
  EXPECT_NEAR(r.mc_estimate, 0.0, 3.0 * std::max(r.se, 1.0 / 2000.0));
  EXPECT_TRUE(r.consistent());
  const auto s = prior_complement_mass(spec, default_prior(1), 2000, 3);
  EXPECT_EQ(r.mc_estimate, s.mc_estimate);
  EXPECT_EQ(r.union_terms.sum(), s.union_terms.sum());
  EXPECT_THROW(prior_complement_mass(spec, default_prior(1), 999, 3), UsageError);
}

TEST(ComplementMass, WithinUnionBound) {
  SieveSpec spec;
  spec.eps = 0.3;
  spec.box_half_width = 3.0;
  spec.sigma_floor = 0.05;
  spec.sigma_steps = 80;
  spec.active_atoms = 5;
  const auto r = prior_complement_mass(spec, default_prior(1), 20000, 8);
  EXPECT_TRUE(r.consistent());
  EXPECT_NEAR(r.se, std::sqrt(r.mc_estimate * (1.0 - r.mc_estimate) / 20000.0), 1e-15);
}

TEST(Schedule, SupersmoothExample) {
  const Schedule s = schedule_supersmooth(1000, 1.0, 1);
  EXPECT_NEAR(s.eps_bar, 0.574124, 1e-6);
  EXPECT_EQ(s.spec.active_atoms, 48u);
  EXPECT_NEAR(s.spec.box_half_width, std::sqrt(1000.0), 1e-12);
  EXPECT_EQ(s.spec.sigma_steps, 1000u);
  EXPECT_NEAR(s.spec.sigma_floor, 1e-3, 1e-15);
  EXPECT_NEAR(s.eps_tilde, std::pow(1000.0, -0.5) * std::log(1000.0), 1e-12);
  const Schedule t = schedule_supersmooth(4000, 1.0, 1);
  EXPECT_GT(t.spec.active_atoms, s.spec.active_atoms);
}

TEST(Schedule, HolderExample) {
  const Schedule s = schedule_holder(10000, 0.4, 2.0, 0.5, 1);
  EXPECT_EQ(s.spec.active_atoms, 45405u);
  EXPECT_NEAR(s.eps_bar, std::pow(1e4, -0.4) * std::pow(std::log(1e4), 2.5), 1e-12);
  EXPECT_THROW(schedule_holder(10000, 0.5, 2.0, 0.5, 1), UsageError);
  EXPECT_THROW(schedule_holder(10000, 0.0, 2.0, 0.5, 1), UsageError);
}

TEST(Schedule, OrdinarySmoothExponents) {
  const Schedule a = schedule_ordinary_smooth(1000, 1.0, 1);
  const Schedule b = schedule_holder(1000, 0.4, 6.0 / 5.0, 1.0, 1);
  EXPECT_DOUBLE_EQ(a.eps_bar, b.eps_bar);
}

}  // namespace
}  // namespace dpmix
