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

#include "dpmix/error.hpp"
#include "dpmix/inference.hpp"
#include "oracles.hpp"

namespace dpmix {
namespace {

std::vector<Point> gaussian_data(std::size_t n, double mu, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  return mixture_sample(MixtureDensity(DiscreteMeasure::point_mass(Point{mu}), sigma), n, rng);
}

FitConfig short_config(std::uint64_t seed) {
  FitConfig cfg;
  cfg.truncation = 10;
  cfg.iterations = 400;
  cfg.burn_in = 200;
  cfg.thin = 10;
  cfg.seed = seed;
  return cfg;
}

TEST(Config, Defaults) {
  EXPECT_EQ(default_truncation(1.0), 20u);
  EXPECT_EQ(default_truncation(1e3), 500u);
  EXPECT_EQ(default_truncation(50.0), std::size_t(std::ceil(std::log(1e-3) / std::log(50.0 / 51.0))));
  FitConfig bad;
  bad.thin = 0;
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Fit, ZeroRetainedIsEmpty) {
  FitConfig cfg = short_config(1);
  cfg.iterations = cfg.burn_in = 50;
  const auto s = fit(gaussian_data(20, 0.0, 1.0, 2), default_prior(1), cfg);
  EXPECT_TRUE(s.draws.empty());
}

TEST(Fit, ThinningCountAndDeterminism) {
  const auto data = gaussian_data(60, 0.5, 1.0, 3);
  const auto a = fit(data, default_prior(1), short_config(4));
  const auto b = fit(data, default_prior(1), short_config(4));
  ASSERT_EQ(a.draws.size(), 20u);
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    EXPECT_EQ(a.draws[i].sigma(), b.draws[i].sigma());
    EXPECT_EQ(mixture_pdf(a.draws[i], Point{0.1}), mixture_pdf(b.draws[i], Point{0.1}));
  }
  EXPECT_EQ(a.log_joint_trace, b.log_joint_trace);
}

TEST(Fit, ConjugateSingleCluster) {
  const std::size_t n = 50;
  const double s = 1.0, tau = 1.0;
  const auto data = gaussian_data(n, 0.8, s, 5);
  double sum = 0.0;
  for (const auto& x : data) sum += x[0];
  FitConfig cfg;
  cfg.truncation = 2;
  cfg.single_cluster = true;
  cfg.fixed_sigma = s;
  cfg.iterations = 22000;
  cfg.burn_in = 2000;
  cfg.seed = 6;
  const auto post = fit(data, default_prior(1), cfg);
  double m = 0.0;
  for (const auto& d : post.draws) m += d.mixing().location(0)[0];
  m /= double(post.draws.size());
  const double se = oracle::conjugate_sd(n, s, tau) / std::sqrt(double(post.draws.size()));
  EXPECT_NEAR(m, oracle::conjugate_mean(sum, n, s, tau), 3.0 * se);
}

TEST(Fit, DataOrderExchangeability) {
  auto data = gaussian_data(80, 0.0, 1.0, 7);
  FitConfig cfg = short_config(8);
  cfg.iterations = 3000;
  cfg.burn_in = 1000;
  cfg.thin = 20;
  auto mean_pdf = [](const PosteriorSampleSet& s, double x) {
    double v = 0.0;
    for (const auto& d : s.draws) v += mixture_pdf(d, Point{x});
    return v / double(s.draws.size());
  };
  const auto a = fit(data, default_prior(1), cfg);
  std::reverse(data.begin(), data.end());
  const auto b = fit(data, default_prior(1), cfg);
  for (double x : {-1.0, 0.0, 1.0}) EXPECT_NEAR(mean_pdf(a, x), mean_pdf(b, x), 0.05);
}

TEST(Predictive, SingleDrawAndLinearity) {
  const auto s = fit(gaussian_data(30, 0.0, 1.0, 9), default_prior(1), short_config(10));
  PosteriorSampleSet one;
  one.draws = {s.draws.front()};
  const std::vector<Point> grid{Point{-1.0}, Point{0.0}, Point{0.7}};
  const auto t = posterior_predictive(one, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_DOUBLE_EQ(t.values[i], mixture_pdf(one.draws[0], grid[i]));

  PosteriorSampleSet first, second;
  first.draws.assign(s.draws.begin(), s.draws.begin() + 5);
  second.draws.assign(s.draws.begin() + 5, s.draws.end());
  const auto all = posterior_predictive(s, grid), p1 = posterior_predictive(first, grid),
             p2 = posterior_predictive(second, grid);
  const double w1 = 5.0 / double(s.draws.size());
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(all.values[i], w1 * p1.values[i] + (1 - w1) * p2.values[i], 1e-14);
}

TEST(Predictive, LargeSampleCloseToTruth) {
  const auto truth = MixtureDensity(DiscreteMeasure::point_mass(Point{0.0}), 1.0);
  Rng rng(12);
  const auto data = mixture_sample(truth, 2000, rng);
  FitConfig cfg = short_config(13);
  cfg.truncation = 20;
  cfg.iterations = 1500;
  cfg.burn_in = 500;
  cfg.thin = 20;
  const auto s = fit(data, default_prior(1), cfg);
  EXPECT_LE(l1_distance(as_density(truth), predictive_density(s)).value, 0.1);
}

TEST(Likelihood, LabelPermutationInvariance) {
  const auto data = gaussian_data(40, 0.0, 1.5, 14);
  FitConfig cfg = short_config(15);
  cfg.truncation = 6;
  GibbsSampler sampler(data, default_prior(1), cfg);
  for (int i = 0; i < 20; ++i) sampler.sweep();
  const GibbsState& st = sampler.state();
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  const GibbsState moved = permute_components(st, perm);
  EXPECT_NEAR(complete_data_log_likelihood(data, moved), complete_data_log_likelihood(data, st), 1e-12 * std::abs(complete_data_log_likelihood(data, st)));
  const auto wa = st.weights(), wb = moved.weights();
  for (std::size_t h = 0; h < perm.size(); ++h) EXPECT_NEAR(wb[perm[h]], wa[h], 1e-12);
}

TEST(Sampler, StateInvariants) {
  const auto data = gaussian_data(40, 0.0, 1.0, 16);
  GibbsSampler sampler(data, default_prior(1), short_config(17));
  for (int i = 0; i < 30; ++i) {
    sampler.sweep();
    const GibbsState& st = sampler.state();
    ASSERT_TRUE(std::isfinite(st.log_joint));
    ASSERT_GT(st.sigma, 0.0);
    EXPECT_EQ(st.sticks.back(), 1.0);
    for (std::size_t c : st.allocations) ASSERT_LT(c, st.truncation());
    for (std::size_t h = 0; h + 1 < st.sticks.size(); ++h) ASSERT_TRUE(st.sticks[h] > 0.0 && st.sticks[h] < 1.0);
  }
}

TEST(Sampler, LogJointRisesFromOverdispersedStart) {
  const auto data = gaussian_data(100, 0.0, 0.5, 18);
  FitConfig cfg = short_config(19);
  GibbsSampler sampler(data, default_prior(1), cfg);
  GibbsState st = sampler.state();
  st.sigma = 20.0;
  for (std::size_t h = 0; h < st.truncation(); ++h) st.atoms[h] = 15.0 * (h % 2 ? 1.0 : -1.0);
  sampler.set_state(st);
  const double start = sampler.compute_log_joint();
  for (int i = 0; i < 100; ++i) sampler.sweep();
  EXPECT_GT(sampler.state().log_joint, start);
}

TEST(Sampler, DetailedBalanceTwoState) {
  const BandwidthPrior prior(1.0, 1.0, 1);
  const SigmaStats stats{30.0, 25.0};
  const auto r = detailed_balance_check(stats, prior, std::log(0.8), std::log(1.1));
  EXPECT_LE(r.imbalance, 1e-12);
  EXPECT_LE(r.row_sum_error, 1e-12);
}

TEST(Sampler, PriorReproduction) {
  ReproductionConfig cfg;
  cfg.iterations = 20000;
  cfg.seed = 3;
  const auto rep = prior_reproduction_check(default_prior(1), cfg);
  EXPECT_FALSE(rep.failed);
  for (const auto& m : rep.moments) EXPECT_LT(std::abs(m.z()), 5.0) << m.name;
  const auto again = prior_reproduction_check(default_prior(1), cfg);
  EXPECT_EQ(rep.moments.front().estimate, again.moments.front().estimate);
}

}  // namespace
}  // namespace dpmix
