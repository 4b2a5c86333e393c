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
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dpmix/density.hpp"
#include "dpmix/error.hpp"
#include "dpmix/metrics.hpp"
#include "dpmix/prior.hpp"
#include "oracles.hpp"

namespace dpmix {
namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

TEST(Kernel, StandardNormalAtMode) {
  IsotropicGaussianKernel k(1.0, 1);
  EXPECT_NEAR(kernel_eval(k, Point{0.3}, Point{0.3}), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
}

TEST(Kernel, BivariateAtMode) {
  IsotropicGaussianKernel k(1.0, 2);
  EXPECT_NEAR(kernel_eval(k, Point{1.0, -2.0}, Point{1.0, -2.0}), 1.0 / (2.0 * std::numbers::pi), 1e-15);
}

TEST(Kernel, MatchesHighPrecisionClosedForm) {
  IsotropicGaussianKernel k(2.0, 1);
  const Big sigma = 2, r = 2;
  const Big exact = exp(-(r * r) / (2 * sigma * sigma)) / sqrt(2 * boost::math::constants::pi<Big>() * sigma * sigma);
  const double got = kernel_eval(k, Point{3.0}, Point{1.0});
  EXPECT_NEAR(got, exact.convert_to<double>(), 1e-16);
}

TEST(Kernel, DimensionMismatchIsUsageError) {
  IsotropicGaussianKernel k(1.0, 2);
  EXPECT_THROW(kernel_eval(k, Point{0.0}, Point{0.0, 0.0}), UsageError);
}

TEST(Kernel, DeepTailClampsToZero) {
  IsotropicGaussianKernel k(1.0, 1);
  EXPECT_EQ(kernel_eval(k, Point{50.0}, Point{0.0}), 0.0);
  EXPECT_LT(k.log_eval(Point{50.0}.coords(), Point{0.0}.coords()), kLogUnderflow);
}

TEST(Mixture, SingleAtomEqualsKernel) {
  MixtureDensity mix(DiscreteMeasure::point_mass(Point{0.0}), 0.7);
  for (double x : {-1.0, 0.0, 0.4, 2.5})
    EXPECT_DOUBLE_EQ(mixture_pdf(mix, Point{x}), kernel_eval(mix.kernel(), Point{x}, Point{0.0}));
}

TEST(Mixture, SymmetricPairIsEven) {
  MixtureDensity mix(DiscreteMeasure({Point{-1.0}, Point{1.0}}, {0.5, 0.5}), 0.6);
  for (double x : {0.1, 0.5, 1.3, 3.0}) EXPECT_NEAR(mixture_pdf(mix, Point{x}), mixture_pdf(mix, Point{-x}), 1e-16);
}

TEST(Mixture, MatchesNaiveSum) {
  Rng rng(7);
  std::vector<Point> atoms;
  std::vector<double> w;
  for (int h = 0; h < 50; ++h) {
    atoms.push_back(Point{rng.normal() * 2.0, rng.normal() * 2.0});
    w.push_back(rng.uniform());
  }
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  MixtureDensity mix(DiscreteMeasure(atoms, w), 0.8);
  for (int t = 0; t < 20; ++t) {
    const Point x{rng.normal() * 3.0, rng.normal() * 3.0};
    double naive = 0.0;
    for (int h = 0; h < 50; ++h) {
      const double dx = x[0] - atoms[h][0], dy = x[1] - atoms[h][1];
      naive += w[h] * std::exp(-(dx * dx + dy * dy) / (2.0 * 0.64)) / (2.0 * std::numbers::pi * 0.64);
    }
    EXPECT_NEAR(mixture_pdf(mix, x), naive, 1e-12 * naive);
  }
}

TEST(Mixture, EmptyMeasureIsUsageError) {
  EXPECT_THROW(MixtureDensity(DiscreteMeasure(), 1.0), UsageError);
}

TEST(Mixture, PermutationAndMergingInvariance) {
  DiscreteMeasure a({Point{0.0}, Point{1.0}, Point{0.0}, Point{-2.0}}, {0.1, 0.4, 0.2, 0.3});
  DiscreteMeasure b({Point{-2.0}, Point{0.0}, Point{1.0}, Point{0.0}}, {0.3, 0.2, 0.4, 0.1});
  MixtureDensity pa(a, 0.5), pb(b, 0.5), pm(a.merged_duplicates(), 0.5);
  EXPECT_EQ(a.merged_duplicates().size(), 3u);
  for (double x : {-3.0, -0.7, 0.0, 0.9, 2.2}) {
    EXPECT_NEAR(mixture_pdf(pa, Point{x}), mixture_pdf(pb, Point{x}), 1e-12);
    EXPECT_NEAR(mixture_pdf(pa, Point{x}), mixture_pdf(pm, Point{x}), 1e-12);
  }
}

TEST(Mixture, IntegratesToOne) {
  MixtureDensity mix(DiscreteMeasure({Point{-1.0, 0.5}, Point{2.0, 0.0}}, {0.25, 0.75}), 0.4);
  const DensityFunction p = as_density(mix);
  const MetricEstimate m = integrate(p, QuadratureScheme::grid(p.support, 512));
  EXPECT_NEAR(m.value, 1.0, 1e-6);
}

TEST(Sample, MeanWithinClt) {
  MixtureDensity mix(DiscreteMeasure::point_mass(Point{1.5, -0.5}), 1.0);
  Rng rng(11);
  const std::size_t n = 100000;
  const auto xs = mixture_sample(mix, n, rng);
  double m0 = 0.0, m1 = 0.0;
  for (const auto& x : xs) {
    m0 += x[0];
    m1 += x[1];
  }
  EXPECT_NEAR(m0 / n, 1.5, 4.0 / std::sqrt(double(n)));
  EXPECT_NEAR(m1 / n, -0.5, 4.0 / std::sqrt(double(n)));
}

TEST(Sample, ZeroDrawsAndDeterminism) {
  MixtureDensity mix(DiscreteMeasure({Point{-1.0}, Point{1.0}}, {0.5, 0.5}), 0.5);
  Rng r0(3);
  EXPECT_TRUE(mixture_sample(mix, 0, r0).empty());
  Rng r1(5), r2(5);
  EXPECT_EQ(mixture_sample(mix, 100, r1), mixture_sample(mix, 100, r2));
}

TEST(Sample, UnnormalizedIsUsageError) {
  MixtureDensity mix(DiscreteMeasure({Point{0.0}}, {0.5}), 1.0);
  Rng rng(1);
  EXPECT_THROW(mixture_sample(mix, 5, rng), UsageError);
}

TEST(Sample, KolmogorovSmirnovMajority) {
  MixtureDensity mix(DiscreteMeasure({Point{-1.0}, Point{1.0}}, {0.3, 0.7}), 0.5);
  const std::size_t n = 100000;
  int passed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto xs = mixture_sample(mix, n, rng);
    std::vector<double> v;
    for (const auto& x : xs) v.push_back(x[0]);
    std::sort(v.begin(), v.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = 0.3 * oracle::std_normal_cdf((v[i] + 1.0) / 0.5) + 0.7 * oracle::std_normal_cdf((v[i] - 1.0) / 0.5);
      ks = std::max({ks, std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)});
    }
    if (ks <= 1.63 / std::sqrt(double(n))) ++passed;
  }
  EXPECT_GE(passed, 3);
}

TEST(Deficit, Basics) {
  EXPECT_EQ(truncation_deficit(DiscreteMeasure({Point{0.0}, Point{1.0}}, {0.5, 0.5})), 0.0);
  EXPECT_NEAR(truncation_deficit(DiscreteMeasure({Point{0.0}, Point{1.0}}, {0.5, 0.3})), 0.2, 1e-15);
}

TEST(Deficit, MatchesStickProduct) {
  auto draw = stick_breaking_from({0.3, 0.5, 0.2, 0.6}, 1, {0.0, 1.0, 2.0, 3.0});
  const double prod = 0.7 * 0.5 * 0.8 * 0.4;
  EXPECT_NEAR(truncation_deficit(draw.measure), prod, 1e-12);
  EXPECT_NEAR(draw.tail_deficit, prod, 1e-15);
}

TEST(Serialization, RoundTripIsBitExact) {
  Rng rng(19);
  std::vector<Point> atoms;
  std::vector<double> w;
  for (int h = 0; h < 7; ++h) {
    atoms.push_back(Point{rng.normal() / 3.0, rng.normal() * 1e5, rng.normal() * 1e-7});
    w.push_back(rng.uniform() / 7.0);
  }
  MixtureDensity mix(DiscreteMeasure(atoms, w), std::numbers::pi / 7.0);
  std::stringstream ss;
  write_mixture(ss, mix);
  write_mixture(ss, mix);
  const auto back = read_mixtures(ss);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& m : back) {
    EXPECT_EQ(m.sigma(), mix.sigma());
    ASSERT_EQ(m.mixing().size(), 7u);
    for (std::size_t h = 0; h < 7; ++h) {
      EXPECT_EQ(m.mixing().weight(h), mix.mixing().weight(h));
      for (int i = 0; i < 3; ++i) EXPECT_EQ(m.mixing().location(h)[i], mix.mixing().location(h)[i]);
    }
  }
}

TEST(Serialization, MalformedInputIsIoError) {
  std::stringstream bad("1 2\n0.5 0.0\n");
  EXPECT_THROW(read_mixture(bad), IoError);
}

}  // namespace
}  // namespace dpmix
