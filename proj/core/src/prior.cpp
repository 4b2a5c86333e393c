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

#include "dpmix/prior.hpp"

#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>

#include "dpmix/error.hpp"

namespace dpmix {

BaseMeasure::BaseMeasure(double total_mass, double tau, int dim) : total_mass_(total_mass), tau_(tau), dim_(dim) {
  if (!(total_mass > 0.0)) throw UsageError("BaseMeasure: total mass must be positive");
  if (!(tau > 0.0)) throw UsageError("BaseMeasure: tau must be positive");
  if (dim < 1) throw UsageError("BaseMeasure: dimension must be at least 1");
}

double BaseMeasure::density(std::span<const double> x) const {
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  return std::exp(-0.5 * dim_ * std::log(2.0 * std::numbers::pi * tau_ * tau_) - r2 / (2.0 * tau_ * tau_));
}

Point BaseMeasure::sample(Rng& rng) const {
  std::vector<double> x(dim_);
  sample_into(rng, x);
  return Point(std::move(x));
}

void BaseMeasure::sample_into(Rng& rng, std::span<double> out) const {
  for (auto& c : out) c = tau_ * rng.normal();
}

BoxMass BaseMeasure::mass_of_box(double a) const {
  if (!(a >= 0.0)) throw UsageError("mass_of_box: half-width must be nonnegative");
  const double q = std::erfc(a / (tau_ * std::numbers::sqrt2));  // per-axis outside mass
  const double outside = -std::expm1(dim_ * std::log1p(-q));
  return {1.0 - outside, outside};
}

double BaseMeasure::mass_of_ball(std::span<const double> center, double radius) const {
  if (!(radius > 0.0)) return 0.0;
  double c2 = 0.0;
  for (double c : center) c2 += c * c;
  if (dim_ == 1) {
    const double s = tau_ * std::numbers::sqrt2;
    return 0.5 * (std::erf((center[0] + radius) / s) - std::erf((center[0] - radius) / s));
  }
  const double lambda = c2 / (tau_ * tau_);
  const double x = radius * radius / (tau_ * tau_);
  if (lambda == 0.0) return boost::math::gamma_p(0.5 * dim_, 0.5 * x);
  boost::math::non_central_chi_squared dist(dim_, lambda);
  return boost::math::cdf(dist, x);
}

double BaseMeasure::mass_of_cell(std::span<const double> lo, std::span<const double> hi) const {
  const double s = tau_ * std::numbers::sqrt2;
  double mass = 1.0;
  for (int i = 0; i < dim_; ++i) {
    // Evaluate on the side of zero where erfc keeps precision.
    double m;
    if (lo[i] >= 0.0)
      m = 0.5 * (std::erfc(lo[i] / s) - std::erfc(hi[i] / s));
    else if (hi[i] <= 0.0)
      m = 0.5 * (std::erfc(-hi[i] / s) - std::erfc(-lo[i] / s));
    else
      m = 1.0 - 0.5 * std::erfc(-lo[i] / s) - 0.5 * std::erfc(hi[i] / s);
    mass *= std::max(0.0, m);
  }
  return mass;
}

BandwidthPrior::BandwidthPrior(double shape_, double rate_, int dim_) : shape(shape_), rate(rate_), dim(dim_) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw UsageError("BandwidthPrior: shape and rate must be positive");
  if (dim < 1) throw UsageError("BandwidthPrior: dimension must be at least 1");
}

double BandwidthPrior::precision_cdf(double g) const {
  if (g <= 0.0) return 0.0;
  if (!std::isfinite(g)) return 1.0;
  return boost::math::gamma_p(shape, rate * g);
}

double BandwidthPrior::prob_sigma_below(double s) const {
  // sigma <= s  <=>  sigma^{-d} >= s^{-d}
  if (s <= 0.0) return 0.0;
  const double g = std::exp(-dim * std::log(s));
  if (!std::isfinite(g)) return 0.0;
  return boost::math::gamma_q(shape, rate * g);
}

double BandwidthPrior::prob_sigma_above(double s) const {
  if (s <= 0.0) return 1.0;
  const double log_g = -dim * std::log(s);
  if (log_g < -700.0) return 0.0;
  return precision_cdf(std::exp(log_g));
}

double BandwidthPrior::log_density_sigma(double sigma) const {
  // G = sigma^{-d}, |dG/dsigma| = d sigma^{-d-1}
  const double log_g = -dim * std::log(sigma);
  const double g = std::exp(log_g);
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * log_g - rate * g + std::log(double(dim)) +
         (-dim - 1.0) * std::log(sigma);
}

DPPrior::DPPrior(BaseMeasure base_, BandwidthPrior bandwidth_) : base(base_), bandwidth(bandwidth_) {
  if (base.dim() != bandwidth.dim) throw UsageError("DPPrior: base and bandwidth dimensions differ");
}

DPPrior default_prior(int dim) { return DPPrior(BaseMeasure(1.0, 1.0, dim), BandwidthPrior(1.0, 1.0, dim)); }

StickBreakingDraw stick_breaking_from(std::vector<double> sticks, int dim, std::vector<double> atom_locations) {
  std::vector<double> weights(sticks.size());
  double remaining = 1.0;
  for (std::size_t h = 0; h < sticks.size(); ++h) {
    if (!(sticks[h] >= 0.0 && sticks[h] <= 1.0)) throw UsageError("stick_breaking_from: sticks must lie in [0, 1]");
    weights[h] = sticks[h] * remaining;
    remaining *= 1.0 - sticks[h];
  }
  DiscreteMeasure measure(dim, std::move(atom_locations), std::move(weights));
  return {std::move(sticks), std::move(measure), remaining};
}

namespace {

// V ~ Beta(1, alpha) by inversion: 1 - V = U^{1/alpha}.
double draw_stick(double alpha, Rng& rng) { return -std::expm1(std::log(rng.uniform()) / alpha); }

}  // namespace

StickBreakingDraw draw_stick_breaking(const DPPrior& prior, std::size_t h_trunc, Rng& rng) {
  if (h_trunc < 1) throw UsageError("draw_stick_breaking: need at least one stick");
  std::vector<double> sticks(h_trunc);
  for (auto& v : sticks) v = draw_stick(prior.alpha_mass(), rng);
  std::vector<double> atoms(h_trunc * prior.dim());
  for (std::size_t h = 0; h < h_trunc; ++h)
    prior.base.sample_into(rng, std::span<double>(atoms.data() + h * prior.dim(), prior.dim()));
  return stick_breaking_from(std::move(sticks), prior.dim(), std::move(atoms));
}

double draw_sigma(const DPPrior& prior, Rng& rng) {
  const double g = rng.gamma(prior.bandwidth.shape, prior.bandwidth.rate);
  return std::exp(-std::log(g) / prior.dim());
}

MixtureDensity draw_prior_density(const DPPrior& prior, double tail_tol, Rng& rng) {
  if (!(tail_tol > 0.0 && tail_tol < 1.0)) throw UsageError("draw_prior_density: tail_tol must lie in (0, 1)");
  const int d = prior.dim();
  std::vector<double> weights;
  std::vector<double> atoms;
  double remaining = 1.0;
  while (remaining >= tail_tol) {
    if (weights.size() >= kMaxSticks) throw ResourceError("draw_prior_density: stick cap exceeded");
    const double v = draw_stick(prior.alpha_mass(), rng);
    weights.push_back(v * remaining);
    remaining *= 1.0 - v;
    atoms.resize(atoms.size() + d);
    prior.base.sample_into(rng, std::span<double>(atoms.data() + atoms.size() - d, d));
  }
  const double sigma = draw_sigma(prior, rng);
  return MixtureDensity(DiscreteMeasure(d, std::move(atoms), std::move(weights)), sigma);
}

double stick_tail_prob(std::size_t h, double eps, double alpha_mass) {
  if (h < 1) throw UsageError("stick_tail_prob: H must be at least 1");
  if (!(eps > 0.0 && eps < 1.0)) throw UsageError("stick_tail_prob: eps must lie in (0, 1)");
  if (!(alpha_mass > 0.0)) throw UsageError("stick_tail_prob: alpha mass must be positive");
  return boost::math::gamma_p(static_cast<double>(h), alpha_mass * std::log(1.0 / eps));
}

double stick_tail_stirling_bound(std::size_t h, double eps, double alpha_mass) {
  const double hh = static_cast<double>(h);
  return std::pow(std::numbers::e * alpha_mass * std::log(1.0 / eps) / hh, hh);
}

}  // namespace dpmix
