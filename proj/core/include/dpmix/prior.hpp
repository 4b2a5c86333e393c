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

#pragma once

#include <cstddef>
#include <vector>

#include "dpmix/density.hpp"
#include "dpmix/rng.hpp"

namespace dpmix {

struct BoxMass {
  double inside;   ///< mass of [-a, a]^d
  double outside;  ///< mass of its complement, computed without cancellation
};

/// alpha = total_mass * N(0, tau^2 I_d): the normalized base measure is a
/// Gaussian, which is strictly positive with Gaussian tails.
class BaseMeasure {
 public:
  BaseMeasure(double total_mass, double tau, int dim);

  double total_mass() const { return total_mass_; }
  double tau() const { return tau_; }
  int dim() const { return dim_; }

  /// Lebesgue density of the normalized base measure.
  double density(std::span<const double> x) const;
  Point sample(Rng& rng) const;
  void sample_into(Rng& rng, std::span<double> out) const;
  BoxMass mass_of_box(double a) const;
  /// Normalized mass of the closed ball of given radius around `center`.
  double mass_of_ball(std::span<const double> center, double radius) const;
  /// Normalized mass of the axis-aligned box [lo, hi] (bounds may be infinite).
  double mass_of_cell(std::span<const double> lo, std::span<const double> hi) const;

 private:
  double total_mass_;
  double tau_;
  int dim_;
};

/// Law of sigma through sigma^{-d} ~ Gamma(shape, rate).
struct BandwidthPrior {
  double shape;
  double rate;
  int dim;

  BandwidthPrior(double shape, double rate, int dim);

  /// P(sigma^{-d} <= g).
  double precision_cdf(double g) const;
  /// P(sigma <= s) and P(sigma >= s) in terms of the precision law.
  double prob_sigma_below(double s) const;
  double prob_sigma_above(double s) const;
  /// Density of sigma itself, on the log scale.
  double log_density_sigma(double sigma) const;
};

struct DPPrior {
  BaseMeasure base;
  BandwidthPrior bandwidth;

  DPPrior(BaseMeasure base, BandwidthPrior bandwidth);
  int dim() const { return base.dim(); }
  double alpha_mass() const { return base.total_mass(); }
};

/// Default prior: |alpha| = 1, tau = 1, sigma^{-d} ~ Gamma(1, 1).
DPPrior default_prior(int dim);

struct StickBreakingDraw {
  std::vector<double> sticks;  ///< V_1..V_H
  DiscreteMeasure measure;     ///< weights pi_h with atoms Z_h, in stick order
  double tail_deficit;         ///< prod_h (1 - V_h)
};

/// Weights pi_h = V_h prod_{j<h}(1 - V_j) for given sticks and atoms.
StickBreakingDraw stick_breaking_from(std::vector<double> sticks, int dim, std::vector<double> atom_locations);

/// H_trunc sticks V_h ~ Beta(1, |alpha|) and atoms Z_h ~ base.
StickBreakingDraw draw_stick_breaking(const DPPrior& prior, std::size_t h_trunc, Rng& rng);

/// sigma = G^{-1/d} with G ~ Gamma(shape, rate).
double draw_sigma(const DPPrior& prior, Rng& rng);

inline constexpr std::size_t kMaxSticks = 1'000'000;

/// Extends the stick sequence until the remaining mass drops below
/// `tail_tol`; the remainder stays recorded as the mixing deficit.
MixtureDensity draw_prior_density(const DPPrior& prior, double tail_tol, Rng& rng);

/// P(sum_{h>H} pi_h > eps) = P(Gamma(H, |alpha|) < log(1/eps)).
double stick_tail_prob(std::size_t h, double eps, double alpha_mass);
/// (e |alpha| log(1/eps) / H)^H, the Stirling-form upper bound of the above.
double stick_tail_stirling_bound(std::size_t h, double eps, double alpha_mass);

}  // namespace dpmix
