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
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dpmix/density.hpp"

namespace dpmix {

/// Axis-aligned box [lo, hi].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const;
  Box united(const Box& other) const;
  Box padded(double r) const;
  static Box cube(int dim, double half_width);
};

/// A pointwise-evaluable density with a box holding essentially all of its
/// mass. `mass` is the expected total mass (below one for truncated draws).
struct DensityFunction {
  std::function<double(std::span<const double>)> eval;
  Box support;
  double mass = 1.0;

  int dim() const { return support.dim(); }
};

/// The mixture as a density; support is the atom hull padded by 8 sigma.
DensityFunction as_density(const MixtureDensity& mix);

enum class QuadratureMode { kGrid, kMonteCarlo };

struct QuadratureScheme {
  QuadratureMode mode = QuadratureMode::kGrid;
  std::size_t resolution = 0;  ///< points per axis (grid) or sample count (Monte Carlo)
  Box domain;
  std::uint64_t seed = 0;      ///< Monte Carlo only

  static QuadratureScheme grid(Box domain, std::size_t points_per_axis);
  static QuadratureScheme monte_carlo(Box domain, std::size_t samples, std::uint64_t seed);
  /// Tensor midpoint grid over the union of the supports, with the default
  /// per-axis resolution for the dimension (2048, 512, 128 for d = 1, 2, 3).
  static QuadratureScheme default_for(const DensityFunction& p, const DensityFunction& q);
  static std::size_t default_points_per_axis(int dim);

  std::string describe() const;
};

/// A quadrature estimate. `error` is the reported error bound: half the gap
/// between the two interleaved half-grids plus mass lost outside the domain
/// (grid), or one standard error (Monte Carlo).
struct MetricEstimate {
  double value = 0.0;
  double error = 0.0;
  bool infinite = false;          ///< q vanished where p did not
  bool accuracy_warning = false;  ///< domain missed more than 1e-6 of a mass
  double captured_mass_p = 0.0;
  double captured_mass_q = 0.0;
  std::string scheme;
};

MetricEstimate l1_distance(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme);
MetricEstimate l1_distance(const DensityFunction& p, const DensityFunction& q);
/// [int (sqrt p - sqrt q)^2]^{1/2}, no factor 1/2.
MetricEstimate hellinger(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme);
MetricEstimate hellinger(const DensityFunction& p, const DensityFunction& q);
/// K(p, q) = int p log(p/q).
MetricEstimate kl_div(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme);
MetricEstimate kl_div(const DensityFunction& p, const DensityFunction& q);
/// V(p, q) = int p log^2(p/q).
MetricEstimate kl_second(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme);
MetricEstimate kl_second(const DensityFunction& p, const DensityFunction& q);

struct KlBallReport {
  bool contains = false;
  MetricEstimate k;
  MetricEstimate v;
};

/// Membership of q in {K(p0, q) <= eps^2, V(p0, q) <= eps^2}.
KlBallReport kl_ball(const DensityFunction& p0, const DensityFunction& q, double eps, const QuadratureScheme& scheme);
bool kl_ball_contains(const DensityFunction& p0, const DensityFunction& q, double eps, const QuadratureScheme& scheme);

/// max |p - q| over the quadrature nodes.
MetricEstimate sup_distance(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme);
/// Estimate of ||p/q||_inf: max ratio over nodes where p > 1e-12.
MetricEstimate sup_ratio(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme);
/// Integral of p over the scheme domain.
MetricEstimate integrate(const DensityFunction& p, const QuadratureScheme& scheme);

inline constexpr double kKlDensityFloor = 1e-300;

}  // namespace dpmix
