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
#include "dpmix/metrics.hpp"
#include "dpmix/prior.hpp"

namespace dpmix {

// ---------------------------------------------------------------------------
// Gauss rules

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1].
GaussRule gauss_legendre(std::size_t n);

/// Three-term recurrence p_{j+1}(t) = (t - alpha_j) p_j(t) - beta_j p_{j-1}(t)
/// of the monic orthogonal polynomials of a measure; beta_0 is its mass.
struct Recurrence {
  std::vector<double> alpha;
  std::vector<double> beta;
};

/// Modified Chebyshev algorithm. `modified_moments[l]` = int pi_l dmu for the
/// monic Legendre polynomials pi_l on [-1, 1], l = 0..2n-1. Returns the
/// first n recurrence coefficients, fewer if the moment data lose positive
/// definiteness.
Recurrence modified_chebyshev(std::span<const double> modified_moments, std::size_t n);

/// Nodes and weights from the Jacobi matrix of a recurrence (Golub-Welsch).
GaussRule golub_welsch(const Recurrence& rec);

/// Gauss rule with up to k nodes for the measure sum_i w_i delta_{t_i} on
/// [lo, hi]. The rule reproduces the moments of orders 0..2k'-1, where k' is
/// the returned node count (k' < k signals ill-conditioning).
GaussRule gauss_rule_for(std::span<const double> t, std::span<const double> w, double lo, double hi, std::size_t k);

// ---------------------------------------------------------------------------
// Compactly supported product densities

/// One factor of a product density, supported on [breakpoints.front(),
/// breakpoints.back()]. Interior breakpoints mark points where the factor is
/// not smooth.
struct AxisFactor {
  std::function<double(double)> pdf;
  std::function<double(double)> d1;  ///< optional first derivative
  std::function<double(double)> d2;  ///< optional second derivative
  std::function<double(Rng&)> sampler;  ///< optional exact sampler
  std::vector<double> breakpoints;

  double lo() const { return breakpoints.front(); }
  double hi() const { return breakpoints.back(); }
};

/// p(x) = prod_i f_i(x_i), zero outside the product of the factor supports.
class CompactDensity {
 public:
  CompactDensity(std::vector<AxisFactor> axes, std::string name);

  int dim() const { return static_cast<int>(axes_.size()); }
  const std::string& name() const { return name_; }
  const AxisFactor& axis(int i) const { return axes_[i]; }
  Box support() const;
  /// Smallest a with support inside [-a, a]^d.
  double half_width() const;
  bool has_derivatives() const;

  double pdf(std::span<const double> x) const;
  std::vector<double> gradient(std::span<const double> x) const;
  /// Row-major d x d Hessian.
  std::vector<double> hessian(std::span<const double> x) const;

  DensityFunction as_density() const;
  std::vector<Point> sample(std::size_t n, Rng& rng) const;

 private:
  std::vector<AxisFactor> axes_;
  std::string name_;
};

/// prod (35/32)(1 - x_i^2)^3 on [-1, 1]^d.
CompactDensity triweight_density(int dim);
/// prod (315/256)(1 - x_i^2)^4 on [-1, 1]^d.
CompactDensity quadweight_density(int dim);
/// Uniform on [-a, a]^d.
CompactDensity uniform_density(int dim, double a);
/// prod (1 - |x_i|) on [-1, 1]^d; kinked at zero and at the edges.
CompactDensity triangle_density(int dim);

struct RegularityIntegrals {
  double gradient_term = 0.0;  ///< int (|grad p| / p)^4 p
  double hessian_term = 0.0;   ///< int (||Hess p||_2 / p)^2 p
};

/// Midpoint-rule estimates of the two integrals over the support. For a
/// density violating the conditions the values grow with resolution.
RegularityIntegrals regularity_integrals(const CompactDensity& p0, std::size_t points_per_axis);

// ---------------------------------------------------------------------------
// Smoothing

struct SmoothedDensity {
  DensityFunction density;
  /// Largest gap between the 10- and 20-node convolution rules on a probe
  /// grid, propagated through the product.
  double reported_error = 0.0;
};

/// p_{P0,sigma} = P0 convolved with phi_sigma, by per-axis composite
/// Gauss-Legendre quadrature.
SmoothedDensity smooth(const CompactDensity& p0, double sigma);
/// Exact finite sum for a discrete P0.
MixtureDensity smooth(const DiscreteMeasure& p0, double sigma);

// ---------------------------------------------------------------------------
// Discretization

/// Source measure for `discretize`: either a compact product density or a
/// finite discrete measure.
struct MixingSource {
  const CompactDensity* density = nullptr;
  const DiscreteMeasure* atoms = nullptr;
  double half_width = 0.0;  ///< a

  static MixingSource of(const CompactDensity& p0);
  static MixingSource of(const DiscreteMeasure& p0, double half_width);
  int dim() const;
};

struct DiscretizeOptions {
  double c = 1.0;                    ///< k = ceil(c log(1/eps))
  std::size_t error_grid_points = 0; ///< per axis; 0 = 8192, 512, 96 for d = 1, 2, 3
  bool measure_errors = true;
};

struct DiscretizationResult {
  DiscreteMeasure measure;
  std::size_t atom_count = 0;
  std::size_t nodes_per_axis = 0;    ///< k
  std::size_t cells_per_axis = 0;
  double cell_side = 0.0;
  std::size_t degraded_cells = 0;    ///< cells where fewer than k nodes were usable
  double sup_error = 0.0;
  double l1_error = 0.0;
  double l1_error_bound = 0.0;       ///< quadrature error of the L1 estimate
  double budget_form = 0.0;          ///< [((a/sigma) v 1) log(1/eps)]^d
};

/// Cells of side <= sigma on [-a, a]^d with a k-node Gauss rule per axis and
/// cell; in d >= 2 the per-cell rule is the tensor product of the axis rules.
DiscretizationResult discretize(const MixingSource& p0, double sigma, double eps, const DiscretizeOptions& opts = {});

/// Moves each atom to the nearest point of {n sigma eps : |n| < ceil(a / (sigma eps))}^d.
/// Weights are unchanged and colliding atoms stay separate.
DiscreteMeasure snap_to_grid(const DiscreteMeasure& f, double sigma, double eps, double a);

// ---------------------------------------------------------------------------
// Partitions

/// A cell is either a closed ball or a half-open box [lo, hi) (bounds may be
/// infinite) minus every ball of the scheme.
struct Cell {
  enum class Kind { kBall, kBox } kind = Kind::kBox;
  std::vector<double> center;  ///< ball
  double radius = 0.0;         ///< ball
  Box box;                     ///< box
  bool outer = false;          ///< outside [-a, a]^d
  double diameter = 0.0;
  double base_mass = 0.0;
  double target = 0.0;         ///< p_j
};

class PartitionScheme {
 public:
  PartitionScheme(int dim, std::vector<Cell> cells);

  int dim() const { return dim_; }
  std::size_t size() const { return cells_.size(); }
  const Cell& cell(std::size_t j) const { return cells_[j]; }
  std::vector<Cell>& cells() { return cells_; }
  const std::vector<Cell>& cells() const { return cells_; }

  /// Index of the cell containing x, or size() if none.
  std::size_t locate(std::span<const double> x) const;
  /// F(U_j) for every cell.
  std::vector<double> masses_of(const DiscreteMeasure& f) const;
  /// Largest diameter over the inner (non-outer) cells.
  double max_inner_diameter() const;

 private:
  int dim_;
  std::vector<Cell> cells_;
  std::vector<std::size_t> balls_;
};

/// Equal boxes of side <= `side` covering [-a, a]^d plus 2d outer boxes
/// covering the complement. Base masses use `base`; targets are zero.
PartitionScheme box_partition(double a, double side, int dim, const BaseMeasure& base);

struct ThicknessPartition {
  PartitionScheme scheme;
  std::size_t ball_cells = 0;   ///< N
  std::size_t inner_cells = 0;  ///< K
  double ball_diameter = 0.0;   ///< sigma eps^{2b}
  double mass_floor = 0.0;      ///< ball volume times the least base density on [-a, a]^d
  double min_mass = 0.0;
  double max_mass = 0.0;
  double count_form = 0.0;      ///< sigma^{-d} (log(1/eps))^d
};

/// Balls of diameter sigma eps^{2b} around the atoms of F_sigma (targets
/// p_j = their weights), boxes of diameter <= sigma over the rest of
/// [-a, a]^d and outer boxes for the complement. Throws UsageError when two
/// atoms are closer than sigma eps^{2b} or an atom leaves [-a, a]^d.
ThicknessPartition build_thickness_partition(const DiscreteMeasure& f_sigma, double sigma, double eps, double a,
                                             const BaseMeasure& base, double b = 1.5);

struct PerturbationReport {
  double lhs_l1 = 0.0;
  double lhs_l1_error = 0.0;
  double lhs_sup = 0.0;
  double max_diameter = 0.0;
  double mass_discrepancy = 0.0;  ///< sum_j |F(V_j) - p_j|
  double rhs_l1 = 0.0;            ///< max diam / sigma + discrepancy
  double rhs_sup = 0.0;           ///< max diam / sigma^{d+1} + discrepancy / sigma^d
  double ratio_l1 = 0.0;
  double ratio_sup = 0.0;
};

/// Measures both sides of the partition perturbation bound. `f_prime` must
/// have exactly one atom in each of the inner cells carrying its weight.
PerturbationReport perturbation_bound_check(const DiscreteMeasure& f, const DiscreteMeasure& f_prime,
                                            const PartitionScheme& partition, double sigma);

// ---------------------------------------------------------------------------
// Dirichlet small-ball probabilities

struct SmallBallEstimate {
  double estimate = 0.0;
  double se = 0.0;
  std::size_t hits = 0;
  std::size_t n_sim = 0;
  bool zero_hits = false;
  double upper_bound = 0.0;  ///< 3 / n_sim when there were no hits
  std::size_t dim = 0;       ///< N
  double eps = 0.0;

  double log_estimate() const;
};

/// P(sum_j |X_j - p_j| <= 2 eps, min_j X_j >= eps^2 / 2) for X ~ Dir(alphas).
SmallBallEstimate dirichlet_small_ball(std::span<const double> alphas, std::span<const double> target, double eps,
                                       std::size_t n_sim, std::uint64_t seed);

struct DecayFit {
  double c_hat = 0.0;   ///< slope of -log P against N log(1/eps)
  double log_C = 0.0;   ///< intercept
  std::vector<double> x;
  std::vector<double> y;
};

/// Least-squares fit of log P = log C - c N log(1/eps) over the estimates.
DecayFit fit_small_ball_decay(std::span<const SmallBallEstimate> estimates);

// ---------------------------------------------------------------------------
// Smoothing-rate audit

struct SlopeReport {
  std::vector<double> sigmas;
  std::vector<double> values;
  std::vector<double> errors;
  std::size_t dropped = 0;  ///< sigmas removed for sitting below the noise floor
  double slope = 0.0;
  double intercept = 0.0;
};

/// h(p0, p_{P0,sigma}) for each sigma and the least-squares slope of
/// log h on log sigma. Values within 10x of their own error are dropped.
SlopeReport smoothing_rate_audit(const CompactDensity& p0, std::span<const double> sigmas,
                                 std::size_t points_per_axis = 0);

struct ScaleCheck {
  double l1 = 0.0;
  double l1_error = 0.0;
  double linear_form = 0.0;  ///< 1 - sigma / sigma0
  double power_form = 0.0;   ///< 2 (1 - (sigma / sigma0)^d), valid in every dimension
};

/// ||p_{F0,sigma0} - p_{F0,sigma}||_1 for sigma < sigma0 with both reference forms.
ScaleCheck scale_perturbation(const DiscreteMeasure& f0, double sigma0, double sigma);

/// Ordinary least squares slope and intercept.
std::pair<double, double> least_squares(std::span<const double> x, std::span<const double> y);

}  // namespace dpmix
