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
#include <vector>

#include "dpmix/density.hpp"
#include "dpmix/metrics.hpp"
#include "dpmix/prior.hpp"

namespace dpmix {

/// Parameters of the sieve set
///   Q = { p_{F,sigma} : z_h in [-a,a]^d for h <= H, sum_{h>H} pi_h < eps,
///         1 < sigma / sigma_floor < (1 + eps)^M }.
struct SieveSpec {
  double eps = 0.1;
  double box_half_width = 1.0;  ///< a
  double sigma_floor = 0.1;     ///< lower bandwidth bound
  std::uint64_t sigma_steps = 1;   ///< M
  std::uint64_t active_atoms = 1;  ///< H
  int dim = 1;

  void validate() const;
  /// log of the upper bandwidth bound sigma_floor (1 + eps)^M; kept in log
  /// form because (1 + eps)^M overflows for schedule-sized M.
  double log_sigma_ceiling() const;
};

/// Axis-aligned grid of cell centers covering [-a, a]^d; every point of the
/// cube lies within Euclidean distance `radius` of some grid point.
class LocationGrid {
 public:
  LocationGrid(double half_width, double radius, int dim);

  int dim() const { return dim_; }
  double step() const { return step_; }
  std::uint64_t points_per_axis() const { return per_axis_; }
  /// Number of points as a double (may exceed 2^64 for large instances).
  double size() const;
  double log_size() const;

  Point point(std::uint64_t index) const;
  /// Nearest grid point; ties go to the lexicographically smallest index.
  std::uint64_t nearest(std::span<const double> x) const;

 private:
  double half_width_;
  double radius_;
  int dim_;
  double step_;
  std::uint64_t per_axis_;
  double start_;
};

inline constexpr double kMaxNetSize = 1e8;

/// Points of the location grid; throws ResourceError beyond 1e8 points.
std::vector<Point> build_location_net(double half_width, double radius, int dim);

/// The compositions of k = ceil(H / eps) into H parts, scaled by 1/k, in
/// lexicographic order of the integer parts.
class SimplexNet {
 public:
  SimplexNet(std::uint64_t parts, double eps);

  std::uint64_t parts() const { return parts_; }
  std::uint64_t resolution() const { return k_; }
  double size() const;
  double log_size() const;

  /// All net points; throws ResourceError beyond 1e8 points.
  std::vector<std::vector<double>> enumerate() const;
  /// Index of the L1-nearest net point (largest-remainder rounding, ties to
  /// the lower coordinate).
  std::uint64_t nearest(std::span<const double> weights) const;
  std::vector<double> point(std::uint64_t index) const;

 private:
  std::vector<std::uint64_t> round_to_lattice(std::span<const double> weights) const;
  std::uint64_t rank(const std::vector<std::uint64_t>& parts) const;

  std::uint64_t parts_;
  std::uint64_t k_;
};

std::vector<std::vector<double>> build_simplex_net(std::uint64_t parts, double eps);

/// sigma_floor (1 + eps)^m for m = 1..M.
std::vector<double> build_sigma_grid(const SieveSpec& spec);

/// Grid index (0-based, m - 1) of the smallest grid value >= sigma, so that
/// sigma* / sigma lies in [1, 1 + eps). Requires sigma inside the sieve range.
std::uint64_t bracket_sigma(const SieveSpec& spec, double sigma);

struct SieveNet {
  SieveSpec spec;
  LocationGrid locations;
  SimplexNet weights;
  std::vector<double> sigmas;

  double log_size() const;
};

SieveNet build_sieve_net(const SieveSpec& spec);

enum class Membership { kMember, kNonMember, kIndeterminate };

/// Membership of a stick-ordered mixture in Q. The recorded deficit counts
/// as tail mass; when that makes the tail test undecidable the result is
/// kIndeterminate.
Membership sieve_membership(const MixtureDensity& p, const SieveSpec& spec);

struct NetPoint {
  std::vector<std::uint64_t> atom_indices;  ///< H indices into the location grid
  std::uint64_t weight_index = 0;           ///< index into the simplex net
  std::uint64_t sigma_index = 0;            ///< index into the sigma grid
};

/// The mixture addressed by a net point, rebuilt from its indices alone.
MixtureDensity realize(const SieveNet& net, const NetPoint& point);

struct ProjectionTerms {
  double sigma_term = 0.0;     ///< ||p_{F,sigma} - p_{F,sigma*}||_1 (measured)
  double tail_term = 0.0;      ///< sum_{h>H} pi_h plus recorded deficit
  double location_term = 0.0;  ///< sum_{h<=H} pi_h ||phi(. - z_h) - phi(. - z*_h)||_1 (closed form)
  double weight_term = 0.0;    ///< sum_{h<=H} |pi_h - pi*_h|
};

struct Projection {
  NetPoint point;
  MixtureDensity realized;
  double measured_l1 = 0.0;
  double quadrature_error = 0.0;
  double certified_l1 = 0.0;  ///< measured + quadrature error + deficit
  ProjectionTerms terms;
};

/// Projects a member of Q onto the net and certifies ||p - p*||_1 <= 5 eps.
/// Throws UsageError for non-members, InvariantViolation if certification fails.
Projection project_to_net(const MixtureDensity& p, const SieveNet& net);

/// dH log(a / (sigma_floor eps)) + H log(1/eps) + log M.
double log_covering_bound(const SieveSpec& spec);

struct ComplementTerms {
  double atoms_outside = 0.0;  ///< H * alpha_bar(outside [-a,a]^d)
  double sigma_outside = 0.0;  ///< P(sigma outside the sieve range)
  double stick_tail = 0.0;     ///< P(sum_{h>H} pi_h > eps)
  double sum() const { return atoms_outside + sigma_outside + stick_tail; }
};

struct ComplementMassReport {
  double mc_estimate = 0.0;
  double se = 0.0;
  std::size_t n_sim = 0;
  ComplementTerms union_terms;   ///< the union-bound terms
  ComplementTerms exact_events;  ///< exact probability of each event alone
  /// The four bound terms with the Gaussian-base constants filled in:
  /// d H exp(-a^2 / (2 tau^2)), P(G >= sigma_floor^{-d}),
  /// P(G <= sigma_floor^{-d} (1+eps)^{-Md}), (e |alpha| log(1/eps) / H)^H.
  double shape_terms[4] = {0, 0, 0, 0};

  double lower_reference() const;
  double upper_reference() const { return union_terms.sum(); }
  /// Estimate within [largest single event - 3 se, union sum + 3 se].
  bool consistent() const;
};

/// Monte Carlo frequency of Q^c under the prior plus exact union-bound terms.
ComplementMassReport prior_complement_mass(const SieveSpec& spec, const DPPrior& prior, std::size_t n_sim,
                                           std::uint64_t seed);

struct Schedule {
  SieveSpec spec;
  double eps_tilde = 0.0;
  double eps_bar = 0.0;
};

/// Super-smooth schedule: eps = n^{-1/2} (log n)^{(d+1+s)/2},
/// H = ceil((log n)^{d+s}), M = n, a = sqrt(n), sigma_floor = n^{-1/d}.
Schedule schedule_supersmooth(std::uint64_t n, double s, int dim);
/// Holder schedule: eps = n^{-beta} (log n)^{q+s},
/// H = ceil(n^{1-2 beta} (log n)^{2(q+s)-1}), M, a, sigma_floor as above.
Schedule schedule_holder(std::uint64_t n, double beta, double q, double s, int dim);
/// beta = 2/(4+d), q = (4d+2)/(d+4).
Schedule schedule_ordinary_smooth(std::uint64_t n, double s, int dim);

}  // namespace dpmix
