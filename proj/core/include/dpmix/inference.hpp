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
#include <optional>
#include <string>
#include <vector>

#include "dpmix/density.hpp"
#include "dpmix/metrics.hpp"
#include "dpmix/prior.hpp"

namespace dpmix {

/// ceil(log(1e-3) / log(|alpha| / (1 + |alpha|))) clamped to [20, 500].
std::size_t default_truncation(double alpha_mass);

struct FitConfig {
  std::size_t truncation = 0;  ///< T; 0 selects default_truncation
  std::size_t iterations = 2000;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  double sigma_step = 0.2;  ///< initial random-walk scale on log sigma
  bool adapt_sigma_step = true;
  std::uint64_t seed = 1;
  /// Holds sigma at this value instead of updating it.
  std::optional<double> fixed_sigma;
  /// Keeps every observation on the first component.
  bool single_cluster = false;
  /// Keeps the per-iteration log joint in the sample set.
  bool record_trace = true;

  void validate() const;
  std::size_t resolved_truncation(double alpha_mass) const;
};

/// Full state of the blocked Gibbs sampler.
struct GibbsState {
  std::vector<std::size_t> allocations;  ///< 0-based component per observation
  std::vector<double> sticks;            ///< V_1..V_T, with V_T = 1
  std::vector<double> atoms;             ///< T x d, row-major
  double sigma = 1.0;
  std::size_t iteration = 0;
  double log_joint = 0.0;

  std::size_t truncation() const { return sticks.size(); }
  std::vector<double> weights() const;
  /// Readable snapshot used in abort reports.
  std::string dump() const;
};

struct PosteriorSampleSet {
  std::vector<MixtureDensity> draws;
  std::vector<double> log_joint_trace;
  double burn_in_acceptance = 0.0;  ///< sigma acceptance rate during burn-in
  double acceptance = 0.0;          ///< sigma acceptance rate after burn-in
  double final_sigma_step = 0.0;
  std::size_t truncation = 0;
};

/// Sufficient statistics of the sigma update: n d and the sum of squared
/// residuals to the allocated atoms.
struct SigmaStats {
  double n_dims = 0.0;
  double residual_ss = 0.0;
};

/// Log target of the random-walk step in u = log sigma: the bandwidth prior
/// density of sigma, the Jacobian e^u and the Gaussian likelihood.
double sigma_log_target(double log_sigma, const SigmaStats& stats, const BandwidthPrior& prior);

/// Metropolis acceptance probability min(1, exp(proposed - current)).
double metropolis_accept(double log_target_current, double log_target_proposed);

/// Blocked Gibbs sampler for the truncated model. One `sweep` updates the
/// allocations, sticks, atoms and sigma in that order.
class GibbsSampler {
 public:
  GibbsSampler(std::vector<Point> data, const DPPrior& prior, const FitConfig& config);

  void sweep();
  const GibbsState& state() const { return state_; }
  const std::vector<Point>& data() const { return data_; }
  void set_data(std::vector<Point> data);
  void set_state(GibbsState state);
  void set_sigma_step(double step) { sigma_step_ = step; }
  double sigma_step() const { return sigma_step_; }
  std::size_t sigma_accepted() const { return accepted_; }
  std::size_t sigma_proposed() const { return proposed_; }
  void reset_acceptance();
  Rng& rng() { return rng_; }

  /// Current state as a mixture density.
  MixtureDensity current_density() const;
  double compute_log_joint() const;

 private:
  void update_allocations();
  void update_sticks();
  void update_atoms();
  void update_sigma();

  std::vector<Point> data_;
  DPPrior prior_;
  FitConfig config_;
  GibbsState state_;
  Rng rng_;
  double sigma_step_;
  std::size_t accepted_ = 0;
  std::size_t proposed_ = 0;
  std::vector<double> scratch_;
};

/// Runs the sampler and keeps every `thin`-th draw after burn-in. Throws
/// FitAborted with a state dump if the log joint stops being finite.
PosteriorSampleSet fit(const std::vector<Point>& data, const DPPrior& prior, const FitConfig& config);

/// Pointwise average of the retained draws' densities.
DensityFunction predictive_density(const PosteriorSampleSet& samples);

struct PredictiveTable {
  std::vector<Point> grid;
  std::vector<double> values;
};

/// predictive_density tabulated on `grid`.
PredictiveTable posterior_predictive(const PosteriorSampleSet& samples, const std::vector<Point>& grid);

/// sum_i log phi_sigma(x_i - Z_{c_i}).
double complete_data_log_likelihood(const std::vector<Point>& data, const GibbsState& state);
/// sum_i log sum_h pi_h phi_sigma(x_i - Z_h).
double mixture_log_likelihood(const std::vector<Point>& data, const MixtureDensity& mix);
/// Relabels components: component h moves to position perm[h]. Sticks are
/// recomputed so that the weights follow their atoms.
GibbsState permute_components(const GibbsState& state, const std::vector<std::size_t>& perm);

struct MomentCheck {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;        ///< batch-means standard error
  double expected = 0.0;
  double z() const { return se > 0.0 ? (estimate - expected) / se : 0.0; }
};

struct ReproductionReport {
  std::vector<MomentCheck> moments;
  std::size_t iterations = 0;
  double max_abs_z = 0.0;
  bool failed = false;  ///< some |z| > 5
};

struct ReproductionConfig {
  std::size_t observations = 5;
  std::size_t truncation = 5;
  std::size_t iterations = 40000;
  std::size_t batches = 50;
  double sigma_step = 0.5;
  std::uint64_t seed = 1;
};

/// Successive-conditional simulation: alternates one sweep given the data
/// with a fresh draw of the data given the parameters, starting from a
/// prior draw. The parameter marginals must then follow the prior.
ReproductionReport prior_reproduction_check(const DPPrior& prior, const ReproductionConfig& config);

struct DetailedBalanceReport {
  double flow_forward = 0.0;   ///< pi(u1) P(u1 -> u2)
  double flow_backward = 0.0;  ///< pi(u2) P(u2 -> u1)
  double imbalance = 0.0;
  double row_sum_error = 0.0;
};

/// Exact two-state transition matrix of the sigma step restricted to
/// {u1, u2} under its own log target and acceptance rule.
DetailedBalanceReport detailed_balance_check(const SigmaStats& stats, const BandwidthPrior& prior, double u1,
                                             double u2);

}  // namespace dpmix
