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

#include "dpmix/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dpmix/error.hpp"

namespace dpmix {

std::size_t default_truncation(double alpha_mass) {
  if (!(alpha_mass > 0.0)) throw UsageError("default_truncation: alpha must be positive");
  const double t = std::ceil(std::log(1e-3) / std::log(alpha_mass / (1.0 + alpha_mass)));
  return static_cast<std::size_t>(std::clamp(t, 20.0, 500.0));
}

void FitConfig::validate() const {
  if (truncation == 1) throw UsageError("FitConfig: truncation must be at least 2");
  if (iterations < burn_in) throw UsageError("FitConfig: iterations must not be below burn-in");
  if (thin < 1) throw UsageError("FitConfig: thin must be at least 1");
  if (!(sigma_step > 0.0)) throw UsageError("FitConfig: sigma step must be positive");
  if (fixed_sigma && !(*fixed_sigma > 0.0)) throw UsageError("FitConfig: fixed sigma must be positive");
}

std::size_t FitConfig::resolved_truncation(double alpha_mass) const {
  return truncation ? truncation : default_truncation(alpha_mass);
}

std::vector<double> GibbsState::weights() const {
  std::vector<double> w(sticks.size());
  double remaining = 1.0;
  for (std::size_t h = 0; h < sticks.size(); ++h) {
    w[h] = sticks[h] * remaining;
    remaining *= 1.0 - sticks[h];
  }
  return w;
}

std::string GibbsState::dump() const {
  std::ostringstream ss;
  ss << "iteration " << iteration << "\nlog_joint " << format_double(log_joint) << "\nsigma " << format_double(sigma)
     << "\nsticks";
  for (double v : sticks) ss << ' ' << format_double(v);
  ss << "\natoms";
  for (double v : atoms) ss << ' ' << format_double(v);
  std::vector<std::size_t> counts(sticks.size(), 0);
  for (auto c : allocations)
    if (c < counts.size()) ++counts[c];
  ss << "\ncounts";
  for (auto c : counts) ss << ' ' << c;
  ss << '\n';
  return ss.str();
}

double sigma_log_target(double u, const SigmaStats& stats, const BandwidthPrior& prior) {
  const double sigma = std::exp(u);
  return prior.log_density_sigma(sigma) + u - stats.n_dims * u - 0.5 * stats.residual_ss * std::exp(-2.0 * u);
}

double metropolis_accept(double current, double proposed) {
  const double diff = proposed - current;
  if (std::isnan(diff)) return 0.0;
  return diff >= 0.0 ? 1.0 : std::exp(diff);
}

namespace {

constexpr double kStickCeiling = 1.0 - 0x1p-53;

double clamp_stick(double v) { return std::clamp(v, std::numeric_limits<double>::min(), kStickCeiling); }

}  // namespace

GibbsSampler::GibbsSampler(std::vector<Point> data, const DPPrior& prior, const FitConfig& config)
    : data_(std::move(data)), prior_(prior), config_(config), rng_(Rng::stream(config.seed, 0)),
      sigma_step_(config.sigma_step) {
  config_.validate();
  if (data_.empty()) throw UsageError("fit: data must be nonempty");
  const int d = prior_.dim();
  for (const auto& x : data_)
    if (x.dim() != d) throw UsageError("fit: data dimension differs from the prior");

  const std::size_t t = config_.resolved_truncation(prior_.alpha_mass());
  const std::size_t n = data_.size();
  state_.sticks.assign(t, 1.0 / (1.0 + prior_.alpha_mass()));
  state_.sticks.back() = 1.0;
  state_.atoms.resize(t * d);
  for (std::size_t h = 0; h < t; ++h) {
    std::span<double> z(state_.atoms.data() + h * d, d);
    if (h < n) {
      const auto& x = data_[(h * n) / std::min(t, n)];
      std::copy(x.coords().begin(), x.coords().end(), z.begin());
    } else {
      prior_.base.sample_into(rng_, z);
    }
  }
  if (config_.fixed_sigma) {
    state_.sigma = *config_.fixed_sigma;
  } else {
    double ss = 0.0, mean = 0.0;
    for (const auto& x : data_)
      for (double v : x.coords()) mean += v;
    mean /= static_cast<double>(n * d);
    for (const auto& x : data_)
      for (double v : x.coords()) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n * d));
    state_.sigma = sd > 1e-6 ? sd : 1.0;
  }
  state_.allocations.assign(n, 0);
  scratch_.resize(t);
  state_.log_joint = compute_log_joint();
}

void GibbsSampler::set_data(std::vector<Point> data) {
  if (data.size() != state_.allocations.size()) throw UsageError("GibbsSampler: data size cannot change");
  data_ = std::move(data);
}

void GibbsSampler::set_state(GibbsState state) {
  if (state.sticks.size() != state_.sticks.size() || state.allocations.size() != data_.size() ||
      state.atoms.size() != state_.atoms.size())
    throw UsageError("GibbsSampler: state shape mismatch");
  state_ = std::move(state);
  state_.log_joint = compute_log_joint();
}

void GibbsSampler::reset_acceptance() {
  accepted_ = 0;
  proposed_ = 0;
}

void GibbsSampler::sweep() {
  update_allocations();
  update_sticks();
  update_atoms();
  update_sigma();
  ++state_.iteration;
  state_.log_joint = compute_log_joint();
}

void GibbsSampler::update_allocations() {
  if (config_.single_cluster) {
    std::fill(state_.allocations.begin(), state_.allocations.end(), 0);
    return;
  }
  const std::size_t t = state_.truncation();
  const int d = prior_.dim();
  std::vector<double> log_pi(t);
  double log_rest = 0.0;
  for (std::size_t h = 0; h < t; ++h) {
    log_pi[h] = std::log(state_.sticks[h]) + log_rest;
    log_rest += std::log1p(-std::min(state_.sticks[h], kStickCeiling));
  }
  const double inv2s2 = 0.5 / (state_.sigma * state_.sigma);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto x = data_[i].coords();
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < t; ++h) {
      const std::span<const double> z(state_.atoms.data() + h * d, d);
      scratch_[h] = log_pi[h] - squared_distance(x, z) * inv2s2;
      top = std::max(top, scratch_[h]);
    }
    for (std::size_t h = 0; h < t; ++h) scratch_[h] = std::exp(scratch_[h] - top);
    state_.allocations[i] = rng_.categorical(scratch_);
  }
}

void GibbsSampler::update_sticks() {
  const std::size_t t = state_.truncation();
  std::vector<std::size_t> counts(t, 0);
  for (auto c : state_.allocations) ++counts[c];
  std::size_t beyond = data_.size();
  const double alpha = prior_.alpha_mass();
  for (std::size_t h = 0; h + 1 < t; ++h) {
    beyond -= counts[h];
    state_.sticks[h] = clamp_stick(rng_.beta(1.0 + static_cast<double>(counts[h]), alpha + static_cast<double>(beyond)));
  }
  state_.sticks[t - 1] = 1.0;
}

void GibbsSampler::update_atoms() {
  const std::size_t t = state_.truncation();
  const int d = prior_.dim();
  std::vector<double> sums(t * d, 0.0);
  std::vector<std::size_t> counts(t, 0);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto c = state_.allocations[i];
    ++counts[c];
    for (int k = 0; k < d; ++k) sums[c * d + k] += data_[i][k];
  }
  const double tau2 = prior_.base.tau() * prior_.base.tau();
  const double s2 = state_.sigma * state_.sigma;
  for (std::size_t h = 0; h < t; ++h) {
    std::span<double> z(state_.atoms.data() + h * d, d);
    if (counts[h] == 0) {
      prior_.base.sample_into(rng_, z);
      continue;
    }
    const double precision = 1.0 / tau2 + static_cast<double>(counts[h]) / s2;
    const double sd = 1.0 / std::sqrt(precision);
    for (int k = 0; k < d; ++k) z[k] = sums[h * d + k] / s2 / precision + sd * rng_.normal();
  }
}

void GibbsSampler::update_sigma() {
  if (config_.fixed_sigma) return;
  const int d = prior_.dim();
  SigmaStats stats{static_cast<double>(data_.size()) * d, 0.0};
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const std::span<const double> z(state_.atoms.data() + state_.allocations[i] * d, d);
    stats.residual_ss += squared_distance(data_[i].coords(), z);
  }
  const double u = std::log(state_.sigma);
  const double u_new = u + sigma_step_ * rng_.normal();
  const double a = metropolis_accept(sigma_log_target(u, stats, prior_.bandwidth),
                                     sigma_log_target(u_new, stats, prior_.bandwidth));
  ++proposed_;
  if (rng_.uniform() < a) {
    state_.sigma = std::exp(u_new);
    ++accepted_;
  }
}

double GibbsSampler::compute_log_joint() const {
  const std::size_t t = state_.truncation();
  const int d = prior_.dim();
  const double alpha = prior_.alpha_mass();
  double lj = complete_data_log_likelihood(data_, state_);
  std::vector<double> log_pi(t);
  double log_rest = 0.0;
  for (std::size_t h = 0; h < t; ++h) {
    log_pi[h] = std::log(state_.sticks[h]) + log_rest;
    log_rest += std::log1p(-std::min(state_.sticks[h], kStickCeiling));
  }
  for (auto c : state_.allocations) lj += log_pi[c];
  for (std::size_t h = 0; h + 1 < t; ++h) lj += std::log(alpha) + (alpha - 1.0) * std::log1p(-state_.sticks[h]);
  for (std::size_t h = 0; h < t; ++h)
    lj += std::log(prior_.base.density(std::span<const double>(state_.atoms.data() + h * d, d)));
  lj += prior_.bandwidth.log_density_sigma(state_.sigma);
  return lj;
}

MixtureDensity GibbsSampler::current_density() const {
  return MixtureDensity(DiscreteMeasure(prior_.dim(), state_.atoms, state_.weights()), state_.sigma);
}

PosteriorSampleSet fit(const std::vector<Point>& data, const DPPrior& prior, const FitConfig& config) {
  config.validate();
  GibbsSampler sampler(data, prior, config);
  PosteriorSampleSet out;
  out.truncation = sampler.state().truncation();
  constexpr std::size_t kWindow = 50;
  std::size_t window_acc = 0, window_prop = 0;
  std::size_t burn_acc = 0, burn_prop = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const std::size_t acc_before = sampler.sigma_accepted();
    const std::size_t prop_before = sampler.sigma_proposed();
    sampler.sweep();
    const double lj = sampler.state().log_joint;
    if (!std::isfinite(lj))
      throw FitAborted("fit: log joint is not finite at iteration " + std::to_string(it + 1),
                       sampler.state().dump());
    if (config.record_trace) out.log_joint_trace.push_back(lj);
    const std::size_t acc = sampler.sigma_accepted() - acc_before;
    const std::size_t prop = sampler.sigma_proposed() - prop_before;
    if (it < config.burn_in) {
      burn_acc += acc;
      burn_prop += prop;
      window_acc += acc;
      window_prop += prop;
      if (config.adapt_sigma_step && window_prop >= kWindow) {
        const double rate = static_cast<double>(window_acc) / static_cast<double>(window_prop);
        if (rate < 0.2) sampler.set_sigma_step(sampler.sigma_step() * 0.7);
        if (rate > 0.5) sampler.set_sigma_step(sampler.sigma_step() * 1.3);
        window_acc = window_prop = 0;
      }
      if (it + 1 == config.burn_in) sampler.reset_acceptance();
      continue;
    }
    if ((it - config.burn_in + 1) % config.thin == 0) out.draws.push_back(sampler.current_density());
  }
  if (config.burn_in == 0) {
    burn_acc = 0;
    burn_prop = 0;
  }
  out.burn_in_acceptance = burn_prop ? static_cast<double>(burn_acc) / static_cast<double>(burn_prop) : 0.0;
  out.acceptance = sampler.sigma_proposed() && config.iterations > config.burn_in
                       ? static_cast<double>(sampler.sigma_accepted()) / static_cast<double>(sampler.sigma_proposed())
                       : 0.0;
  out.final_sigma_step = sampler.sigma_step();
  return out;
}

DensityFunction predictive_density(const PosteriorSampleSet& samples) {
  if (samples.draws.empty()) throw UsageError("predictive_density: no retained draws");
  Box support;
  double mass = 0.0;
  for (std::size_t j = 0; j < samples.draws.size(); ++j) {
    Box b;
    samples.draws[j].bounding_box(8.0, b.lo, b.hi);
    support = j == 0 ? b : support.united(b);
    mass += samples.draws[j].mixing().total_weight();
  }
  const double inv = 1.0 / static_cast<double>(samples.draws.size());
  return DensityFunction{[draws = samples.draws, inv](std::span<const double> x) {
                           double s = 0.0;
                           for (const auto& m : draws) s += m.pdf(x);
                           return s * inv;
                         },
                         std::move(support), mass * inv};
}

PredictiveTable posterior_predictive(const PosteriorSampleSet& samples, const std::vector<Point>& grid) {
  const DensityFunction f = predictive_density(samples);
  PredictiveTable t{grid, std::vector<double>(grid.size())};
  for (std::size_t i = 0; i < grid.size(); ++i) t.values[i] = f.eval(grid[i].coords());
  return t;
}

double complete_data_log_likelihood(const std::vector<Point>& data, const GibbsState& state) {
  if (data.size() != state.allocations.size()) throw UsageError("log likelihood: allocation count mismatch");
  const std::size_t d = state.atoms.size() / state.sticks.size();
  const IsotropicGaussianKernel k(state.sigma, static_cast<int>(d));
  double ll = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    ll += k.log_eval(data[i].coords(), std::span<const double>(state.atoms.data() + state.allocations[i] * d, d));
  return ll;
}

double mixture_log_likelihood(const std::vector<Point>& data, const MixtureDensity& mix) {
  const auto& m = mix.mixing();
  std::vector<double> terms(m.size());
  double ll = 0.0;
  for (const auto& x : data) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < m.size(); ++h) {
      terms[h] = m.weight(h) > 0.0 ? std::log(m.weight(h)) + mix.kernel().log_eval(x.coords(), m.location(h))
                                   : -std::numeric_limits<double>::infinity();
      top = std::max(top, terms[h]);
    }
    double s = 0.0;
    for (double v : terms) s += std::exp(v - top);
    ll += top + std::log(s);
  }
  return ll;
}

GibbsState permute_components(const GibbsState& state, const std::vector<std::size_t>& perm) {
  const std::size_t t = state.truncation();
  if (perm.size() != t) throw UsageError("permute_components: permutation has wrong length");
  std::vector<char> seen(t, 0);
  for (auto p : perm) {
    if (p >= t || seen[p]) throw UsageError("permute_components: not a permutation");
    seen[p] = 1;
  }
  const std::size_t d = state.atoms.size() / t;
  const auto w = state.weights();
  GibbsState out = state;
  std::vector<double> new_w(t);
  for (std::size_t h = 0; h < t; ++h) {
    new_w[perm[h]] = w[h];
    std::copy_n(state.atoms.begin() + static_cast<std::ptrdiff_t>(h * d), d,
                out.atoms.begin() + static_cast<std::ptrdiff_t>(perm[h] * d));
  }
  double remaining = 1.0;
  for (std::size_t h = 0; h < t; ++h) {
    out.sticks[h] = h + 1 == t ? 1.0 : (remaining > 0.0 ? std::min(1.0, new_w[h] / remaining) : 0.0);
    remaining -= new_w[h];
  }
  for (auto& c : out.allocations) c = perm[c];
  return out;
}

ReproductionReport prior_reproduction_check(const DPPrior& prior, const ReproductionConfig& cfg) {
  if (cfg.observations < 1 || cfg.truncation < 2 || cfg.batches < 2 || cfg.iterations < 10 * cfg.batches)
    throw UsageError("prior_reproduction_check: invalid configuration");
  const int d = prior.dim();
  Rng init = Rng::stream(cfg.seed, 1);

  GibbsState s;
  s.sticks.resize(cfg.truncation);
  for (std::size_t h = 0; h + 1 < cfg.truncation; ++h) s.sticks[h] = clamp_stick(init.beta(1.0, prior.alpha_mass()));
  s.sticks.back() = 1.0;
  s.atoms.resize(cfg.truncation * d);
  for (std::size_t h = 0; h < cfg.truncation; ++h)
    prior.base.sample_into(init, std::span<double>(s.atoms.data() + h * d, d));
  s.sigma = draw_sigma(prior, init);
  const auto w = s.weights();
  std::vector<Point> data;
  s.allocations.resize(cfg.observations);
  for (std::size_t i = 0; i < cfg.observations; ++i) {
    s.allocations[i] = init.categorical(w);
    std::vector<double> x(d);
    for (int k = 0; k < d; ++k) x[k] = s.atoms[s.allocations[i] * d + k] + s.sigma * init.normal();
    data.emplace_back(std::move(x));
  }

  FitConfig fc;
  fc.truncation = cfg.truncation;
  fc.iterations = cfg.iterations;
  fc.burn_in = 0;
  fc.sigma_step = cfg.sigma_step;
  fc.adapt_sigma_step = false;
  fc.seed = cfg.seed;
  GibbsSampler sampler(data, prior, fc);
  sampler.set_state(s);

  const double a = prior.bandwidth.shape;
  const double b = prior.bandwidth.rate;
  const double tau = prior.base.tau();
  std::vector<std::vector<double>> series(5, std::vector<double>(cfg.iterations));
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    sampler.sweep();
    const GibbsState& st = sampler.state();
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::vector<double> x(d);
      for (int k = 0; k < d; ++k) x[k] = st.atoms[st.allocations[i] * d + k] + st.sigma * sampler.rng().normal();
      data[i] = Point(std::move(x));
    }
    sampler.set_data(data);
    const double g = std::pow(st.sigma, -d);
    series[0][it] = g;
    series[1][it] = (g - a / b) * (g - a / b);
    series[2][it] = st.sticks[0];
    series[3][it] = st.atoms[0];
    series[4][it] = st.atoms[0] * st.atoms[0];
  }
  const char* names[5] = {"precision_mean", "precision_variance", "first_stick_mean", "atom_mean", "atom_second_moment"};
  const double expected[5] = {a / b, a / (b * b), 1.0 / (1.0 + prior.alpha_mass()), 0.0, tau * tau};

  ReproductionReport rep;
  rep.iterations = cfg.iterations;
  const std::size_t per = cfg.iterations / cfg.batches;
  for (int m = 0; m < 5; ++m) {
    std::vector<double> means(cfg.batches);
    for (std::size_t bch = 0; bch < cfg.batches; ++bch) {
      double acc = 0.0;
      for (std::size_t j = bch * per; j < (bch + 1) * per; ++j) acc += series[m][j];
      means[bch] = acc / static_cast<double>(per);
    }
    const double mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(cfg.batches);
    double var = 0.0;
    for (double v : means) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cfg.batches - 1);
    MomentCheck mc{names[m], mean, std::sqrt(var / static_cast<double>(cfg.batches)), expected[m]};
    rep.max_abs_z = std::max(rep.max_abs_z, std::abs(mc.z()));
    rep.moments.push_back(mc);
  }
  rep.failed = rep.max_abs_z > 5.0;
  return rep;
}

DetailedBalanceReport detailed_balance_check(const SigmaStats& stats, const BandwidthPrior& prior, double u1,
                                             double u2) {
  const double l1 = sigma_log_target(u1, stats, prior);
  const double l2 = sigma_log_target(u2, stats, prior);
  const double top = std::max(l1, l2);
  const double z = std::exp(l1 - top) + std::exp(l2 - top);
  const double pi1 = std::exp(l1 - top) / z;
  const double pi2 = std::exp(l2 - top) / z;
  // The proposal always offers the other state.
  const double p12 = metropolis_accept(l1, l2);
  const double p21 = metropolis_accept(l2, l1);
  const double p11 = 1.0 - p12;
  const double p22 = 1.0 - p21;
  DetailedBalanceReport r;
  r.flow_forward = pi1 * p12;
  r.flow_backward = pi2 * p21;
  r.imbalance = std::abs(r.flow_forward - r.flow_backward);
  r.row_sum_error = std::max(std::abs(p11 + p12 - 1.0), std::abs(p21 + p22 - 1.0));
  return r;
}

}  // namespace dpmix
