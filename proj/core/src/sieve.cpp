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

#include "dpmix/sieve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "dpmix/error.hpp"
#include "dpmix/parallel.hpp"

namespace dpmix {

void SieveSpec::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw UsageError("SieveSpec: eps must be positive");
  if (!(box_half_width > 0.0)) throw UsageError("SieveSpec: box half-width must be positive");
  if (!(sigma_floor > 0.0)) throw UsageError("SieveSpec: sigma floor must be positive");
  if (sigma_steps < 1) throw UsageError("SieveSpec: M must be at least 1");
  if (active_atoms < 1) throw UsageError("SieveSpec: H must be at least 1");
  if (dim < 1) throw UsageError("SieveSpec: dimension must be at least 1");
  if (!std::isfinite(log_sigma_ceiling())) throw UsageError("SieveSpec: bandwidth ceiling not representable");
}

double SieveSpec::log_sigma_ceiling() const {
  return std::log(sigma_floor) + static_cast<double>(sigma_steps) * std::log1p(eps);
}

// ---------------------------------------------------------------------------
// Location grid

LocationGrid::LocationGrid(double half_width, double radius, int dim)
    : half_width_(half_width), radius_(radius), dim_(dim) {
  if (!(half_width > 0.0) || !(radius > 0.0)) throw UsageError("location net: a and radius must be positive");
  if (dim < 1) throw UsageError("location net: dimension must be at least 1");
  step_ = 2.0 * radius / std::sqrt(static_cast<double>(dim));
  const double cells = std::ceil(2.0 * half_width / step_ * (1.0 - 1e-12));
  if (cells > 9e15) throw ResourceError("location net: too many points per axis");
  per_axis_ = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(cells));
  start_ = -0.5 * static_cast<double>(per_axis_) * step_ + 0.5 * step_;
}

double LocationGrid::size() const { return std::pow(static_cast<double>(per_axis_), dim_); }

double LocationGrid::log_size() const { return dim_ * std::log(static_cast<double>(per_axis_)); }

Point LocationGrid::point(std::uint64_t index) const {
  std::vector<double> x(dim_);
  for (int i = dim_ - 1; i >= 0; --i) {
    x[i] = start_ + static_cast<double>(index % per_axis_) * step_;
    index /= per_axis_;
  }
  return Point(std::move(x));
}

std::uint64_t LocationGrid::nearest(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw UsageError("location net: dimension mismatch");
  if (size() > 1.8e19) throw ResourceError("location net: index space exceeds 64 bits");
  std::uint64_t index = 0;
  for (int i = 0; i < dim_; ++i) {
    // ceil(t - 1/2) rounds to nearest and sends exact midpoints down.
    const double t = std::ceil((x[i] - start_) / step_ - 0.5);
    const double k = std::clamp(t, 0.0, static_cast<double>(per_axis_ - 1));
    index = index * per_axis_ + static_cast<std::uint64_t>(k);
  }
  return index;
}

std::vector<Point> build_location_net(double half_width, double radius, int dim) {
  const LocationGrid grid(half_width, radius, dim);
  if (grid.size() > kMaxNetSize) throw ResourceError("build_location_net: more than 1e8 points");
  const auto n = static_cast<std::uint64_t>(grid.size());
  std::vector<Point> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(grid.point(i));
  return out;
}

// ---------------------------------------------------------------------------
// Simplex net

namespace {

__extension__ typedef unsigned __int128 u128;

// Number of compositions of n into `parts` nonnegative parts, C(n+parts-1, parts-1).
std::uint64_t compositions(std::uint64_t n, std::uint64_t parts) {
  if (parts == 0) return n == 0 ? 1 : 0;
  const std::uint64_t r = std::min(parts - 1, n);
  u128 c = 1;
  for (std::uint64_t i = 1; i <= r; ++i) {
    c = c * (n + parts - 1 - r + i) / i;
    if (c > std::numeric_limits<std::uint64_t>::max()) throw ResourceError("simplex net: count exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(c);
}

double log_compositions(double n, double parts) {
  return std::lgamma(n + parts) - std::lgamma(n + 1.0) - std::lgamma(parts);
}

}  // namespace

SimplexNet::SimplexNet(std::uint64_t parts, double eps) : parts_(parts) {
  if (parts < 1) throw UsageError("simplex net: H must be at least 1");
  if (!(eps > 0.0 && eps < 1.0)) throw UsageError("simplex net: eps must lie in (0, 1)");
  const double k = std::ceil(static_cast<double>(parts) / eps * (1.0 - 1e-12));
  if (k > 9e15) throw ResourceError("simplex net: resolution too large");
  k_ = static_cast<std::uint64_t>(k);
}

double SimplexNet::size() const {
  const double s = std::exp(log_size());
  return s < 1e12 ? std::round(s) : s;
}

double SimplexNet::log_size() const {
  return log_compositions(static_cast<double>(k_), static_cast<double>(parts_));
}

std::vector<std::vector<double>> SimplexNet::enumerate() const {
  if (size() > kMaxNetSize * (1 + 1e-9)) throw ResourceError("simplex net: more than 1e8 points");
  std::vector<std::vector<double>> out;
  out.reserve(compositions(k_, parts_));
  std::vector<std::uint64_t> c(parts_, 0);
  const double k = static_cast<double>(k_);
  // Iterative odometer over compositions in lexicographic order.
  auto emit = [&] {
    std::vector<double> w(parts_);
    for (std::size_t i = 0; i < parts_; ++i) w[i] = static_cast<double>(c[i]) / k;
    out.push_back(std::move(w));
  };
  c[parts_ - 1] = k_;
  for (;;) {
    emit();
    std::size_t r = parts_ - 1;
    while (r > 0 && c[r] == 0) --r;
    if (r == 0) break;
    const std::uint64_t t = c[r];
    c[r] = 0;
    ++c[r - 1];
    c[parts_ - 1] = t - 1;
  }
  return out;
}

std::vector<std::uint64_t> SimplexNet::round_to_lattice(std::span<const double> weights) const {
  if (weights.size() != parts_) throw UsageError("simplex net: weight vector has wrong length");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw UsageError("simplex net: weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw UsageError("simplex net: weights must have positive sum");
  std::vector<std::uint64_t> c(parts_);
  std::vector<double> frac(parts_);
  std::uint64_t used = 0;
  for (std::size_t i = 0; i < parts_; ++i) {
    const double y = weights[i] / total * static_cast<double>(k_);
    const double f = std::floor(y);
    c[i] = static_cast<std::uint64_t>(f);
    frac[i] = y - f;
    used += c[i];
  }
  while (used > k_) {  // rounding noise only
    auto it = std::max_element(c.begin(), c.end());
    --*it;
    --used;
  }
  std::vector<std::size_t> order(parts_);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; used < k_; ++r, ++used) ++c[order[r % parts_]];
  return c;
}

std::uint64_t SimplexNet::rank(const std::vector<std::uint64_t>& c) const {
  std::uint64_t idx = 0;
  std::uint64_t remaining = k_;
  for (std::size_t i = 0; i + 1 < parts_; ++i) {
    for (std::uint64_t v = 0; v < c[i]; ++v) idx += compositions(remaining - v, parts_ - i - 1);
    remaining -= c[i];
  }
  return idx;
}

std::uint64_t SimplexNet::nearest(std::span<const double> weights) const { return rank(round_to_lattice(weights)); }

std::vector<double> SimplexNet::point(std::uint64_t index) const {
  std::vector<double> w(parts_);
  std::uint64_t remaining = k_;
  for (std::size_t i = 0; i + 1 < parts_; ++i) {
    std::uint64_t v = 0;
    for (;; ++v) {
      const std::uint64_t block = compositions(remaining - v, parts_ - i - 1);
      if (index < block) break;
      index -= block;
    }
    w[i] = static_cast<double>(v) / static_cast<double>(k_);
    remaining -= v;
  }
  w[parts_ - 1] = static_cast<double>(remaining) / static_cast<double>(k_);
  return w;
}

std::vector<std::vector<double>> build_simplex_net(std::uint64_t parts, double eps) {
  return SimplexNet(parts, eps).enumerate();
}

// ---------------------------------------------------------------------------
// Bandwidth grid

namespace {
double sigma_grid_value(const SieveSpec& spec, std::uint64_t m) {
  return spec.sigma_floor * std::pow(1.0 + spec.eps, static_cast<double>(m));
}
}  // namespace

std::vector<double> build_sigma_grid(const SieveSpec& spec) {
  spec.validate();
  if (static_cast<double>(spec.sigma_steps) > kMaxNetSize) throw ResourceError("sigma grid: more than 1e8 values");
  std::vector<double> grid(spec.sigma_steps);
  for (std::uint64_t m = 1; m <= spec.sigma_steps; ++m) grid[m - 1] = sigma_grid_value(spec, m);
  return grid;
}

std::uint64_t bracket_sigma(const SieveSpec& spec, double sigma) {
  const double lr = std::log(sigma / spec.sigma_floor) / std::log1p(spec.eps);
  auto m = static_cast<std::uint64_t>(std::clamp(std::ceil(lr), 1.0, static_cast<double>(spec.sigma_steps)));
  while (m > 1 && sigma_grid_value(spec, m - 1) >= sigma) --m;
  while (m < spec.sigma_steps && sigma_grid_value(spec, m) < sigma) ++m;
  return m - 1;
}

// ---------------------------------------------------------------------------
// Net assembly

double SieveNet::log_size() const {
  return static_cast<double>(spec.active_atoms) * locations.log_size() + weights.log_size() +
         std::log(static_cast<double>(spec.sigma_steps));
}

SieveNet build_sieve_net(const SieveSpec& spec) {
  spec.validate();
  return SieveNet{spec, LocationGrid(spec.box_half_width, spec.sigma_floor * spec.eps, spec.dim),
                  SimplexNet(spec.active_atoms, spec.eps), build_sigma_grid(spec)};
}

Membership sieve_membership(const MixtureDensity& p, const SieveSpec& spec) {
  spec.validate();
  if (p.dim() != spec.dim) throw UsageError("sieve_membership: dimension mismatch");
  const auto& m = p.mixing();
  const std::size_t active = std::min<std::size_t>(m.size(), spec.active_atoms);
  for (std::size_t h = 0; h < active; ++h)
    for (double c : m.location(h))
      if (std::abs(c) > spec.box_half_width) return Membership::kNonMember;
  const double sigma = p.sigma();
  if (!(sigma > spec.sigma_floor) || !(std::log(sigma) < spec.log_sigma_ceiling())) return Membership::kNonMember;
  double known_tail = 0.0;
  for (std::size_t h = active; h < m.size(); ++h) known_tail += m.weight(h);
  if (known_tail >= spec.eps) return Membership::kNonMember;
  if (known_tail + p.deficit() < spec.eps) return Membership::kMember;
  return Membership::kIndeterminate;
}

MixtureDensity realize(const SieveNet& net, const NetPoint& point) {
  const int d = net.spec.dim;
  std::vector<double> locs;
  locs.reserve(point.atom_indices.size() * d);
  for (auto idx : point.atom_indices) {
    const Point z = net.locations.point(idx);
    locs.insert(locs.end(), z.coords().begin(), z.coords().end());
  }
  std::vector<double> w = net.weights.point(point.weight_index);
  if (point.sigma_index >= net.sigmas.size()) throw UsageError("realize: sigma index out of range");
  return MixtureDensity(DiscreteMeasure(d, std::move(locs), std::move(w)), net.sigmas[point.sigma_index]);
}

Projection project_to_net(const MixtureDensity& p, const SieveNet& net) {
  const SieveSpec& spec = net.spec;
  if (sieve_membership(p, spec) != Membership::kMember) throw UsageError("project_to_net: density is not in the sieve");
  const auto& m = p.mixing();
  const std::size_t h_active = spec.active_atoms;
  const std::size_t present = std::min<std::size_t>(m.size(), h_active);

  double tail = p.deficit();
  for (std::size_t h = present; h < m.size(); ++h) tail += m.weight(h);

  NetPoint point;
  point.atom_indices.resize(h_active, 0);
  std::vector<double> renormalized(h_active, 0.0);
  const Point origin(std::vector<double>(spec.dim, 0.0));
  for (std::size_t h = 0; h < h_active; ++h) {
    if (h < present) {
      point.atom_indices[h] = net.locations.nearest(m.location(h));
      renormalized[h] = m.weight(h) / (1.0 - tail);
    } else {
      point.atom_indices[h] = net.locations.nearest(origin.coords());
    }
  }
  point.weight_index = net.weights.nearest(renormalized);
  point.sigma_index = bracket_sigma(spec, p.sigma());

  MixtureDensity realized = realize(net, point);
  const double sigma_star = realized.sigma();

  Projection out{point, realized, 0.0, 0.0, 0.0, {}};
  const auto l1 = l1_distance(as_density(p), as_density(realized));
  out.measured_l1 = l1.value;
  out.quadrature_error = l1.error;
  out.certified_l1 = l1.value + l1.error + p.deficit();

  const MixtureDensity rescaled(m, sigma_star);
  out.terms.sigma_term = l1_distance(as_density(p), as_density(rescaled)).value;
  out.terms.tail_term = tail;
  const auto& w_star = realized.mixing();
  for (std::size_t h = 0; h < present; ++h) {
    const double delta = std::sqrt(squared_distance(m.location(h), w_star.location(h)));
    out.terms.location_term += m.weight(h) * 2.0 * std::erf(delta / (2.0 * std::numbers::sqrt2 * sigma_star));
  }
  for (std::size_t h = 0; h < h_active; ++h)
    out.terms.weight_term += std::abs((h < present ? m.weight(h) : 0.0) - w_star.weight(h));

  if (out.certified_l1 > 5.0 * spec.eps)
    throw InvariantViolation("project_to_net: certified L1 distance " + format_double(out.certified_l1) +
                             " exceeds 5 eps = " + format_double(5.0 * spec.eps));
  return out;
}

double log_covering_bound(const SieveSpec& spec) {
  spec.validate();
  const double h = static_cast<double>(spec.active_atoms);
  return spec.dim * h * std::log(spec.box_half_width / (spec.sigma_floor * spec.eps)) + h * std::log(1.0 / spec.eps) +
         std::log(static_cast<double>(spec.sigma_steps));
}

// ---------------------------------------------------------------------------
// Prior mass of the complement

double ComplementMassReport::lower_reference() const {
  return std::max({exact_events.atoms_outside, exact_events.sigma_outside, exact_events.stick_tail});
}

bool ComplementMassReport::consistent() const {
  // A zero count still carries a resolution of 1/n.
  const double tol = 3.0 * std::max(se, 1.0 / static_cast<double>(n_sim));
  return mc_estimate >= lower_reference() - tol && mc_estimate <= upper_reference() + tol;
}

ComplementMassReport prior_complement_mass(const SieveSpec& spec, const DPPrior& prior, std::size_t n_sim,
                                           std::uint64_t seed) {
  spec.validate();
  if (prior.dim() != spec.dim) throw UsageError("prior_complement_mass: dimension mismatch");
  if (n_sim < 1000) throw UsageError("prior_complement_mass: need at least 1000 simulations");

  const std::size_t h_active = spec.active_atoms;
  const double a = spec.box_half_width;
  const double alpha = prior.alpha_mass();
  const double log_eps = std::log(spec.eps);
  const double log_ceiling = spec.log_sigma_ceiling();
  const int d = spec.dim;

  constexpr std::size_t kChunk = 1024;
  const std::size_t chunks = (n_sim + kChunk - 1) / kChunk;
  std::vector<std::size_t> hits(chunks, 0);
  parallel_for(chunks, [&](std::size_t begin, std::size_t end) {
    std::vector<double> z(d);
    for (std::size_t c = begin; c < end; ++c) {
      Rng rng = Rng::stream(seed, c);
      const std::size_t stop = std::min(n_sim, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < stop; ++i) {
        double log_remaining = 0.0;
        for (std::size_t h = 0; h < h_active; ++h) log_remaining += std::log(rng.uniform()) / alpha;
        bool outside = false;
        for (std::size_t h = 0; h < h_active; ++h) {
          prior.base.sample_into(rng, z);
          for (double v : z) outside = outside || std::abs(v) > a;
        }
        const double sigma = draw_sigma(prior, rng);
        const double ls = std::log(sigma);
        const bool sigma_out = !(sigma > spec.sigma_floor) || !(ls < log_ceiling);
        const bool tail_out = log_remaining >= log_eps;
        if (outside || sigma_out || tail_out) ++hits[c];
      }
    }
  });

  ComplementMassReport r;
  r.n_sim = n_sim;
  const double total = static_cast<double>(std::accumulate(hits.begin(), hits.end(), std::size_t{0}));
  r.mc_estimate = total / static_cast<double>(n_sim);
  r.se = std::sqrt(r.mc_estimate * (1.0 - r.mc_estimate) / static_cast<double>(n_sim));

  const double box_out = prior.base.mass_of_box(a).outside;
  const double hh = static_cast<double>(h_active);
  const double below = prior.bandwidth.prob_sigma_below(spec.sigma_floor);
  const double g_ceiling_log = -d * log_ceiling;  // log of ceiling^{-d}
  const double above = g_ceiling_log < -700.0 ? 0.0 : prior.bandwidth.precision_cdf(std::exp(g_ceiling_log));
  const double tail = spec.eps < 1.0 ? stick_tail_prob(h_active, spec.eps, alpha) : 0.0;

  r.union_terms = {hh * box_out, below + above, tail};
  r.exact_events = {-std::expm1(hh * std::log1p(-box_out)), below + above, tail};
  const double tau = prior.base.tau();
  r.shape_terms[0] = d * hh * std::exp(-a * a / (2.0 * tau * tau));
  r.shape_terms[1] = below;
  r.shape_terms[2] = above;
  r.shape_terms[3] = spec.eps < 1.0 ? stick_tail_stirling_bound(h_active, spec.eps, alpha) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Rate schedules

namespace {

Schedule finish_schedule(std::uint64_t n, int dim, double eps_bar, double eps_tilde, double h_real) {
  if (!(h_real < 9e18)) throw UsageError("schedule: H overflows");
  Schedule s;
  s.eps_bar = eps_bar;
  s.eps_tilde = eps_tilde;
  s.spec.eps = eps_bar;
  s.spec.active_atoms = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(h_real)));
  s.spec.sigma_steps = n;
  s.spec.box_half_width = std::sqrt(static_cast<double>(n));
  s.spec.sigma_floor = std::pow(static_cast<double>(n), -1.0 / dim);
  s.spec.dim = dim;
  return s;
}

}  // namespace

Schedule schedule_supersmooth(std::uint64_t n, double s, int dim) {
  if (n < 3) throw UsageError("schedule_supersmooth: n must be at least 3");
  if (!(s > 0.0)) throw UsageError("schedule_supersmooth: s must be positive");
  if (dim < 1) throw UsageError("schedule_supersmooth: dimension must be at least 1");
  const double nn = static_cast<double>(n);
  const double ln = std::log(nn);
  const double eps_bar = std::pow(nn, -0.5) * std::pow(ln, (dim + 1.0 + s) / 2.0);
  const double eps_tilde = std::pow(nn, -0.5) * std::pow(ln, (dim + 1.0) / 2.0);
  return finish_schedule(n, dim, eps_bar, eps_tilde, std::pow(ln, dim + s));
}

Schedule schedule_holder(std::uint64_t n, double beta, double q, double s, int dim) {
  if (n < 3) throw UsageError("schedule_holder: n must be at least 3");
  if (!(beta > 0.0 && beta < 0.5)) throw UsageError("schedule_holder: beta must lie in (0, 1/2)");
  if (!(q >= 0.0)) throw UsageError("schedule_holder: q must be nonnegative");
  if (!(s > 0.0)) throw UsageError("schedule_holder: s must be positive");
  if (dim < 1) throw UsageError("schedule_holder: dimension must be at least 1");
  const double nn = static_cast<double>(n);
  const double ln = std::log(nn);
  const double eps_bar = std::pow(nn, -beta) * std::pow(ln, q + s);
  const double eps_tilde = std::pow(nn, -beta) * std::pow(ln, q);
  return finish_schedule(n, dim, eps_bar, eps_tilde, std::pow(nn, 1.0 - 2.0 * beta) * std::pow(ln, 2.0 * (q + s) - 1.0));
}

Schedule schedule_ordinary_smooth(std::uint64_t n, double s, int dim) {
  return schedule_holder(n, 2.0 / (4.0 + dim), (4.0 * dim + 2.0) / (dim + 4.0), s, dim);
}

}  // namespace dpmix
