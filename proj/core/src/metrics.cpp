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

#include "dpmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dpmix/error.hpp"
#include "dpmix/parallel.hpp"

namespace dpmix {

double Box::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
  return v;
}

Box Box::united(const Box& other) const {
  if (other.dim() != dim()) throw UsageError("Box::united: dimension mismatch");
  Box out = *this;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    out.lo[i] = std::min(lo[i], other.lo[i]);
    out.hi[i] = std::max(hi[i], other.hi[i]);
  }
  return out;
}

Box Box::padded(double r) const {
  Box out = *this;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    out.lo[i] -= r;
    out.hi[i] += r;
  }
  return out;
}

Box Box::cube(int dim, double half_width) {
  return Box{std::vector<double>(dim, -half_width), std::vector<double>(dim, half_width)};
}

DensityFunction as_density(const MixtureDensity& mix) {
  Box box;
  mix.bounding_box(8.0, box.lo, box.hi);
  return DensityFunction{[mix](std::span<const double> x) { return mix.pdf(x); }, std::move(box),
                         mix.mixing().total_weight()};
}

QuadratureScheme QuadratureScheme::grid(Box domain, std::size_t points_per_axis) {
  if (points_per_axis < 2) throw UsageError("QuadratureScheme: resolution must be at least 2");
  for (int i = 0; i < domain.dim(); ++i)
    if (!(domain.hi[i] > domain.lo[i])) throw UsageError("QuadratureScheme: degenerate domain");
  return QuadratureScheme{QuadratureMode::kGrid, points_per_axis, std::move(domain), 0};
}

QuadratureScheme QuadratureScheme::monte_carlo(Box domain, std::size_t samples, std::uint64_t seed) {
  auto s = grid(std::move(domain), std::max<std::size_t>(samples, 2));
  s.mode = QuadratureMode::kMonteCarlo;
  s.resolution = samples;
  s.seed = seed;
  if (samples < 2) throw UsageError("QuadratureScheme: resolution must be at least 2");
  return s;
}

std::size_t QuadratureScheme::default_points_per_axis(int dim) {
  switch (dim) {
    case 1: return 2048;
    case 2: return 512;
    case 3: return 128;
    default: return 48;
  }
}

QuadratureScheme QuadratureScheme::default_for(const DensityFunction& p, const DensityFunction& q) {
  if (p.dim() != q.dim()) throw UsageError("quadrature: dimension mismatch");
  return grid(p.support.united(q.support), default_points_per_axis(p.dim()));
}

std::string QuadratureScheme::describe() const {
  std::ostringstream ss;
  ss << (mode == QuadratureMode::kGrid ? "grid" : "monte-carlo") << " n=" << resolution << " domain=";
  for (int i = 0; i < domain.dim(); ++i) ss << (i ? "x" : "") << '[' << domain.lo[i] << ',' << domain.hi[i] << ']';
  if (mode == QuadratureMode::kMonteCarlo) ss << " seed=" << seed;
  return ss.str();
}

namespace {

struct Nodes {
  std::vector<double> p;
  std::vector<double> q;
  std::vector<unsigned char> parity;  // grid: parity of the first-axis index
  double cell = 0.0;                  // integration weight per node
  bool grid = true;
};

Nodes evaluate_nodes(const DensityFunction& p, const DensityFunction* q, const QuadratureScheme& scheme) {
  const int d = scheme.domain.dim();
  if (p.dim() != d || (q && q->dim() != d)) throw UsageError("quadrature: dimension mismatch");
  Nodes nodes;
  std::size_t count = 1;
  std::vector<double> step(d);
  if (scheme.mode == QuadratureMode::kGrid) {
    for (int i = 0; i < d; ++i) {
      if (count > std::numeric_limits<std::size_t>::max() / scheme.resolution)
        throw ResourceError("quadrature: grid too large");
      count *= scheme.resolution;
      step[i] = (scheme.domain.hi[i] - scheme.domain.lo[i]) / static_cast<double>(scheme.resolution);
    }
    if (count > 400'000'000) throw ResourceError("quadrature: grid too large");
    nodes.cell = 1.0;
    for (double s : step) nodes.cell *= s;
  } else {
    count = scheme.resolution;
    nodes.cell = scheme.domain.volume() / static_cast<double>(count);
    nodes.grid = false;
  }
  nodes.p.resize(count);
  if (q) nodes.q.resize(count);
  if (nodes.grid) nodes.parity.resize(count);

  std::vector<double> mc_points;
  if (!nodes.grid) {
    // Draw sequentially so the sample does not depend on the thread count.
    Rng rng(scheme.seed);
    mc_points.resize(count * d);
    for (std::size_t j = 0; j < count; ++j)
      for (int i = 0; i < d; ++i)
        mc_points[j * d + i] = scheme.domain.lo[i] + (scheme.domain.hi[i] - scheme.domain.lo[i]) * rng.uniform();
  }

  const std::size_t n_axis = scheme.resolution;
  parallel_for(count, [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(d);
    for (std::size_t j = begin; j < end; ++j) {
      if (nodes.grid) {
        std::size_t rest = j;
        for (int i = 0; i < d; ++i) {
          const std::size_t k = rest % n_axis;
          rest /= n_axis;
          x[i] = scheme.domain.lo[i] + (static_cast<double>(k) + 0.5) * step[i];
          if (i == 0) nodes.parity[j] = static_cast<unsigned char>(k & 1u);
        }
      } else {
        std::copy_n(mc_points.begin() + static_cast<std::ptrdiff_t>(j * d), d, x.begin());
      }
      nodes.p[j] = p.eval(x);
      if (q) nodes.q[j] = q->eval(x);
    }
  });
  return nodes;
}

struct Reduction {
  double value;
  double spread;  // grid: half the even/odd gap; MC: standard error
};

Reduction reduce(const Nodes& nodes, const std::vector<double>& f) {
  const std::size_t n = f.size();
  if (nodes.grid) {
    std::vector<double> even, odd;
    even.reserve(n / 2 + 1);
    odd.reserve(n / 2 + 1);
    for (std::size_t j = 0; j < n; ++j) (nodes.parity[j] ? odd : even).push_back(f[j]);
    const double total = pairwise_sum(f.data(), n) * nodes.cell;
    const double e = 2.0 * pairwise_sum(even.data(), even.size()) * nodes.cell;
    const double o = 2.0 * pairwise_sum(odd.data(), odd.size()) * nodes.cell;
    return {total, 0.5 * std::abs(e - o)};
  }
  const double mean = pairwise_sum(f.data(), n) / static_cast<double>(n);
  std::vector<double> sq(n);
  for (std::size_t j = 0; j < n; ++j) sq[j] = (f[j] - mean) * (f[j] - mean);
  const double var = pairwise_sum(sq.data(), n) / static_cast<double>(n - 1);
  const double vol = nodes.cell * static_cast<double>(n);
  return {mean * vol, vol * std::sqrt(var / static_cast<double>(n))};
}

double captured(const Nodes& nodes, const std::vector<double>& v) { return reduce(nodes, v).value; }

void fill_capture(MetricEstimate& est, const Nodes& nodes, const DensityFunction& p, const DensityFunction* q) {
  est.captured_mass_p = captured(nodes, nodes.p);
  est.accuracy_warning = std::abs(est.captured_mass_p - p.mass) > 1e-6 * std::max(p.mass, 1e-300);
  if (q) {
    est.captured_mass_q = captured(nodes, nodes.q);
    est.accuracy_warning =
        est.accuracy_warning || std::abs(est.captured_mass_q - q->mass) > 1e-6 * std::max(q->mass, 1e-300);
  }
}

double lost_mass(const MetricEstimate& est, const DensityFunction& p, const DensityFunction& q) {
  return std::max(0.0, p.mass - est.captured_mass_p) + std::max(0.0, q.mass - est.captured_mass_q);
}

}  // namespace

MetricEstimate l1_distance(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme) {
  const Nodes nodes = evaluate_nodes(p, &q, scheme);
  std::vector<double> f(nodes.p.size());
  for (std::size_t j = 0; j < f.size(); ++j) f[j] = std::abs(nodes.p[j] - nodes.q[j]);
  const auto r = reduce(nodes, f);
  MetricEstimate est;
  est.scheme = scheme.describe();
  fill_capture(est, nodes, p, &q);
  est.value = r.value;
  est.error = r.spread + (nodes.grid ? lost_mass(est, p, q) : 0.0);
  return est;
}

MetricEstimate hellinger(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme) {
  const Nodes nodes = evaluate_nodes(p, &q, scheme);
  std::vector<double> f(nodes.p.size());
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double a = std::sqrt(nodes.p[j]);
    const double b = std::sqrt(nodes.q[j]);
    const double s = a + b;
    // (sqrt p - sqrt q)^2 written without cancellation
    f[j] = s > 0.0 ? (nodes.p[j] - nodes.q[j]) * (nodes.p[j] - nodes.q[j]) / (s * s) : 0.0;
  }
  const auto r = reduce(nodes, f);
  MetricEstimate est;
  est.scheme = scheme.describe();
  fill_capture(est, nodes, p, &q);
  const double h2 = std::max(0.0, r.value);
  const double h2_err = r.spread + (nodes.grid ? lost_mass(est, p, q) : 0.0);
  est.value = std::sqrt(h2);
  est.error = est.value > 0.0 ? std::min(std::sqrt(h2_err), h2_err / (2.0 * est.value)) : std::sqrt(h2_err);
  return est;
}

namespace {

MetricEstimate kl_moment(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme,
                         int power) {
  const Nodes nodes = evaluate_nodes(p, &q, scheme);
  std::vector<double> f(nodes.p.size());
  bool infinite = false;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double pv = nodes.p[j];
    if (pv < kKlDensityFloor) {
      f[j] = 0.0;
      continue;
    }
    const double qv = nodes.q[j];
    if (!(qv > 0.0)) {
      infinite = true;
      f[j] = 0.0;
      continue;
    }
    const double lr = std::log(pv) - std::log(qv);
    f[j] = power == 1 ? pv * lr : pv * lr * lr;
  }
  MetricEstimate est;
  est.scheme = scheme.describe();
  fill_capture(est, nodes, p, &q);
  if (infinite) {
    est.infinite = true;
    est.value = std::numeric_limits<double>::infinity();
    est.error = 0.0;
    return est;
  }
  const auto r = reduce(nodes, f);
  est.value = r.value;
  est.error = r.spread;
  return est;
}

}  // namespace

MetricEstimate kl_div(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme) {
  return kl_moment(p, q, scheme, 1);
}

MetricEstimate kl_second(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme) {
  return kl_moment(p, q, scheme, 2);
}

MetricEstimate l1_distance(const DensityFunction& p, const DensityFunction& q) {
  return l1_distance(p, q, QuadratureScheme::default_for(p, q));
}
MetricEstimate hellinger(const DensityFunction& p, const DensityFunction& q) {
  return hellinger(p, q, QuadratureScheme::default_for(p, q));
}
MetricEstimate kl_div(const DensityFunction& p, const DensityFunction& q) {
  return kl_div(p, q, QuadratureScheme::default_for(p, q));
}
MetricEstimate kl_second(const DensityFunction& p, const DensityFunction& q) {
  return kl_second(p, q, QuadratureScheme::default_for(p, q));
}

KlBallReport kl_ball(const DensityFunction& p0, const DensityFunction& q, double eps, const QuadratureScheme& scheme) {
  if (!(eps > 0.0)) throw UsageError("kl_ball: eps must be positive");
  KlBallReport r;
  r.k = kl_div(p0, q, scheme);
  r.v = kl_second(p0, q, scheme);
  const double e2 = eps * eps;
  r.contains = !r.k.infinite && !r.v.infinite && r.k.value <= e2 && r.v.value <= e2;
  return r;
}

bool kl_ball_contains(const DensityFunction& p0, const DensityFunction& q, double eps, const QuadratureScheme& scheme) {
  return kl_ball(p0, q, eps, scheme).contains;
}

MetricEstimate sup_distance(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme) {
  const Nodes nodes = evaluate_nodes(p, &q, scheme);
  MetricEstimate est;
  est.scheme = scheme.describe();
  fill_capture(est, nodes, p, &q);
  for (std::size_t j = 0; j < nodes.p.size(); ++j) est.value = std::max(est.value, std::abs(nodes.p[j] - nodes.q[j]));
  return est;
}

MetricEstimate sup_ratio(const DensityFunction& p, const DensityFunction& q, const QuadratureScheme& scheme) {
  const Nodes nodes = evaluate_nodes(p, &q, scheme);
  MetricEstimate est;
  est.scheme = scheme.describe();
  fill_capture(est, nodes, p, &q);
  for (std::size_t j = 0; j < nodes.p.size(); ++j) {
    if (nodes.p[j] <= 1e-12) continue;
    if (!(nodes.q[j] > 0.0)) {
      est.infinite = true;
      est.value = std::numeric_limits<double>::infinity();
      return est;
    }
    est.value = std::max(est.value, nodes.p[j] / nodes.q[j]);
  }
  return est;
}

MetricEstimate integrate(const DensityFunction& p, const QuadratureScheme& scheme) {
  const Nodes nodes = evaluate_nodes(p, nullptr, scheme);
  const auto r = reduce(nodes, nodes.p);
  MetricEstimate est;
  est.scheme = scheme.describe();
  est.value = r.value;
  est.error = r.spread;
  est.captured_mass_p = r.value;
  return est;
}

}  // namespace dpmix
