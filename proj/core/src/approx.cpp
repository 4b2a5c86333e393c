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

#include "dpmix/approx.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "dpmix/error.hpp"
#include "dpmix/parallel.hpp"

namespace dpmix {

// ---------------------------------------------------------------------------
// Gauss rules

GaussRule gauss_legendre(std::size_t n) {
  if (n < 1) throw UsageError("gauss_legendre: n must be at least 1");
  GaussRule r{std::vector<double>(n), std::vector<double>(n)};
  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nn + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = x;
      dp = nn * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = nn * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

namespace {

// Monic Legendre recurrence on [-1, 1].
double legendre_b(std::size_t l) {
  if (l == 0) return 2.0;
  const double ll = static_cast<double>(l);
  return ll * ll / (4.0 * ll * ll - 1.0);
}

}  // namespace

Recurrence modified_chebyshev(std::span<const double> mom, std::size_t n) {
  if (n < 1 || mom.size() < 2 * n) throw UsageError("modified_chebyshev: need 2n modified moments");
  Recurrence rec;
  if (!(mom[0] > 0.0)) return rec;
  const std::size_t m = 2 * n;
  std::vector<double> prev(m, 0.0), cur(mom.begin(), mom.begin() + static_cast<std::ptrdiff_t>(m)), next(m, 0.0);
  rec.alpha.push_back(mom[1] / mom[0]);
  rec.beta.push_back(mom[0]);
  for (std::size_t k = 1; k < n; ++k) {
    for (std::size_t l = k; l < m - k; ++l)
      next[l] = cur[l + 1] - rec.alpha[k - 1] * cur[l] - rec.beta[k - 1] * prev[l] + legendre_b(l) * cur[l - 1];
    const double b = next[k] / cur[k - 1];
    const double a = next[k + 1] / next[k] - cur[k] / cur[k - 1];
    if (!(b > 0.0) || !std::isfinite(b) || !std::isfinite(a)) break;
    rec.alpha.push_back(a);
    rec.beta.push_back(b);
    prev.swap(cur);
    cur.swap(next);
  }
  return rec;
}

GaussRule golub_welsch(const Recurrence& rec) {
  const auto n = static_cast<Eigen::Index>(rec.alpha.size());
  GaussRule r;
  if (n == 0) return r;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    j(i, i) = rec.alpha[i];
    if (i + 1 < n) j(i, i + 1) = j(i + 1, i) = std::sqrt(rec.beta[i + 1]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  if (es.info() != Eigen::Success) throw InvariantViolation("golub_welsch: eigensolver failed");
  r.nodes.resize(n);
  r.weights.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    r.weights[i] = rec.beta[0] * v0 * v0;
  }
  return r;
}

GaussRule gauss_rule_for(std::span<const double> t, std::span<const double> w, double lo, double hi, std::size_t k) {
  if (t.size() != w.size()) throw UsageError("gauss_rule_for: size mismatch");
  if (!(hi > lo)) throw UsageError("gauss_rule_for: empty interval");
  GaussRule direct;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (w[i] > 0.0) {
      direct.nodes.push_back(t[i]);
      direct.weights.push_back(w[i]);
    }
  if (direct.nodes.size() <= k) return direct;

  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  for (std::size_t kk = k; kk >= 1; --kk) {
    std::vector<double> mom(2 * kk, 0.0);
    for (std::size_t i = 0; i < direct.nodes.size(); ++i) {
      const double x = (direct.nodes[i] - mid) / half;
      double p_prev = 0.0, p = 1.0;
      for (std::size_t l = 0; l < 2 * kk; ++l) {
        mom[l] += direct.weights[i] * p;
        const double p_next = x * p - (l == 0 ? 0.0 : legendre_b(l)) * p_prev;
        p_prev = p;
        p = p_next;
      }
    }
    const Recurrence rec = modified_chebyshev(mom, kk);
    if (rec.alpha.size() < kk) continue;
    GaussRule r = golub_welsch(rec);
    bool ok = true;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      r.nodes[i] = mid + half * r.nodes[i];
      ok = ok && r.weights[i] > 0.0 && r.nodes[i] >= lo && r.nodes[i] <= hi;
    }
    if (ok) return r;
  }
  throw InvariantViolation("gauss_rule_for: no stable rule");
}

// ---------------------------------------------------------------------------
// Compact densities

CompactDensity::CompactDensity(std::vector<AxisFactor> axes, std::string name)
    : axes_(std::move(axes)), name_(std::move(name)) {
  if (axes_.empty()) throw UsageError("CompactDensity: dimension must be at least 1");
  for (const auto& a : axes_) {
    if (!a.pdf || a.breakpoints.size() < 2 || a.breakpoints.size() > 16 || !(a.hi() > a.lo()))
      throw UsageError("CompactDensity: each axis needs a pdf, a nondegenerate support and at most 16 breakpoints");
    if (!std::is_sorted(a.breakpoints.begin(), a.breakpoints.end()))
      throw UsageError("CompactDensity: breakpoints must be sorted");
  }
}

Box CompactDensity::support() const {
  Box b;
  for (const auto& a : axes_) {
    b.lo.push_back(a.lo());
    b.hi.push_back(a.hi());
  }
  return b;
}

double CompactDensity::half_width() const {
  double a = 0.0;
  for (const auto& f : axes_) a = std::max({a, std::abs(f.lo()), std::abs(f.hi())});
  return a;
}

bool CompactDensity::has_derivatives() const {
  return std::all_of(axes_.begin(), axes_.end(), [](const AxisFactor& a) { return a.d1 && a.d2; });
}

double CompactDensity::pdf(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim()) throw UsageError("CompactDensity: dimension mismatch");
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) {
    const auto& a = axes_[i];
    if (x[i] < a.lo() || x[i] > a.hi()) return 0.0;
    v *= a.pdf(x[i]);
  }
  return v;
}

namespace {

struct AxisValues {
  std::vector<double> f, d1, d2;
};

AxisValues axis_values(const CompactDensity& p, std::span<const double> x) {
  if (!p.has_derivatives()) throw UsageError("CompactDensity: derivatives not available");
  const int d = p.dim();
  AxisValues v{std::vector<double>(d), std::vector<double>(d), std::vector<double>(d)};
  for (int i = 0; i < d; ++i) {
    const auto& a = p.axis(i);
    const bool in = x[i] >= a.lo() && x[i] <= a.hi();
    v.f[i] = in ? a.pdf(x[i]) : 0.0;
    v.d1[i] = in ? a.d1(x[i]) : 0.0;
    v.d2[i] = in ? a.d2(x[i]) : 0.0;
  }
  return v;
}

double product_except(const std::vector<double>& f, int skip1, int skip2 = -1) {
  double v = 1.0;
  for (int i = 0; i < static_cast<int>(f.size()); ++i)
    if (i != skip1 && i != skip2) v *= f[i];
  return v;
}

}  // namespace

std::vector<double> CompactDensity::gradient(std::span<const double> x) const {
  const AxisValues v = axis_values(*this, x);
  std::vector<double> g(dim());
  for (int i = 0; i < dim(); ++i) g[i] = v.d1[i] * product_except(v.f, i);
  return g;
}

std::vector<double> CompactDensity::hessian(std::span<const double> x) const {
  const AxisValues v = axis_values(*this, x);
  const int d = dim();
  std::vector<double> h(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      h[i * d + j] = i == j ? v.d2[i] * product_except(v.f, i) : v.d1[i] * v.d1[j] * product_except(v.f, i, j);
  return h;
}

DensityFunction CompactDensity::as_density() const {
  return DensityFunction{[self = *this](std::span<const double> x) { return self.pdf(x); }, support(), 1.0};
}

std::vector<Point> CompactDensity::sample(std::size_t n, Rng& rng) const {
  std::vector<Point> out;
  out.reserve(n);
  std::vector<double> x(dim());
  for (std::size_t j = 0; j < n; ++j) {
    for (int i = 0; i < dim(); ++i) {
      const auto& a = axes_[i];
      if (!a.sampler) throw UsageError("CompactDensity: no sampler for " + name_);
      x[i] = a.sampler(rng);
    }
    out.emplace_back(x);
  }
  return out;
}

namespace {

// c (1 - x^2)^m on [-1, 1] with its first two derivatives.
AxisFactor power_kernel_factor(int m, double c) {
  AxisFactor f;
  f.pdf = [m, c](double x) { return c * std::pow(1.0 - x * x, m); };
  f.d1 = [m, c](double x) { return -2.0 * m * c * x * std::pow(1.0 - x * x, m - 1); };
  f.d2 = [m, c](double x) {
    const double u = 1.0 - x * x;
    return c * (-2.0 * m * std::pow(u, m - 1) + 4.0 * m * (m - 1) * x * x * std::pow(u, m - 2));
  };
  f.breakpoints = {-1.0, 1.0};
  f.sampler = [m](Rng& rng) { return 2.0 * rng.beta(m + 1.0, m + 1.0) - 1.0; };
  return f;
}

}  // namespace

CompactDensity triweight_density(int dim) {
  if (dim < 1) throw UsageError("triweight_density: dimension must be at least 1");
  return CompactDensity(std::vector<AxisFactor>(dim, power_kernel_factor(3, 35.0 / 32.0)), "triweight");
}

CompactDensity quadweight_density(int dim) {
  if (dim < 1) throw UsageError("quadweight_density: dimension must be at least 1");
  return CompactDensity(std::vector<AxisFactor>(dim, power_kernel_factor(4, 315.0 / 256.0)), "quadweight");
}

CompactDensity uniform_density(int dim, double a) {
  if (dim < 1 || !(a > 0.0)) throw UsageError("uniform_density: need d >= 1 and a > 0");
  AxisFactor f;
  const double c = 0.5 / a;
  f.pdf = [c](double) { return c; };
  f.d1 = [](double) { return 0.0; };
  f.d2 = [](double) { return 0.0; };
  f.breakpoints = {-a, a};
  f.sampler = [a](Rng& rng) { return -a + 2.0 * a * rng.uniform(); };
  return CompactDensity(std::vector<AxisFactor>(dim, f), "uniform");
}

CompactDensity triangle_density(int dim) {
  if (dim < 1) throw UsageError("triangle_density: dimension must be at least 1");
  AxisFactor f;
  f.pdf = [](double x) { return std::max(0.0, 1.0 - std::abs(x)); };
  f.d1 = [](double x) { return x > 0.0 ? -1.0 : (x < 0.0 ? 1.0 : 0.0); };
  f.d2 = [](double) { return 0.0; };
  f.breakpoints = {-1.0, 0.0, 1.0};
  f.sampler = [](Rng& rng) { return rng.uniform() + rng.uniform() - 1.0; };
  return CompactDensity(std::vector<AxisFactor>(dim, f), "triangle");
}

RegularityIntegrals regularity_integrals(const CompactDensity& p0, std::size_t n) {
  if (n < 2) throw UsageError("regularity_integrals: resolution must be at least 2");
  const int d = p0.dim();
  const Box box = p0.support();
  double total = 1.0;
  for (int i = 0; i < d; ++i) total *= static_cast<double>(n);
  if (total > 5e8) throw ResourceError("regularity_integrals: grid too large");
  const auto count = static_cast<std::size_t>(total);
  std::vector<double> g_terms(count, 0.0), h_terms(count, 0.0);
  double cell = 1.0;
  for (int i = 0; i < d; ++i) cell *= (box.hi[i] - box.lo[i]) / static_cast<double>(n);
  parallel_for(count, [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(d);
    Eigen::MatrixXd hm(d, d);
    for (std::size_t j = begin; j < end; ++j) {
      std::size_t rest = j;
      for (int i = 0; i < d; ++i) {
        x[i] = box.lo[i] + (static_cast<double>(rest % n) + 0.5) * (box.hi[i] - box.lo[i]) / static_cast<double>(n);
        rest /= n;
      }
      const double p = p0.pdf(x);
      if (!(p > 0.0)) continue;
      const auto g = p0.gradient(x);
      const auto h = p0.hessian(x);
      double gn2 = 0.0;
      for (double v : g) gn2 += v * v;
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) hm(r, c) = h[r * d + c];
      const double spec = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(hm, Eigen::EigenvaluesOnly)
                              .eigenvalues()
                              .cwiseAbs()
                              .maxCoeff();
      g_terms[j] = gn2 * gn2 / (p * p * p) * cell;
      h_terms[j] = spec * spec / p * cell;
    }
  });
  return {pairwise_sum(g_terms.data(), count), pairwise_sum(h_terms.data(), count)};
}

// ---------------------------------------------------------------------------
// Smoothing

namespace {

const GaussRule& gl_coarse() {
  static const GaussRule r = gauss_legendre(10);
  return r;
}
const GaussRule& gl_fine() {
  static const GaussRule r = gauss_legendre(20);
  return r;
}

// int f(t) phi_sigma(x - t) dt over the factor support, panels of width
// <= sigma split at the breakpoints.
double axis_convolution(const AxisFactor& f, double sigma, double x, const GaussRule& rule) {
  const double reach = 9.0 * sigma;
  const double lo = std::max(f.lo(), x - reach);
  const double hi = std::min(f.hi(), x + reach);
  if (!(hi > lo)) return 0.0;
  double cuts[16];
  std::size_t n_cuts = 0;
  cuts[n_cuts++] = lo;
  for (double b : f.breakpoints)
    if (b > lo && b < hi) cuts[n_cuts++] = b;
  cuts[n_cuts++] = hi;
  const double inv = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < n_cuts; ++s) {
    const double width = cuts[s + 1] - cuts[s];
    const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil(width / sigma)));
    const double h = width / static_cast<double>(panels);
    for (std::size_t k = 0; k < panels; ++k) {
      const double a = cuts[s] + static_cast<double>(k) * h;
      const double mid = a + 0.5 * h;
      double acc = 0.0;
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double t = mid + 0.5 * h * rule.nodes[q];
        const double z = (x - t) / sigma;
        acc += rule.weights[q] * f.pdf(t) * std::exp(-0.5 * z * z);
      }
      total += 0.5 * h * acc;
    }
  }
  return total * inv;
}

}  // namespace

SmoothedDensity smooth(const CompactDensity& p0, double sigma) {
  if (!(sigma > 0.0)) throw UsageError("smooth: sigma must be positive");
  const int d = p0.dim();
  Box box = p0.support().padded(9.0 * sigma);
  SmoothedDensity out;
  out.density.support = box;
  out.density.mass = 1.0;
  out.density.eval = [p0, sigma](std::span<const double> x) {
    double v = 1.0;
    for (int i = 0; i < p0.dim() && v > 0.0; ++i) v *= axis_convolution(p0.axis(i), sigma, x[i], gl_fine());
    return v;
  };
  std::vector<double> err(d, 0.0), peak(d, 0.0);
  constexpr int kProbes = 513;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < kProbes; ++j) {
      const double x = box.lo[i] + (box.hi[i] - box.lo[i]) * j / (kProbes - 1.0);
      const double fine = axis_convolution(p0.axis(i), sigma, x, gl_fine());
      const double coarse = axis_convolution(p0.axis(i), sigma, x, gl_coarse());
      err[i] = std::max(err[i], std::abs(fine - coarse));
      peak[i] = std::max(peak[i], fine);
    }
  }
  for (int i = 0; i < d; ++i) out.reported_error += err[i] * product_except(peak, i);
  return out;
}

MixtureDensity smooth(const DiscreteMeasure& p0, double sigma) { return MixtureDensity(p0, sigma); }

// ---------------------------------------------------------------------------
// Discretization

MixingSource MixingSource::of(const CompactDensity& p0) {
  MixingSource s;
  s.density = &p0;
  s.half_width = p0.half_width();
  return s;
}

MixingSource MixingSource::of(const DiscreteMeasure& p0, double half_width) {
  if (!(half_width > 0.0)) throw UsageError("MixingSource: a must be positive");
  MixingSource s;
  s.atoms = &p0;
  s.half_width = half_width;
  return s;
}

int MixingSource::dim() const { return density ? density->dim() : atoms->dim(); }

namespace {

std::size_t default_error_points(int dim) {
  switch (dim) {
    case 1: return 8192;
    case 2: return 512;
    default: return 96;
  }
}

std::size_t cell_of(double x, double a, double side, std::size_t cells) {
  const double t = std::floor((x + a) / side);
  return static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(cells - 1)));
}

// Per-axis rules of a product density on every cell of the axis.
std::vector<GaussRule> axis_cell_rules(const AxisFactor& f, double a, double side, std::size_t cells, std::size_t k,
                                       std::size_t& degraded) {
  static const GaussRule fine = gauss_legendre(64);
  std::vector<GaussRule> rules(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const double lo = -a + static_cast<double>(c) * side;
    const double hi = c + 1 == cells ? a : lo + side;
    const double s_lo = std::max(lo, f.lo());
    const double s_hi = std::min(hi, f.hi());
    if (!(s_hi > s_lo)) continue;
    std::vector<double> cuts{s_lo};
    for (double b : f.breakpoints)
      if (b > s_lo && b < s_hi) cuts.push_back(b);
    cuts.push_back(s_hi);
    std::vector<double> t, w;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      const double m = 0.5 * (cuts[s] + cuts[s + 1]);
      const double h = 0.5 * (cuts[s + 1] - cuts[s]);
      for (std::size_t q = 0; q < fine.nodes.size(); ++q) {
        const double x = m + h * fine.nodes[q];
        t.push_back(x);
        w.push_back(h * fine.weights[q] * f.pdf(x));
      }
    }
    rules[c] = gauss_rule_for(t, w, lo, hi, k);
    if (rules[c].nodes.size() < k && !rules[c].nodes.empty()) ++degraded;
  }
  return rules;
}

}  // namespace

DiscretizationResult discretize(const MixingSource& src, double sigma, double eps, const DiscretizeOptions& opts) {
  if (!(eps > 0.0 && eps < 0.5)) throw UsageError("discretize: eps must lie in (0, 1/2)");
  if (!(sigma > 0.0)) throw UsageError("discretize: sigma must be positive");
  if (!(opts.c > 0.0)) throw UsageError("discretize: c must be positive");
  if (!src.density && !src.atoms) throw UsageError("discretize: empty source");
  const int d = src.dim();
  const double a = src.half_width;

  DiscretizationResult res;
  res.nodes_per_axis = static_cast<std::size_t>(std::max(1.0, std::ceil(opts.c * std::log(1.0 / eps))));
  res.cells_per_axis = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * a / sigma * (1.0 - 1e-12))));
  res.cell_side = 2.0 * a / static_cast<double>(res.cells_per_axis);
  res.budget_form = std::pow(std::max(a / sigma, 1.0) * std::log(1.0 / eps), d);
  const std::size_t k = res.nodes_per_axis;
  const std::size_t cells = res.cells_per_axis;
  const double side = res.cell_side;

  std::vector<double> locs, weights;
  if (src.density) {
    std::vector<std::vector<GaussRule>> rules(d);
    for (int i = 0; i < d; ++i) rules[i] = axis_cell_rules(src.density->axis(i), a, side, cells, k, res.degraded_cells);
    // Tensor over (cell, node) pairs per axis.
    std::vector<std::vector<std::pair<double, double>>> axis_atoms(d);
    for (int i = 0; i < d; ++i)
      for (const auto& r : rules[i])
        for (std::size_t q = 0; q < r.nodes.size(); ++q) axis_atoms[i].emplace_back(r.nodes[q], r.weights[q]);
    std::vector<std::size_t> idx(d, 0);
    for (;;) {
      double w = 1.0;
      for (int i = 0; i < d; ++i) w *= axis_atoms[i][idx[i]].second;
      for (int i = 0; i < d; ++i) locs.push_back(axis_atoms[i][idx[i]].first);
      weights.push_back(w);
      int i = d - 1;
      while (i >= 0 && ++idx[i] == axis_atoms[i].size()) idx[i--] = 0;
      if (i < 0) break;
    }
  } else {
    const DiscreteMeasure& m = *src.atoms;
    std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
    for (std::size_t h = 0; h < m.size(); ++h) {
      std::vector<std::size_t> key(d);
      for (int i = 0; i < d; ++i) {
        const double x = m.location(h)[i];
        if (std::abs(x) > a) throw UsageError("discretize: atom outside [-a, a]^d");
        key[i] = cell_of(x, a, side, cells);
      }
      groups[key].push_back(h);
    }
    std::size_t tensor_size = 1;
    for (int i = 0; i < d; ++i) tensor_size *= k;
    for (const auto& [key, members] : groups) {
      if (members.size() <= tensor_size) {
        for (auto h : members) {
          const auto z = m.location(h);
          locs.insert(locs.end(), z.begin(), z.end());
          weights.push_back(m.weight(h));
        }
        continue;
      }
      double mass = 0.0;
      for (auto h : members) mass += m.weight(h);
      std::vector<GaussRule> axis_rules(d);
      bool degraded = false;
      for (int i = 0; i < d; ++i) {
        std::vector<double> t, w;
        for (auto h : members) {
          t.push_back(m.location(h)[i]);
          w.push_back(m.weight(h));
        }
        const double lo = -a + static_cast<double>(key[i]) * side;
        const double hi = key[i] + 1 == cells ? a : lo + side;
        axis_rules[i] = gauss_rule_for(t, w, lo, hi, k);
        degraded = degraded || axis_rules[i].nodes.size() < std::min(k, members.size());
      }
      if (degraded) ++res.degraded_cells;
      std::vector<std::size_t> idx(d, 0);
      for (;;) {
        double w = mass;
        for (int i = 0; i < d; ++i) {
          w *= axis_rules[i].weights[idx[i]] / mass;
          locs.push_back(axis_rules[i].nodes[idx[i]]);
        }
        weights.push_back(w);
        int i = d - 1;
        while (i >= 0 && ++idx[i] == axis_rules[i].nodes.size()) idx[i--] = 0;
        if (i < 0) break;
      }
    }
  }
  res.measure = DiscreteMeasure(d, std::move(locs), std::move(weights));
  res.atom_count = res.measure.size();

  if (opts.measure_errors) {
    const MixtureDensity approx(res.measure, sigma);
    DensityFunction ref;
    if (src.density) {
      ref = smooth(*src.density, sigma).density;
    } else {
      ref = as_density(MixtureDensity(*src.atoms, sigma));
    }
    const DensityFunction got = as_density(approx);
    const std::size_t n = opts.error_grid_points ? opts.error_grid_points : default_error_points(d);
    const auto scheme = QuadratureScheme::grid(Box::cube(d, a + 8.0 * sigma), n);
    res.sup_error = sup_distance(ref, got, scheme).value;
    const auto l1 = l1_distance(ref, got, scheme);
    res.l1_error = l1.value;
    res.l1_error_bound = l1.error;
  }
  return res;
}

DiscreteMeasure snap_to_grid(const DiscreteMeasure& f, double sigma, double eps, double a) {
  if (!(sigma > 0.0) || !(eps > 0.0) || !(a > 0.0)) throw UsageError("snap_to_grid: sigma, eps and a must be positive");
  const double step = sigma * eps;
  const double limit = std::ceil(a / step * (1.0 - 1e-12)) - 1.0;
  std::vector<double> locs(f.locations().begin(), f.locations().end());
  for (double& x : locs) {
    if (std::abs(x) > a * (1.0 + 1e-12)) throw UsageError("snap_to_grid: atom outside [-a, a]^d");
    const double n = std::clamp(std::ceil(x / step - 0.5), -limit, limit);
    x = n * step;
  }
  return DiscreteMeasure(f.dim(), std::move(locs), std::vector<double>(f.weights().begin(), f.weights().end()));
}

// ---------------------------------------------------------------------------
// Partitions

PartitionScheme::PartitionScheme(int dim, std::vector<Cell> cells) : dim_(dim), cells_(std::move(cells)) {
  if (dim < 1) throw UsageError("PartitionScheme: dimension must be at least 1");
  for (std::size_t j = 0; j < cells_.size(); ++j) {
    const Cell& c = cells_[j];
    if (c.kind == Cell::Kind::kBall) {
      if (static_cast<int>(c.center.size()) != dim || !(c.radius > 0.0))
        throw UsageError("PartitionScheme: malformed ball cell");
      balls_.push_back(j);
    } else if (c.box.dim() != dim) {
      throw UsageError("PartitionScheme: malformed box cell");
    }
  }
}

std::size_t PartitionScheme::locate(std::span<const double> x) const {
  for (auto j : balls_)
    if (squared_distance(x, cells_[j].center) <= cells_[j].radius * cells_[j].radius) return j;
  for (std::size_t j = 0; j < cells_.size(); ++j) {
    const Cell& c = cells_[j];
    if (c.kind != Cell::Kind::kBox) continue;
    bool in = true;
    for (int i = 0; i < dim_ && in; ++i) in = x[i] >= c.box.lo[i] && x[i] < c.box.hi[i];
    if (in) return j;
  }
  return cells_.size();
}

std::vector<double> PartitionScheme::masses_of(const DiscreteMeasure& f) const {
  if (f.dim() != dim_) throw UsageError("PartitionScheme: dimension mismatch");
  std::vector<double> m(cells_.size(), 0.0);
  for (std::size_t h = 0; h < f.size(); ++h) {
    const auto j = locate(f.location(h));
    if (j == cells_.size()) throw InvariantViolation("PartitionScheme: point in no cell");
    m[j] += f.weight(h);
  }
  return m;
}

double PartitionScheme::max_inner_diameter() const {
  double m = 0.0;
  for (const auto& c : cells_)
    if (!c.outer) m = std::max(m, c.diameter);
  return m;
}

PartitionScheme box_partition(double a, double side, int dim, const BaseMeasure& base) {
  if (!(a > 0.0) || !(side > 0.0) || dim < 1) throw UsageError("box_partition: a, side and d must be positive");
  if (base.dim() != dim) throw UsageError("box_partition: dimension mismatch");
  const auto m = static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * a / side * (1.0 - 1e-12))));
  const double s = 2.0 * a / static_cast<double>(m);
  if (std::pow(static_cast<double>(m), dim) > 1e7) throw ResourceError("box_partition: too many cells");
  std::vector<Cell> cells;
  std::vector<std::size_t> idx(dim, 0);
  for (;;) {
    Cell c;
    for (int i = 0; i < dim; ++i) {
      c.box.lo.push_back(-a + static_cast<double>(idx[i]) * s);
      c.box.hi.push_back(idx[i] + 1 == m ? a : -a + static_cast<double>(idx[i] + 1) * s);
    }
    c.diameter = s * std::sqrt(static_cast<double>(dim));
    c.base_mass = base.mass_of_cell(c.box.lo, c.box.hi);
    cells.push_back(std::move(c));
    int i = dim - 1;
    while (i >= 0 && ++idx[i] == m) idx[i--] = 0;
    if (i < 0) break;
  }
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) {
    for (int sign : {-1, 1}) {
      Cell c;
      c.outer = true;
      c.diameter = inf;
      for (int j = 0; j < dim; ++j) {
        if (j < i) {
          c.box.lo.push_back(-a);
          c.box.hi.push_back(a);
        } else if (j == i) {
          c.box.lo.push_back(sign < 0 ? -inf : a);
          c.box.hi.push_back(sign < 0 ? -a : inf);
        } else {
          c.box.lo.push_back(-inf);
          c.box.hi.push_back(inf);
        }
      }
      c.base_mass = base.mass_of_cell(c.box.lo, c.box.hi);
      cells.push_back(std::move(c));
    }
  }
  return PartitionScheme(dim, std::move(cells));
}

ThicknessPartition build_thickness_partition(const DiscreteMeasure& f_sigma, double sigma, double eps, double a,
                                             const BaseMeasure& base, double b) {
  if (!(sigma > 0.0) || !(eps > 0.0 && eps < 1.0) || !(a > 0.0) || !(b > 0.0))
    throw UsageError("build_thickness_partition: need sigma, a, b > 0 and eps in (0, 1)");
  const int d = f_sigma.dim();
  if (base.dim() != d) throw UsageError("build_thickness_partition: dimension mismatch");
  const double diam = sigma * std::pow(eps, 2.0 * b);
  for (std::size_t h = 0; h < f_sigma.size(); ++h) {
    for (double x : f_sigma.location(h))
      if (std::abs(x) > a) throw UsageError("build_thickness_partition: atom outside [-a, a]^d");
    for (std::size_t g = 0; g < h; ++g)
      if (squared_distance(f_sigma.location(h), f_sigma.location(g)) < diam * diam)
        throw UsageError("build_thickness_partition: atoms closer than sigma eps^{2b}");
  }
  const PartitionScheme boxes = box_partition(a, sigma / std::sqrt(static_cast<double>(d)), d, base);

  std::vector<Cell> cells;
  for (std::size_t h = 0; h < f_sigma.size(); ++h) {
    Cell c;
    c.kind = Cell::Kind::kBall;
    c.center.assign(f_sigma.location(h).begin(), f_sigma.location(h).end());
    c.radius = 0.5 * diam;
    c.diameter = diam;
    c.base_mass = base.mass_of_ball(c.center, c.radius);
    c.target = f_sigma.weight(h);
    cells.push_back(std::move(c));
  }
  const std::size_t n_balls = cells.size();
  std::vector<Cell> box_cells = boxes.cells();
  for (std::size_t h = 0; h < n_balls; ++h) {
    const auto j = boxes.locate(cells[h].center);
    box_cells[j].base_mass -= cells[h].base_mass;
  }
  std::size_t inner = n_balls;
  for (auto& c : box_cells) {
    if (!c.outer) ++inner;
    cells.push_back(std::move(c));
  }

  ThicknessPartition out{PartitionScheme(d, std::move(cells)), n_balls, inner, diam, 0.0, 0.0, 0.0, 0.0};
  const double r = 0.5 * diam;
  const double ball_volume = std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0) * std::pow(r, d);
  const std::vector<double> corner(d, a);
  out.mass_floor = ball_volume * base.density(corner);
  out.min_mass = std::numeric_limits<double>::infinity();
  for (const auto& c : out.scheme.cells()) {
    out.min_mass = std::min(out.min_mass, c.base_mass);
    out.max_mass = std::max(out.max_mass, c.base_mass);
  }
  out.count_form = std::pow(sigma, -d) * std::pow(std::log(1.0 / eps), d);
  return out;
}

PerturbationReport perturbation_bound_check(const DiscreteMeasure& f, const DiscreteMeasure& f_prime,
                                            const PartitionScheme& partition, double sigma) {
  if (!(sigma > 0.0)) throw UsageError("perturbation_bound_check: sigma must be positive");
  if (!f.is_normalized(1e-9) || !f_prime.is_normalized(1e-9))
    throw UsageError("perturbation_bound_check: both measures must be normalized");
  const int d = partition.dim();
  std::vector<char> hosts(partition.size(), 0);
  std::vector<double> p(partition.size(), 0.0);
  for (std::size_t h = 0; h < f_prime.size(); ++h) {
    const auto j = partition.locate(f_prime.location(h));
    if (j == partition.size() || partition.cell(j).outer || hosts[j])
      throw UsageError("perturbation_bound_check: F' needs one atom per inner cell");
    hosts[j] = 1;
    p[j] = f_prime.weight(h);
  }
  const auto fm = partition.masses_of(f);
  PerturbationReport r;
  for (std::size_t j = 0; j < partition.size(); ++j) {
    if (!hosts[j]) continue;
    r.max_diameter = std::max(r.max_diameter, partition.cell(j).diameter);
    r.mass_discrepancy += std::abs(fm[j] - p[j]);
  }
  const DensityFunction pf = as_density(MixtureDensity(f, sigma));
  const DensityFunction pg = as_density(MixtureDensity(f_prime, sigma));
  const auto scheme = QuadratureScheme::default_for(pf, pg);
  const auto l1 = l1_distance(pf, pg, scheme);
  r.lhs_l1 = l1.value;
  r.lhs_l1_error = l1.error;
  r.lhs_sup = sup_distance(pf, pg, scheme).value;
  r.rhs_l1 = r.max_diameter / sigma + r.mass_discrepancy;
  r.rhs_sup = r.max_diameter / std::pow(sigma, d + 1) + r.mass_discrepancy / std::pow(sigma, d);
  r.ratio_l1 = r.rhs_l1 > 0.0 ? r.lhs_l1 / r.rhs_l1 : 0.0;
  r.ratio_sup = r.rhs_sup > 0.0 ? r.lhs_sup / r.rhs_sup : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Dirichlet small-ball probabilities

double SmallBallEstimate::log_estimate() const { return std::log(zero_hits ? upper_bound : estimate); }

SmallBallEstimate dirichlet_small_ball(std::span<const double> alphas, std::span<const double> target, double eps,
                                       std::size_t n_sim, std::uint64_t seed) {
  const std::size_t n = alphas.size();
  if (n < 1 || target.size() != n) throw UsageError("dirichlet_small_ball: alphas and target must match");
  for (double a : alphas)
    if (!(a > 0.0 && a <= 1.0)) throw UsageError("dirichlet_small_ball: alphas must lie in (0, 1]");
  double total = 0.0;
  for (double p : target) {
    if (!(p >= 0.0)) throw UsageError("dirichlet_small_ball: target must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError("dirichlet_small_ball: target must sum to one");
  if (!(eps > 0.0 && eps < std::min(0.25, 1.0 / static_cast<double>(n))))
    throw UsageError("dirichlet_small_ball: eps must lie in (0, min(1/4, 1/N))");
  if (n_sim < 1) throw UsageError("dirichlet_small_ball: n_sim must be positive");

  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (n_sim + kChunk - 1) / kChunk;
  std::vector<std::size_t> hits(chunks, 0);
  const double radius = 2.0 * eps;
  const double floor = 0.5 * eps * eps;
  parallel_for(chunks, [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(n);
    for (std::size_t c = begin; c < end; ++c) {
      Rng rng = Rng::stream(seed, c);
      const std::size_t stop = std::min(n_sim, (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < stop; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += x[j] = rng.gamma(alphas[j]);
        double dist = 0.0, lowest = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
          x[j] /= s;
          dist += std::abs(x[j] - target[j]);
          lowest = std::min(lowest, x[j]);
        }
        if (dist <= radius && lowest >= floor) ++hits[c];
      }
    }
  });
  SmallBallEstimate r;
  r.n_sim = n_sim;
  r.dim = n;
  r.eps = eps;
  r.hits = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  r.estimate = static_cast<double>(r.hits) / static_cast<double>(n_sim);
  r.se = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(n_sim));
  r.zero_hits = r.hits == 0;
  r.upper_bound = r.zero_hits ? 3.0 / static_cast<double>(n_sim) : r.estimate;
  return r;
}

std::pair<double, double> least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("least_squares: need at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw UsageError("least_squares: x values must not all coincide");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

DecayFit fit_small_ball_decay(std::span<const SmallBallEstimate> estimates) {
  DecayFit fit;
  for (const auto& e : estimates) {
    fit.x.push_back(static_cast<double>(e.dim) * std::log(1.0 / e.eps));
    fit.y.push_back(e.log_estimate());
  }
  const auto [slope, icept] = least_squares(fit.x, fit.y);
  fit.c_hat = -slope;
  fit.log_C = icept;
  return fit;
}

// ---------------------------------------------------------------------------
// Smoothing-rate audit

SlopeReport smoothing_rate_audit(const CompactDensity& p0, std::span<const double> sigmas,
                                 std::size_t points_per_axis) {
  if (sigmas.size() < 2) throw UsageError("smoothing_rate_audit: need at least two sigmas");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw UsageError("smoothing_rate_audit: sigmas must be positive");
    if (i > 0 && !(sigmas[i] < sigmas[i - 1])) throw UsageError("smoothing_rate_audit: sigmas must be decreasing");
  }
  if (sigmas.front() / sigmas.back() < 10.0 * (1.0 - 1e-12))
    throw UsageError("smoothing_rate_audit: sigmas must span at least one decade");
  const int d = p0.dim();
  const std::size_t n = points_per_axis ? points_per_axis : (d == 1 ? 65536 : d == 2 ? 1024 : 128);
  const DensityFunction base = p0.as_density();
  SlopeReport r;
  std::vector<double> lx, ly;
  for (double s : sigmas) {
    const auto sm = smooth(p0, s);
    const auto scheme = QuadratureScheme::grid(sm.density.support, n);
    const auto h = hellinger(base, sm.density, scheme);
    const double err = h.error + std::sqrt(sm.reported_error * sm.density.support.volume());
    if (!(h.value > 10.0 * err)) {
      ++r.dropped;
      continue;
    }
    r.sigmas.push_back(s);
    r.values.push_back(h.value);
    r.errors.push_back(err);
    lx.push_back(std::log(s));
    ly.push_back(std::log(h.value));
  }
  if (lx.size() < 2) throw UsageError("smoothing_rate_audit: fewer than two sigmas above the noise floor");
  std::tie(r.slope, r.intercept) = least_squares(lx, ly);
  return r;
}

ScaleCheck scale_perturbation(const DiscreteMeasure& f0, double sigma0, double sigma) {
  if (!(sigma > 0.0 && sigma < sigma0)) throw UsageError("scale_perturbation: need 0 < sigma < sigma0");
  const auto p = as_density(MixtureDensity(f0, sigma0));
  const auto q = as_density(MixtureDensity(f0, sigma));
  const int d = f0.dim();
  const std::size_t n = d == 1 ? 32768 : d == 2 ? 1024 : 160;
  const auto l1 = l1_distance(p, q, QuadratureScheme::grid(p.support.united(q.support), n));
  const double r = sigma / sigma0;
  return {l1.value, l1.error, 1.0 - r, 2.0 * (1.0 - std::pow(r, d))};
}

}  // namespace dpmix
