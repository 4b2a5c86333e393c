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

#include "dpmix/density.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "dpmix/error.hpp"

namespace dpmix {

Point::Point(std::vector<double> coords) : coords_(std::move(coords)) {
  if (coords_.empty()) throw UsageError("Point: dimension must be at least 1");
  for (double c : coords_)
    if (!std::isfinite(c)) throw UsageError("Point: coordinates must be finite");
}

double squared_distance(std::span<const double> x, std::span<const double> z) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i] - z[i];
    s += t * t;
  }
  return s;
}

DiscreteMeasure::DiscreteMeasure(int dim, std::vector<double> locations, std::vector<double> weights)
    : dim_(dim), locations_(std::move(locations)), weights_(std::move(weights)) {
  if (dim_ < 1) throw UsageError("DiscreteMeasure: dimension must be at least 1");
  if (locations_.size() != weights_.size() * static_cast<std::size_t>(dim_))
    throw UsageError("DiscreteMeasure: location array does not match weights and dimension");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("DiscreteMeasure: weights must be finite and nonnegative");
    total += w;
  }
  if (total > 1.0 + 1e-12) throw UsageError("DiscreteMeasure: weights sum above one");
  for (double c : locations_)
    if (!std::isfinite(c)) throw UsageError("DiscreteMeasure: locations must be finite");
}

DiscreteMeasure::DiscreteMeasure(const std::vector<Point>& atoms, std::vector<double> weights) {
  if (atoms.empty()) throw UsageError("DiscreteMeasure: need at least one atom to infer dimension");
  const int dim = atoms.front().dim();
  std::vector<double> locations;
  locations.reserve(atoms.size() * static_cast<std::size_t>(dim));
  for (const auto& a : atoms) {
    if (a.dim() != dim) throw UsageError("DiscreteMeasure: atoms have mixed dimensions");
    locations.insert(locations.end(), a.coords().begin(), a.coords().end());
  }
  *this = DiscreteMeasure(dim, std::move(locations), std::move(weights));
}

DiscreteMeasure DiscreteMeasure::point_mass(const Point& at) {
  return DiscreteMeasure(at.dim(), std::vector<double>(at.coords().begin(), at.coords().end()), {1.0});
}

double DiscreteMeasure::total_weight() const {
  double total = 0.0;
  for (double w : weights_) total += w;
  return total;
}

bool DiscreteMeasure::is_normalized(double tol) const { return std::abs(total_weight() - 1.0) <= tol; }

DiscreteMeasure DiscreteMeasure::normalized() const {
  const double total = total_weight();
  if (!(total > 0.0)) throw UsageError("DiscreteMeasure: cannot normalize a zero measure");
  std::vector<double> w(weights_);
  for (double& x : w) x /= total;
  return DiscreteMeasure(dim_, locations_, std::move(w));
}

DiscreteMeasure DiscreteMeasure::merged_duplicates() const {
  std::map<std::vector<double>, std::size_t> seen;
  std::vector<double> locs;
  std::vector<double> w;
  for (std::size_t h = 0; h < size(); ++h) {
    auto loc = location(h);
    std::vector<double> key(loc.begin(), loc.end());
    auto [it, inserted] = seen.try_emplace(key, w.size());
    if (inserted) {
      locs.insert(locs.end(), loc.begin(), loc.end());
      w.push_back(weights_[h]);
    } else {
      w[it->second] += weights_[h];
    }
  }
  return DiscreteMeasure(dim_, std::move(locs), std::move(w));
}

DiscreteMeasure DiscreteMeasure::head(std::size_t count) const {
  count = std::min(count, size());
  std::vector<double> locs(locations_.begin(), locations_.begin() + static_cast<std::ptrdiff_t>(count * dim_));
  std::vector<double> w(weights_.begin(), weights_.begin() + static_cast<std::ptrdiff_t>(count));
  return DiscreteMeasure(dim_, std::move(locs), std::move(w));
}

double truncation_deficit(const DiscreteMeasure& m) { return std::max(0.0, 1.0 - m.total_weight()); }

IsotropicGaussianKernel::IsotropicGaussianKernel(double sigma_, int dim_) : sigma(sigma_), dim(dim_) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw UsageError("kernel: sigma must be positive and finite");
  if (dim < 1) throw UsageError("kernel: dimension must be at least 1");
}

double IsotropicGaussianKernel::log_normalizer() const {
  return -0.5 * dim * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

double IsotropicGaussianKernel::log_eval(std::span<const double> x, std::span<const double> z) const {
  return log_normalizer() - squared_distance(x, z) / (2.0 * sigma * sigma);
}

double IsotropicGaussianKernel::eval(std::span<const double> x, std::span<const double> z) const {
  const double lv = log_eval(x, z);
  return lv < kLogUnderflow ? 0.0 : std::exp(lv);
}

double kernel_eval(const IsotropicGaussianKernel& kernel, const Point& x, const Point& z) {
  if (x.dim() != kernel.dim || z.dim() != kernel.dim) throw UsageError("kernel_eval: dimension mismatch");
  return kernel.eval(x.coords(), z.coords());
}

MixtureDensity::MixtureDensity(DiscreteMeasure mixing, double sigma)
    : mixing_(std::move(mixing)), kernel_(sigma, std::max(1, mixing_.dim())) {
  if (mixing_.empty()) throw UsageError("MixtureDensity: mixing measure has no atoms");
}

double MixtureDensity::pdf(std::span<const double> x) const {
  const double log_norm = kernel_.log_normalizer();
  const double inv_two_var = 1.0 / (2.0 * kernel_.sigma * kernel_.sigma);
  double total = 0.0;
  for (std::size_t h = 0; h < mixing_.size(); ++h) {
    const double lv = log_norm - squared_distance(x, mixing_.location(h)) * inv_two_var;
    if (lv >= kLogUnderflow) total += mixing_.weight(h) * std::exp(lv);
  }
  return total;
}

void MixtureDensity::bounding_box(double pad_sigmas, std::vector<double>& lo, std::vector<double>& hi) const {
  const int d = dim();
  lo.assign(d, std::numeric_limits<double>::infinity());
  hi.assign(d, -std::numeric_limits<double>::infinity());
  for (std::size_t h = 0; h < mixing_.size(); ++h) {
    auto z = mixing_.location(h);
    for (int i = 0; i < d; ++i) {
      lo[i] = std::min(lo[i], z[i]);
      hi[i] = std::max(hi[i], z[i]);
    }
  }
  for (int i = 0; i < d; ++i) {
    lo[i] -= pad_sigmas * sigma();
    hi[i] += pad_sigmas * sigma();
  }
}

double mixture_pdf(const MixtureDensity& mix, const Point& x) {
  if (x.dim() != mix.dim()) throw UsageError("mixture_pdf: dimension mismatch");
  return mix.pdf(x.coords());
}

std::vector<Point> mixture_sample(const MixtureDensity& mix, std::size_t n, Rng& rng) {
  const auto& m = mix.mixing();
  if (!m.is_normalized()) throw UsageError("mixture_sample: mixing measure is not normalized");
  std::vector<double> cumulative(m.size());
  double running = 0.0;
  for (std::size_t h = 0; h < m.size(); ++h) cumulative[h] = (running += m.weight(h));
  std::vector<Point> out;
  out.reserve(n);
  const int d = mix.dim();
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * running;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t h = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative.begin(), m.size() - 1));
    while (m.weight(h) == 0.0 && h > 0) --h;
    auto z = m.location(h);
    for (int k = 0; k < d; ++k) x[k] = z[k] + mix.sigma() * rng.normal();
    out.emplace_back(x);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw IoError("cannot parse number '" + std::string(text) + "'");
  return v;
}

void write_measure(std::ostream& out, const DiscreteMeasure& m) {
  out << m.dim() << ' ' << m.size() << '\n';
  for (std::size_t h = 0; h < m.size(); ++h) {
    out << format_double(m.weight(h));
    for (double c : m.location(h)) out << ' ' << format_double(c);
    out << '\n';
  }
}

void write_mixture(std::ostream& out, const MixtureDensity& mix) {
  write_measure(out, mix.mixing());
  out << "sigma " << format_double(mix.sigma()) << '\n';
}

namespace {

bool next_nonempty_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> fields;
  std::string f;
  while (ss >> f) fields.push_back(f);
  return fields;
}

}  // namespace

DiscreteMeasure read_measure(std::istream& in) {
  std::string line;
  if (!next_nonempty_line(in, line)) throw IoError("read_measure: missing header line");
  auto header = split_fields(line);
  if (header.size() != 2) throw IoError("read_measure: header must be 'd H'");
  const int d = static_cast<int>(parse_double(header[0]));
  const auto count = static_cast<std::size_t>(parse_double(header[1]));
  if (d < 1) throw IoError("read_measure: bad dimension");
  std::vector<double> locs;
  std::vector<double> weights;
  locs.reserve(count * d);
  weights.reserve(count);
  for (std::size_t h = 0; h < count; ++h) {
    if (!next_nonempty_line(in, line)) throw IoError("read_measure: truncated atom list");
    auto fields = split_fields(line);
    if (fields.size() != static_cast<std::size_t>(d) + 1) throw IoError("read_measure: atom line has wrong arity");
    weights.push_back(parse_double(fields[0]));
    for (int k = 0; k < d; ++k) locs.push_back(parse_double(fields[k + 1]));
  }
  return DiscreteMeasure(d, std::move(locs), std::move(weights));
}

MixtureDensity read_mixture(std::istream& in) {
  DiscreteMeasure m = read_measure(in);
  std::string line;
  if (!next_nonempty_line(in, line)) throw IoError("read_mixture: missing sigma line");
  auto fields = split_fields(line);
  if (fields.size() != 2 || fields[0] != "sigma") throw IoError("read_mixture: expected 'sigma <value>'");
  return MixtureDensity(std::move(m), parse_double(fields[1]));
}

std::vector<MixtureDensity> read_mixtures(std::istream& in) {
  std::vector<MixtureDensity> out;
  for (;;) {
    in >> std::ws;
    if (in.peek() == std::char_traits<char>::eof()) break;
    out.push_back(read_mixture(in));
  }
  return out;
}

}  // namespace dpmix
