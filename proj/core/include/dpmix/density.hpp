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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpmix/rng.hpp"

namespace dpmix {

/// A location in R^d. Coordinates are finite and d >= 1.
class Point {
 public:
  Point() = default;
  explicit Point(std::vector<double> coords);
  Point(std::initializer_list<double> coords) : Point(std::vector<double>(coords)) {}

  int dim() const { return static_cast<int>(coords_.size()); }
  double operator[](std::size_t i) const { return coords_[i]; }
  std::span<const double> coords() const { return coords_; }

  friend bool operator==(const Point&, const Point&) = default;

 private:
  std::vector<double> coords_;
};

double squared_distance(std::span<const double> x, std::span<const double> z);

/// Finite atom/weight list. Weights are stored as given; their sum may fall
/// short of one, in which case the shortfall is the truncation deficit.
/// Atoms keep their insertion order, which for stick-breaking draws is the
/// stick order. Duplicate locations are allowed.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  /// `locations` is row-major, `weights.size()` rows of `dim` coordinates.
  DiscreteMeasure(int dim, std::vector<double> locations, std::vector<double> weights);
  DiscreteMeasure(const std::vector<Point>& atoms, std::vector<double> weights);

  static DiscreteMeasure point_mass(const Point& at);

  int dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  bool empty() const { return weights_.empty(); }

  double weight(std::size_t h) const { return weights_[h]; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> location(std::size_t h) const {
    return {locations_.data() + h * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> locations() const { return locations_; }

  double total_weight() const;
  bool is_normalized(double tol = 1e-12) const;

  /// Copy with weights rescaled to sum to one.
  DiscreteMeasure normalized() const;
  /// Copy with atoms at bit-identical locations merged (weights summed),
  /// first-occurrence order preserved.
  DiscreteMeasure merged_duplicates() const;
  /// The first `count` atoms (or all, if fewer).
  DiscreteMeasure head(std::size_t count) const;

 private:
  int dim_ = 0;
  std::vector<double> locations_;
  std::vector<double> weights_;
};

/// 1 - sum of weights, floored at zero.
double truncation_deficit(const DiscreteMeasure& m);

/// Density of N(0, sigma^2 I_d).
struct IsotropicGaussianKernel {
  double sigma;
  int dim;

  IsotropicGaussianKernel(double sigma, int dim);

  double log_normalizer() const;
  /// log phi_sigma(x - z); no clamping.
  double log_eval(std::span<const double> x, std::span<const double> z) const;
  /// phi_sigma(x - z), clamped to zero when the log value is below -700.
  double eval(std::span<const double> x, std::span<const double> z) const;
};

inline constexpr double kLogUnderflow = -700.0;

double kernel_eval(const IsotropicGaussianKernel& kernel, const Point& x, const Point& z);

/// p_{F,sigma}(x) = sum_h w_h phi_sigma(x - z_h).
class MixtureDensity {
 public:
  MixtureDensity(DiscreteMeasure mixing, double sigma);

  const DiscreteMeasure& mixing() const { return mixing_; }
  double sigma() const { return kernel_.sigma; }
  int dim() const { return mixing_.dim(); }
  const IsotropicGaussianKernel& kernel() const { return kernel_; }

  double pdf(std::span<const double> x) const;
  /// Recorded deficit of the mixing measure.
  double deficit() const { return truncation_deficit(mixing_); }

  /// Bounding box of the atoms padded by `pad_sigmas` standard deviations.
  void bounding_box(double pad_sigmas, std::vector<double>& lo, std::vector<double>& hi) const;

 private:
  DiscreteMeasure mixing_;
  IsotropicGaussianKernel kernel_;
};

double mixture_pdf(const MixtureDensity& mix, const Point& x);

/// n i.i.d. draws. Requires a normalized mixing measure.
std::vector<Point> mixture_sample(const MixtureDensity& mix, std::size_t n, Rng& rng);

// Plain-text record: "d H", then H lines "weight z_1 ... z_d", then "sigma s"
// for a mixture. Numbers are written with 17 significant digits.
void write_measure(std::ostream& out, const DiscreteMeasure& m);
void write_mixture(std::ostream& out, const MixtureDensity& mix);
DiscreteMeasure read_measure(std::istream& in);
MixtureDensity read_mixture(std::istream& in);
/// Reads consecutive mixture records until end of stream.
std::vector<MixtureDensity> read_mixtures(std::istream& in);

std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace dpmix
