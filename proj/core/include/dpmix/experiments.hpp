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
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dpmix/density.hpp"
#include "dpmix/inference.hpp"
#include "dpmix/metrics.hpp"
#include "dpmix/prior.hpp"
#include "dpmix/rng.hpp"

namespace dpmix {

enum class Smoothness { kSupersmooth, kOrdinarySmooth };

std::string to_string(Smoothness s);
/// Accepts "supersmooth" and "ordinarysmooth".
Smoothness parse_smoothness(const std::string& text);

struct TrueDensitySpec {
  Smoothness kind = Smoothness::kSupersmooth;
  int dim = 1;
  /// Supersmooth: mixing measure and bandwidth.
  DiscreteMeasure mixing;
  double sigma0 = 0.5;
  /// Ordinary-smooth: product triweight on [-scale, scale]^d.
  double scale = 1.0;

  /// 1/2 delta at -(1,..,1) plus 1/2 delta at +(1,..,1), sigma0 = 1/2.
  static TrueDensitySpec supersmooth(int dim = 1);
  static TrueDensitySpec ordinary_smooth(int dim = 1, double scale = 1.0);
  std::string name() const { return to_string(kind); }
  void validate() const;
};

struct TrueDensity {
  DensityFunction density;
  std::function<std::vector<Point>(std::size_t, Rng&)> sample;
  std::string name;
};

TrueDensity make_true_density(const TrueDensitySpec& spec);

/// -1/2 for supersmooth, -2/(4+d) for ordinary-smooth.
double target_slope(const TrueDensitySpec& spec);

struct ExperimentConfig {
  DPPrior prior = default_prior(1);
  std::vector<std::size_t> n_grid{100, 316, 1000, 3162};
  std::size_t replications = 8;
  std::uint64_t seed = 1;
  std::size_t retained_draws = 50;
  std::size_t truncation = 0;  ///< 0 selects default_truncation
  double sigma_step = 0.2;
  std::size_t points_per_axis = 0;  ///< metric grid; 0 keeps the default
  bool timing = false;              ///< record wall-clock seconds per fit

  void validate() const;
  /// 2000 + 2n iterations, 1000 + n burn-in, thinned to retained_draws.
  FitConfig fit_config(std::size_t n, std::uint64_t seed) const;
};

struct RateRecord {
  std::string series;
  std::size_t n = 0;
  std::size_t rep = 0;
  double hellinger = 0.0;       ///< h(p0, posterior mean density)
  double se = 0.0;              ///< standard error of draw_hellinger over retained draws
  double draw_hellinger = 0.0;  ///< mean of h(p0, p_draw) over retained draws
  double runtime_s = 0.0;       ///< NaN when timing is off
  bool ok = true;
};

struct RateSummaryRow {
  std::size_t n = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  double mean = 0.0;
  double se = 0.0;
  double median = 0.0;
};

struct RateRunResult {
  std::string series;
  double target = 0.0;
  std::vector<RateRecord> records;  ///< sorted by (n, rep)
  std::vector<RateSummaryRow> per_n;
  std::size_t failed = 0;
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

RateRunResult run_rate_experiment(const TrueDensitySpec& spec, const ExperimentConfig& cfg);

/// Per-n aggregates and the slope of log(mean error) on log n with a 95%
/// band from the per-n standard errors.
void summarize(RateRunResult& result, std::size_t replications);

struct ReportPaths {
  std::filesystem::path rates_csv;
  std::filesystem::path summary_csv;
  std::filesystem::path plot_svg;

  static ReportPaths in(const std::filesystem::path& dir);
};

/// Writes the per-replication CSV, the summary CSV and a log-log SVG plot.
/// Throws UsageError, before touching any file, when no replication succeeded.
void emit_report(const std::vector<RateRunResult>& results, const ReportPaths& paths, bool timing);

std::string rates_csv(const std::vector<RateRunResult>& results, bool timing);
std::string summary_csv(const std::vector<RateRunResult>& results);
std::string rates_svg(const std::vector<RateRunResult>& results);

std::vector<RateRecord> read_rates_csv(std::istream& in);

}  // namespace dpmix
