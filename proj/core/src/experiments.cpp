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

#include "dpmix/experiments.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <tuple>

#include "dpmix/error.hpp"
#include "dpmix/parallel.hpp"

namespace dpmix {

std::string to_string(Smoothness s) { return s == Smoothness::kSupersmooth ? "supersmooth" : "ordinarysmooth"; }

Smoothness parse_smoothness(const std::string& text) {
  if (text == "supersmooth") return Smoothness::kSupersmooth;
  if (text == "ordinarysmooth") return Smoothness::kOrdinarySmooth;
  throw UsageError("unknown density kind '" + text + "'");
}

TrueDensitySpec TrueDensitySpec::supersmooth(int dim) {
  TrueDensitySpec s;
  s.kind = Smoothness::kSupersmooth;
  s.dim = dim;
  std::vector<double> loc(2 * static_cast<std::size_t>(dim), 1.0);
  std::fill(loc.begin(), loc.begin() + dim, -1.0);
  s.mixing = DiscreteMeasure(dim, std::move(loc), {0.5, 0.5});
  s.sigma0 = 0.5;
  return s;
}

TrueDensitySpec TrueDensitySpec::ordinary_smooth(int dim, double scale) {
  TrueDensitySpec s;
  s.kind = Smoothness::kOrdinarySmooth;
  s.dim = dim;
  s.scale = scale;
  return s;
}

void TrueDensitySpec::validate() const {
  if (dim < 1 || dim > 3) throw UsageError("true density: dimension must be 1, 2 or 3");
  if (kind == Smoothness::kSupersmooth) {
    if (mixing.dim() != dim || mixing.size() == 0 || !mixing.is_normalized())
      throw UsageError("true density: supersmooth mixing measure must be normalized and match the dimension");
    if (!(sigma0 > 0.0)) throw UsageError("true density: sigma0 must be positive");
  } else if (!(scale > 0.0)) {
    throw UsageError("true density: scale must be positive");
  }
}

TrueDensity make_true_density(const TrueDensitySpec& spec) {
  spec.validate();
  if (spec.kind == Smoothness::kSupersmooth) {
    MixtureDensity mix(spec.mixing, spec.sigma0);
    return TrueDensity{as_density(mix), [mix](std::size_t n, Rng& rng) { return mixture_sample(mix, n, rng); },
                       spec.name()};
  }
  const int d = spec.dim;
  const double s = spec.scale;
  const double norm = std::pow(35.0 / (32.0 * s), d);
  DensityFunction f{[d, s, norm](std::span<const double> x) {
                      double v = norm;
                      for (int i = 0; i < d; ++i) {
                        const double u = x[i] / s;
                        if (!(std::abs(u) < 1.0)) return 0.0;
                        const double w = 1.0 - u * u;
                        v *= w * w * w;
                      }
                      return v;
                    },
                    Box::cube(d, s), 1.0};
  auto sampler = [d, s](std::size_t n, Rng& rng) {
    std::vector<Point> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = s * (2.0 * rng.beta(4.0, 4.0) - 1.0);
      out.emplace_back(std::move(x));
    }
    return out;
  };
  return TrueDensity{std::move(f), std::move(sampler), spec.name()};
}

double target_slope(const TrueDensitySpec& spec) {
  return spec.kind == Smoothness::kSupersmooth ? -0.5 : -2.0 / (4.0 + spec.dim);
}

void ExperimentConfig::validate() const {
  if (n_grid.size() < 4) throw UsageError("experiment: n grid needs at least 4 points");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 2) throw UsageError("experiment: sample sizes must be at least 2");
    if (i && n_grid[i] <= n_grid[i - 1]) throw UsageError("experiment: n grid must be strictly increasing");
  }
  if (replications < 1) throw UsageError("experiment: need at least one replication");
  if (retained_draws < 1) throw UsageError("experiment: need at least one retained draw");
  if (!(sigma_step > 0.0)) throw UsageError("experiment: sigma step must be positive");
}

FitConfig ExperimentConfig::fit_config(std::size_t n, std::uint64_t fit_seed) const {
  FitConfig fc;
  fc.burn_in = 1000 + n;
  fc.thin = std::max<std::size_t>(1, (1000 + n) / retained_draws);
  fc.iterations = fc.burn_in + fc.thin * retained_draws;
  fc.truncation = truncation;
  fc.sigma_step = sigma_step;
  fc.seed = fit_seed;
  fc.record_trace = false;
  return fc;
}

namespace {

std::vector<double> sorted_copy(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

double median_of(const std::vector<double>& v) {
  const auto s = sorted_copy(v);
  const std::size_t m = s.size();
  return m % 2 ? s[m / 2] : 0.5 * (s[m / 2 - 1] + s[m / 2]);
}

}  // namespace

RateRunResult run_rate_experiment(const TrueDensitySpec& spec, const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.prior.dim() != spec.dim) throw UsageError("experiment: prior and true density dimensions differ");
  const TrueDensity truth = make_true_density(spec);
  const std::size_t jobs = cfg.n_grid.size() * cfg.replications;
  const std::uint64_t series_seed = splitmix64(cfg.seed ^ (spec.kind == Smoothness::kSupersmooth ? 0x5u : 0xAu));

  RateRunResult result;
  result.series = spec.name();
  result.target = target_slope(spec);
  result.records.resize(jobs);

  parallel_for(jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      RateRecord& rec = result.records[j];
      rec.series = result.series;
      rec.n = cfg.n_grid[j / cfg.replications];
      rec.rep = j % cfg.replications;
      rec.runtime_s = std::numeric_limits<double>::quiet_NaN();
      Rng data_rng = Rng::stream(series_seed, 2 * j);
      const auto data = truth.sample(rec.n, data_rng);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto samples = fit(data, cfg.prior, cfg.fit_config(rec.n, splitmix64(series_seed + 2 * j + 1)));
        QuadratureScheme scheme = QuadratureScheme::default_for(truth.density, predictive_density(samples));
        if (cfg.points_per_axis) scheme.resolution = cfg.points_per_axis;
        rec.hellinger = hellinger(truth.density, predictive_density(samples), scheme).value;
        std::vector<double> per_draw;
        per_draw.reserve(samples.draws.size());
        for (const auto& draw : samples.draws) {
          const DensityFunction q = as_density(draw);
          QuadratureScheme s = QuadratureScheme::default_for(truth.density, q);
          if (cfg.points_per_axis) s.resolution = cfg.points_per_axis;
          per_draw.push_back(hellinger(truth.density, q, s).value);
        }
        const double m = static_cast<double>(per_draw.size());
        double mean = 0.0, var = 0.0;
        for (double v : per_draw) mean += v;
        mean /= m;
        for (double v : per_draw) var += (v - mean) * (v - mean);
        rec.draw_hellinger = mean;
        rec.se = per_draw.size() > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0;
        rec.ok = std::isfinite(rec.hellinger);
      } catch (const FitAborted&) {
        rec.ok = false;
      }
      if (cfg.timing)
        rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });
  summarize(result, cfg.replications);
  return result;
}

void summarize(RateRunResult& result, std::size_t replications) {
  std::sort(result.records.begin(), result.records.end(),
            [](const RateRecord& a, const RateRecord& b) { return std::tie(a.n, a.rep) < std::tie(b.n, b.rep); });
  result.per_n.clear();
  result.failed = 0;
  for (std::size_t i = 0; i < result.records.size();) {
    RateSummaryRow row;
    row.n = result.records[i].n;
    std::vector<double> errs;
    for (; i < result.records.size() && result.records[i].n == row.n; ++i) {
      if (result.records[i].ok)
        errs.push_back(result.records[i].hellinger);
      else
        ++row.failed;
    }
    result.failed += row.failed;
    row.ok = errs.size();
    if (!errs.empty()) {
      const double m = static_cast<double>(errs.size());
      for (double e : errs) row.mean += e;
      row.mean /= m;
      double var = 0.0;
      for (double e : errs) var += (e - row.mean) * (e - row.mean);
      row.se = errs.size() > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0;
      row.median = median_of(errs);
    }
    result.per_n.push_back(row);
  }

  std::vector<double> x, y, v;
  for (const auto& row : result.per_n) {
    if (!row.ok || !(row.mean > 0.0)) continue;
    x.push_back(std::log(static_cast<double>(row.n)));
    y.push_back(std::log(row.mean));
    v.push_back((row.se / row.mean) * (row.se / row.mean));
  }
  if (x.size() < 2) {
    result.slope = result.intercept = result.ci_lo = result.ci_hi = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xbar += x[i];
    ybar += y[i];
  }
  xbar /= static_cast<double>(x.size());
  ybar /= static_cast<double>(x.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (y[i] - ybar);
  }
  result.slope = sxy / sxx;
  result.intercept = ybar - result.slope * xbar;
  double var_slope = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double c = (x[i] - xbar) / sxx;
    var_slope += c * c * v[i];
  }
  const double df = static_cast<double>(std::max<std::size_t>(replications, 2) - 1);
  const double t = boost::math::quantile(boost::math::students_t(df), 0.975);
  result.ci_lo = result.slope - t * std::sqrt(var_slope);
  result.ci_hi = result.slope + t * std::sqrt(var_slope);
}

ReportPaths ReportPaths::in(const std::filesystem::path& dir) {
  return ReportPaths{dir / "rates.csv", dir / "rates_summary.csv", dir / "rates.svg"};
}

std::string rates_csv(const std::vector<RateRunResult>& results, bool timing) {
  std::ostringstream out;
  out << "series,n,rep,hellinger,se,draw_hellinger,runtime_s,status\n";
  for (const auto& r : results)
    for (const auto& rec : r.records) {
      out << rec.series << ',' << rec.n << ',' << rec.rep << ',';
      if (rec.ok)
        out << format_double(rec.hellinger) << ',' << format_double(rec.se) << ',' << format_double(rec.draw_hellinger);
      else
        out << "NA,NA,NA";
      out << ',' << (timing && std::isfinite(rec.runtime_s) ? format_double(rec.runtime_s) : std::string("NA")) << ','
          << (rec.ok ? "ok" : "failed") << '\n';
    }
  return out.str();
}

std::string summary_csv(const std::vector<RateRunResult>& results) {
  std::ostringstream out;
  out << "series,slope,ci_lo,ci_hi,target,failed\n";
  for (const auto& r : results)
    out << r.series << ',' << format_double(r.slope) << ',' << format_double(r.ci_lo) << ','
        << format_double(r.ci_hi) << ',' << format_double(r.target) << ',' << r.failed << '\n';
  return out.str();
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string rates_svg(const std::vector<RateRunResult>& results) {
  constexpr double kW = 640, kH = 480, kLeft = 70, kRight = 20, kTop = 20, kBottom = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& r : results)
    for (const auto& row : r.per_n) {
      if (!row.ok || !(row.mean > 0.0)) continue;
      const double lx = std::log10(static_cast<double>(row.n)), ly = std::log10(row.mean);
      x0 = std::min(x0, lx);
      x1 = std::max(x1, lx);
      y0 = std::min(y0, ly);
      y1 = std::max(y1, ly);
    }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  const double ypad = 0.1 * (y1 - y0);
  y0 -= ypad;
  y1 += ypad;
  auto px = [&](double lx) { return kLeft + (lx - x0) / (x1 - x0) * (kW - kLeft - kRight); };
  auto py = [&](double ly) { return kTop + (y1 - ly) / (y1 - y0) * (kH - kTop - kBottom); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << ' ' << kH << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">log10 n</text>\n"
    << "<text x=\"18\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << kH / 2
    << ")\">log10 Hellinger error</text>\n";
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    const char* color = colors[k % 4];
    std::string pts;
    double fx = 0.0, fy = 0.0;
    bool first = true;
    for (const auto& row : r.per_n) {
      if (!row.ok || !(row.mean > 0.0)) continue;
      const double lx = std::log10(static_cast<double>(row.n)), ly = std::log10(row.mean);
      if (first) {
        fx = lx;
        fy = ly;
        first = false;
      }
      if (!pts.empty()) pts += ' ';
      pts += fixed(px(lx)) + ',' + fixed(py(ly));
    }
    s << "<polyline class=\"series\" data-series=\"" << r.series << "\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"2\" points=\"" << pts << "\"/>\n";
    if (first) continue;
    if (std::isfinite(r.slope)) {
      const double a = r.intercept / std::numbers::ln10;
      s << "<line class=\"fit\" stroke=\"" << color << "\" stroke-dasharray=\"6,4\" x1=\"" << fixed(px(x0))
        << "\" y1=\"" << fixed(py(a + r.slope * x0)) << "\" x2=\"" << fixed(px(x1)) << "\" y2=\""
        << fixed(py(a + r.slope * x1)) << "\"/>\n";
    }
    s << "<line class=\"target\" stroke=\"" << color << "\" stroke-dasharray=\"2,4\" x1=\"" << fixed(px(fx))
      << "\" y1=\"" << fixed(py(fy)) << "\" x2=\"" << fixed(px(x1)) << "\" y2=\""
      << fixed(py(fy + r.target * (x1 - fx))) << "\"/>\n";
    s << "<text x=\"" << kW - kRight - 150 << "\" y=\"" << kTop + 18 * (k + 1) << "\" fill=\"" << color << "\">"
      << r.series << " slope " << fixed(r.slope) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_report(const std::vector<RateRunResult>& results, const ReportPaths& paths, bool timing) {
  std::size_t ok = 0;
  for (const auto& r : results)
    for (const auto& rec : r.records) ok += rec.ok;
  if (ok == 0) throw UsageError("emit_report: no successful replications");
  const std::string files[3] = {rates_csv(results, timing), summary_csv(results), rates_svg(results)};
  const std::filesystem::path* targets[3] = {&paths.rates_csv, &paths.summary_csv, &paths.plot_svg};
  for (int i = 0; i < 3; ++i) {
    std::ofstream out(*targets[i], std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + targets[i]->string());
    out << files[i];
    if (!out) throw IoError("write failed for " + targets[i]->string());
  }
}

std::vector<RateRecord> read_rates_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("series,n,rep,hellinger", 0) != 0)
    throw IoError("rates csv: missing header");
  std::vector<RateRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) throw IoError("rates csv: expected 8 fields");
    RateRecord r;
    r.series = f[0];
    r.n = std::stoull(f[1]);
    r.rep = std::stoull(f[2]);
    r.ok = f[7] == "ok";
    auto num = [](const std::string& t) {
      return t == "NA" ? std::numeric_limits<double>::quiet_NaN() : parse_double(t);
    };
    r.hellinger = num(f[3]);
    r.se = num(f[4]);
    r.draw_hellinger = num(f[5]);
    r.runtime_s = num(f[6]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace dpmix
