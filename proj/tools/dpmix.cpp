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

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dpmix/approx.hpp"
#include "dpmix/density.hpp"
#include "dpmix/error.hpp"
#include "dpmix/experiments.hpp"
#include "dpmix/inference.hpp"
#include "dpmix/parallel.hpp"
#include "dpmix/prior.hpp"
#include "dpmix/sieve.hpp"

namespace fs = std::filesystem;
using namespace dpmix;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInvariant = 3;

struct PriorSettings {
  double alpha_mass = 1.0;
  double base_tau = 1.0;
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;
  int dim = 1;

  DPPrior make(int dim_override = 0) const {
    const int d = dim_override ? dim_override : dim;
    return DPPrior(BaseMeasure(alpha_mass, base_tau, d), BandwidthPrior{gamma_shape, gamma_rate, d});
  }
};

struct Globals {
  std::string config;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out_dir = ".";
  PriorSettings prior;
};

void load_prior_block(const std::string& path, PriorSettings& p) {
  const auto items = CLI::ConfigTOML().from_file(path);
  for (const auto& item : items) {
    if (item.parents.size() != 1 || item.parents[0] != "prior") continue;
    if (item.inputs.size() != 1) throw UsageError("config: [prior] values must be scalars");
    const std::string& v = item.inputs[0];
    try {
      if (item.name == "alpha_mass") p.alpha_mass = parse_double(v);
      else if (item.name == "base_tau") p.base_tau = parse_double(v);
      else if (item.name == "gamma_shape") p.gamma_shape = parse_double(v);
      else if (item.name == "gamma_rate") p.gamma_rate = parse_double(v);
      else if (item.name == "dim") p.dim = std::stoi(v);
      else throw UsageError("config: unknown [prior] key '" + item.name + "'");
    } catch (const std::invalid_argument&) {
      throw UsageError("config: bad value for prior." + item.name);
    }
  }
}

fs::path output_path(const Globals& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.out_dir) / p;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<double> split_numbers(const std::string& line) {
  std::vector<double> row;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) row.push_back(parse_double(cell));
  return row;
}

std::vector<Point> read_data_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<Point> data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    try {
      row = split_numbers(line);
    } catch (const std::exception&) {
      if (data.empty() && lineno == 1) continue;  // header
      throw UsageError(path + ":" + std::to_string(lineno) + ": not a numeric row");
    }
    if (!data.empty() && row.size() != static_cast<std::size_t>(data.front().dim()))
      throw UsageError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    data.emplace_back(std::move(row));
  }
  if (data.empty()) throw UsageError(path + ": no observations");
  return data;
}

// ---------------------------------------------------------------------------

struct PriorSimArgs {
  std::size_t draws = 100;
  double tail_tol = 1e-3;
  std::string out = "prior_draws.csv";
};

int run_prior_sim(const Globals& g, const PriorSimArgs& a) {
  const DPPrior prior = g.prior.make();
  std::ostringstream csv;
  csv << "draw,atoms,sigma,deficit,largest_weight,density_at_origin\n";
  const std::vector<double> origin(prior.dim(), 0.0);
  for (std::size_t i = 0; i < a.draws; ++i) {
    Rng rng = Rng::stream(g.seed, i);
    const MixtureDensity m = draw_prior_density(prior, a.tail_tol, rng);
    double top = 0.0;
    for (double w : m.mixing().weights()) top = std::max(top, w);
    csv << i << ',' << m.mixing().size() << ',' << format_double(m.sigma()) << ',' << format_double(m.deficit())
        << ',' << format_double(top) << ',' << format_double(m.pdf(origin)) << '\n';
  }
  write_file(output_path(g, a.out), csv.str());
  return 0;
}

struct FitArgs {
  std::string data;
  std::size_t iters = 2000;
  std::size_t burnin = 1000;
  std::size_t thin = 1;
  std::size_t trunc = 0;
  std::string out = "fit_samples.txt";
  std::string trace = "fit_trace.csv";
};

int run_fit(const Globals& g, const FitArgs& a) {
  const auto data = read_data_csv(a.data);
  const DPPrior prior = g.prior.make(data.front().dim());
  FitConfig fc;
  fc.iterations = a.iters;
  fc.burn_in = a.burnin;
  fc.thin = a.thin;
  fc.truncation = a.trunc;
  fc.seed = g.seed;
  PosteriorSampleSet samples;
  try {
    samples = fit(data, prior, fc);
  } catch (const FitAborted& e) {
    std::cerr << e.what() << '\n' << e.state_dump();
    return kExitInvariant;
  }
  std::ostringstream records;
  for (const auto& m : samples.draws) write_mixture(records, m);
  write_file(output_path(g, a.out), records.str());

  std::ostringstream trace;
  trace << "iteration,log_joint\n";
  for (std::size_t i = 0; i < samples.log_joint_trace.size(); ++i)
    trace << i + 1 << ',' << format_double(samples.log_joint_trace[i]) << '\n';
  write_file(output_path(g, a.trace), trace.str());
  std::cerr << "retained " << samples.draws.size() << " draws, T = " << samples.truncation
            << ", sigma acceptance " << samples.acceptance << '\n';
  return 0;
}

struct RatesArgs {
  std::string kind = "both";
  std::vector<std::size_t> n{100, 316, 1000, 3162};
  std::size_t reps = 8;
  std::size_t draws = 50;
  std::size_t trunc = 0;
  std::size_t grid_points = 0;
  bool timing = false;
};

int run_rates(const Globals& g, const RatesArgs& a) {
  ExperimentConfig cfg;
  cfg.prior = g.prior.make();
  cfg.n_grid = a.n;
  cfg.replications = a.reps;
  cfg.seed = g.seed;
  cfg.retained_draws = a.draws;
  cfg.truncation = a.trunc;
  cfg.points_per_axis = a.grid_points;
  cfg.timing = a.timing;
  std::vector<TrueDensitySpec> specs;
  if (a.kind == "both" || a.kind == "supersmooth") specs.push_back(TrueDensitySpec::supersmooth(cfg.prior.dim()));
  if (a.kind == "both" || a.kind == "ordinarysmooth")
    specs.push_back(TrueDensitySpec::ordinary_smooth(cfg.prior.dim()));
  std::vector<RateRunResult> results;
  for (const auto& s : specs) {
    results.push_back(run_rate_experiment(s, cfg));
    const auto& r = results.back();
    std::cerr << r.series << ": slope " << r.slope << " [" << r.ci_lo << ", " << r.ci_hi << "], target " << r.target
              << ", failed " << r.failed << '\n';
  }
  emit_report(results, ReportPaths::in(g.out_dir), a.timing);
  return 0;
}

struct SieveAuditArgs {
  std::uint64_t n = 1000;
  int dim = 1;
  std::string regime = "supersmooth";
  double s = 1.0;
  double beta = 0.0;  // 0 selects 2/(4+d)
  double q = 0.0;     // 0 selects (4d+2)/(d+4)
  std::size_t nsim = 10000;
  std::string out = "sieve_audit.csv";
};

int run_sieve_audit(const Globals& g, const SieveAuditArgs& a) {
  const DPPrior prior = g.prior.make(a.dim);
  Schedule sch;
  if (a.regime == "supersmooth") {
    sch = schedule_supersmooth(a.n, a.s, a.dim);
  } else {
    const double beta = a.beta > 0.0 ? a.beta : 2.0 / (4.0 + a.dim);
    const double q = a.q > 0.0 ? a.q : (4.0 * a.dim + 2.0) / (a.dim + 4.0);
    sch = schedule_holder(a.n, beta, q, a.s, a.dim);
  }
  const SieveSpec& sp = sch.spec;
  if (!(sp.eps < 1.0))
    throw UsageError("sieve-audit: the schedule gives eps >= 1 at n = " + std::to_string(a.n) + "; raise --n or lower --s");
  const auto rep = prior_complement_mass(sp, prior, a.nsim, g.seed);
  const double net_log = build_sieve_net(sp).log_size();
  const double bound = log_covering_bound(sp);

  std::ostringstream csv;
  csv << "regime,n,dim,s,eps,box_half_width,sigma_floor,sigma_steps,active_atoms,"
         "atoms_term,sigma_term,stick_term,union_sum,"
         "shape_atoms,shape_sigma_low,shape_sigma_high,shape_stick,"
         "mc_estimate,se,n_sim,consistent,exact_net_log_size,bound_value\n";
  csv << a.regime << ',' << a.n << ',' << a.dim << ',' << format_double(a.s) << ',' << format_double(sp.eps) << ','
      << format_double(sp.box_half_width) << ',' << format_double(sp.sigma_floor) << ',' << sp.sigma_steps << ','
      << sp.active_atoms << ',' << format_double(rep.union_terms.atoms_outside) << ','
      << format_double(rep.union_terms.sigma_outside) << ',' << format_double(rep.union_terms.stick_tail) << ','
      << format_double(rep.union_terms.sum());
  for (double t : rep.shape_terms) csv << ',' << format_double(t);
  csv << ',' << format_double(rep.mc_estimate) << ',' << format_double(rep.se) << ',' << rep.n_sim << ','
      << (rep.consistent() ? "true" : "false") << ',' << format_double(net_log) << ',' << format_double(bound)
      << '\n';
  write_file(output_path(g, a.out), csv.str());
  if (!rep.consistent()) {
    std::cerr << "complement mass estimate outside its analytic window\n";
    return kExitInvariant;
  }
  return 0;
}

struct ApproxAuditArgs {
  std::string check = "discretize";
  std::vector<double> sigmas;
  std::vector<double> eps;
  std::string density;
  std::vector<std::size_t> parts{2, 4, 8};
  std::size_t nsim = 200000;
  std::size_t reps = 5;
  std::string out;
};

std::string audit_discretize(const ApproxAuditArgs& a) {
  const auto sigmas = a.sigmas.empty() ? std::vector<double>{0.2, 0.5} : a.sigmas;
  const auto eps = a.eps.empty() ? std::vector<double>{0.1, 0.03, 0.01} : a.eps;
  const std::string name = a.density.empty() ? "uniform" : a.density;
  const CompactDensity p0 = name == "uniform" ? uniform_density(1, 1.0)
                            : name == "triweight" ? triweight_density(1)
                                                  : throw UsageError("discretize: density must be uniform or triweight");
  std::ostringstream csv;
  csv << "density,sigma,eps,nodes_per_axis,cells_per_axis,atoms,degraded_cells,sup_error,l1_error,budget_form,"
         "sup_constant,budget_ratio\n";
  for (double s : sigmas)
    for (double e : eps) {
      const auto r = discretize(MixingSource::of(p0), s, e);
      csv << name << ',' << format_double(s) << ',' << format_double(e) << ',' << r.nodes_per_axis << ','
          << r.cells_per_axis << ',' << r.atom_count << ',' << r.degraded_cells << ',' << format_double(r.sup_error)
          << ',' << format_double(r.l1_error) << ',' << format_double(r.budget_form) << ','
          << format_double(r.sup_error * s / e) << ','
          << format_double(static_cast<double>(r.atom_count) / r.budget_form) << '\n';
    }
  return csv.str();
}

CompactDensity library_density(const std::string& name) {
  if (name == "triweight") return triweight_density(1);
  if (name == "quadweight") return quadweight_density(1);
  if (name == "triangle") return triangle_density(1);
  if (name == "uniform") return uniform_density(1, 1.0);
  throw UsageError("unknown density '" + name + "'");
}

std::string audit_smoothing(const ApproxAuditArgs& a) {
  std::vector<double> sigmas = a.sigmas;
  if (sigmas.empty())
    for (int i = 0; i <= 8; ++i) sigmas.push_back(0.1 * std::pow(0.1, i / 8.0));
  const std::vector<std::string> names =
      a.density.empty() ? std::vector<std::string>{"triweight", "quadweight", "triangle"}
                        : std::vector<std::string>{a.density};
  std::ostringstream csv;
  csv << "density,sigma,hellinger,error,slope,intercept\n";
  for (const auto& name : names) {
    const auto r = smoothing_rate_audit(library_density(name), sigmas);
    for (std::size_t i = 0; i < r.sigmas.size(); ++i)
      csv << name << ',' << format_double(r.sigmas[i]) << ',' << format_double(r.values[i]) << ','
          << format_double(r.errors[i]) << ',' << format_double(r.slope) << ',' << format_double(r.intercept)
          << '\n';
  }
  return csv.str();
}

std::string audit_dirichlet(const Globals& g, const ApproxAuditArgs& a) {
  const auto eps = a.eps.empty() ? std::vector<double>{0.12, 0.1, 0.08} : a.eps;
  std::ostringstream csv;
  csv << "eps,N,estimate,se,hits,n_sim,log_estimate,c_hat,log_C\n";
  for (std::size_t k = 0; k < eps.size(); ++k) {
    std::vector<SmallBallEstimate> est;
    for (std::size_t i = 0; i < a.parts.size(); ++i) {
      const std::size_t n = a.parts[i];
      const std::vector<double> alphas(n, 1.0), target(n, 1.0 / static_cast<double>(n));
      est.push_back(dirichlet_small_ball(alphas, target, eps[k], a.nsim, splitmix64(g.seed + 1000 * k + i)));
    }
    const auto fitd = fit_small_ball_decay(est);
    for (const auto& e : est)
      csv << format_double(e.eps) << ',' << e.dim << ',' << format_double(e.estimate) << ',' << format_double(e.se)
          << ',' << e.hits << ',' << e.n_sim << ',' << format_double(e.log_estimate()) << ','
          << format_double(fitd.c_hat) << ',' << format_double(fitd.log_C) << '\n';
  }
  return csv.str();
}

std::string audit_perturbation(const Globals& g, const ApproxAuditArgs& a) {
  const auto sigmas = a.sigmas.empty() ? std::vector<double>{0.2, 0.5} : a.sigmas;
  const auto eps = a.eps.empty() ? std::vector<double>{0.1, 0.03} : a.eps;
  const BaseMeasure base = g.prior.make(1).base;
  const CompactDensity p0 = uniform_density(1, 1.0);
  std::ostringstream csv;
  csv << "sigma,eps,rep,cells,max_diameter,mass_discrepancy,lhs_l1,rhs_l1,ratio_l1,lhs_sup,rhs_sup,ratio_sup\n";
  for (std::size_t si = 0; si < sigmas.size(); ++si)
    for (std::size_t ei = 0; ei < eps.size(); ++ei) {
      const double s = sigmas[si], e = eps[ei];
      const DiscreteMeasure fs = discretize(MixingSource::of(p0), s, e, DiscretizeOptions{1.0, 0, false}).measure;
      const auto part = build_thickness_partition(fs, s, e, 2.0, base);
      for (std::size_t rep = 0; rep < a.reps; ++rep) {
        Rng rng = Rng::stream(g.seed, (si * eps.size() + ei) * a.reps + rep);
        std::vector<double> loc(fs.size()), w(fs.size());
        const double radius = 0.5 * part.ball_diameter;
        for (std::size_t h = 0; h < fs.size(); ++h) {
          loc[h] = fs.location(h)[0] + radius * (2.0 * rng.uniform() - 1.0);
          w[h] = fs.weight(h) * (1.0 + e * (2.0 * rng.uniform() - 1.0));
        }
        double total = 0.0;
        for (double v : w) total += v;
        for (double& v : w) v /= total;
        const DiscreteMeasure f(1, std::move(loc), std::move(w));
        const auto r = perturbation_bound_check(f, fs, part.scheme, s);
        csv << format_double(s) << ',' << format_double(e) << ',' << rep << ',' << part.scheme.size() << ','
            << format_double(r.max_diameter) << ',' << format_double(r.mass_discrepancy) << ','
            << format_double(r.lhs_l1) << ',' << format_double(r.rhs_l1) << ',' << format_double(r.ratio_l1) << ','
            << format_double(r.lhs_sup) << ',' << format_double(r.rhs_sup) << ',' << format_double(r.ratio_sup)
            << '\n';
      }
    }
  return csv.str();
}

int run_approx_audit(const Globals& g, const ApproxAuditArgs& a) {
  std::string csv;
  if (a.check == "discretize") csv = audit_discretize(a);
  else if (a.check == "smoothing") csv = audit_smoothing(a);
  else if (a.check == "dirichlet") csv = audit_dirichlet(g, a);
  else csv = audit_perturbation(g, a);
  write_file(output_path(g, a.out.empty() ? "approx_" + a.check + ".csv" : a.out), csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dirichlet-process Gaussian location mixtures: sampling, sieve and rate audits", "dpmix"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.set_config("--config", "", "TOML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1u, 1024u))->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();

  PriorSimArgs prior_args;
  auto* prior_cmd = app.add_subcommand("prior-sim", "Draw densities from the prior");
  prior_cmd->add_option("--draws", prior_args.draws)->check(CLI::PositiveNumber)->capture_default_str();
  prior_cmd->add_option("--tail-tol", prior_args.tail_tol)->check(CLI::Range(1e-12, 0.5))->capture_default_str();
  prior_cmd->add_option("--out", prior_args.out)->capture_default_str();

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Posterior sampling by blocked Gibbs");
  fit_cmd->add_option("--data", fit_args.data, "CSV, one observation per row")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--iters", fit_args.iters)->capture_default_str();
  fit_cmd->add_option("--burnin", fit_args.burnin)->capture_default_str();
  fit_cmd->add_option("--thin", fit_args.thin)->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_option("--trunc", fit_args.trunc, "Truncation level, 0 for the default")->capture_default_str();
  fit_cmd->add_option("--out", fit_args.out)->capture_default_str();
  fit_cmd->add_option("--trace", fit_args.trace)->capture_default_str();

  RatesArgs rates_args;
  auto* rates_cmd = app.add_subcommand("rates", "Posterior contraction experiment");
  rates_cmd->add_option("--kind", rates_args.kind)
      ->check(CLI::IsMember({"both", "supersmooth", "ordinarysmooth"}))
      ->capture_default_str();
  rates_cmd->add_option("--n", rates_args.n, "Sample sizes")->delimiter(',');
  rates_cmd->add_option("--reps", rates_args.reps)->check(CLI::PositiveNumber)->capture_default_str();
  rates_cmd->add_option("--draws", rates_args.draws, "Retained draws per fit")->capture_default_str();
  rates_cmd->add_option("--trunc", rates_args.trunc)->capture_default_str();
  rates_cmd->add_option("--grid-points", rates_args.grid_points)->capture_default_str();
  rates_cmd->add_flag("--timing", rates_args.timing, "Record wall-clock time per fit");

  SieveAuditArgs sieve_args;
  auto* sieve_cmd = app.add_subcommand("sieve-audit", "Sieve complement mass and net size for a schedule");
  sieve_cmd->add_option("--n", sieve_args.n)->check(CLI::Range(std::uint64_t{3}, std::uint64_t{1} << 40))
      ->capture_default_str();
  sieve_cmd->add_option("--dim", sieve_args.dim)->check(CLI::Range(1, 3))->capture_default_str();
  sieve_cmd->add_option("--regime", sieve_args.regime)
      ->check(CLI::IsMember({"supersmooth", "holder"}))
      ->capture_default_str();
  sieve_cmd->add_option("--s", sieve_args.s)->check(CLI::PositiveNumber)->capture_default_str();
  sieve_cmd->add_option("--beta", sieve_args.beta)->check(CLI::Range(0.0, 0.5))->capture_default_str();
  sieve_cmd->add_option("--q", sieve_args.q)->check(CLI::NonNegativeNumber)->capture_default_str();
  sieve_cmd->add_option("--nsim", sieve_args.nsim)->check(CLI::Range(std::size_t{1000}, std::size_t{100000000}))
      ->capture_default_str();
  sieve_cmd->add_option("--out", sieve_args.out)->capture_default_str();

  ApproxAuditArgs approx_args;
  auto* approx_cmd = app.add_subcommand("approx-audit", "Approximation-theory checks");
  approx_cmd->add_option("--check", approx_args.check)
      ->check(CLI::IsMember({"discretize", "smoothing", "dirichlet", "perturbation"}))
      ->capture_default_str();
  approx_cmd->add_option("--sigmas", approx_args.sigmas)->delimiter(',');
  approx_cmd->add_option("--eps", approx_args.eps)->delimiter(',');
  approx_cmd->add_option("--density", approx_args.density);
  approx_cmd->add_option("--parts", approx_args.parts, "Dirichlet dimensions")->delimiter(',');
  approx_cmd->add_option("--nsim", approx_args.nsim)->check(CLI::PositiveNumber)->capture_default_str();
  approx_cmd->add_option("--reps", approx_args.reps)->check(CLI::PositiveNumber)->capture_default_str();
  approx_cmd->add_option("--out", approx_args.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (!g.config.empty()) load_prior_block(g.config, g.prior);
    set_thread_count(g.threads);
    fs::create_directories(g.out_dir);
    if (*prior_cmd) return run_prior_sim(g, prior_args);
    if (*fit_cmd) return run_fit(g, fit_args);
    if (*rates_cmd) return run_rates(g, rates_args);
    if (*sieve_cmd) return run_sieve_audit(g, sieve_args);
    return run_approx_audit(g, approx_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant failure: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
