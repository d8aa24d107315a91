// Command-line front end: simulate, fit, tune, mc, metrics.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slfpca/slfpca.hpp"

namespace {

using namespace slfpca;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;

  // simulate / mc scenario
  int case_id = 1;
  std::size_t n = 200;
  std::string design = "dense";
  std::uint64_t seed = 1;
  std::vector<double> eigenvalues{9.0, 4.0};
  std::string out_data, out_truth;

  // data and basis
  std::string data;
  double T = 10.0;
  int K = 9;
  int d = 3;

  // fit
  int p = 2;
  double kappa_mu = -1.0;  // < 0: choose by GCV
  double kappa_theta = 1e-4;
  double lambda = 0.0;
  int max_outer = 100;
  double shrink_threshold = 1e-3;
  std::string boundary = "zero-start";
  int grid_points = kExportGridSize;
  std::string out_model, out_grid;

  // tune / mc
  std::vector<double> kappa_mu_grid, kappa_theta_grid, lambda_grid;
  std::string grid_file;
  std::string out_table, out_best;
  int runs = 1;
  std::string out_runs, out_summary;

  // metrics
  std::string model, truth;
  int support_grid = 1001;
};

void add_basis_flags(CLI::App* sub, Options& o) {
  sub->add_option("--T", o.T, "Domain end T (domain is [0, T])")->check(CLI::PositiveNumber);
  sub->add_option("--K", o.K, "Number of interior knots")->check(CLI::NonNegativeNumber);
  sub->add_option("--d", o.d, "Spline degree")->check(CLI::Range(1, 10));
}

void add_fit_flags(CLI::App* sub, Options& o) {
  sub->add_option("--p", o.p, "Number of FPCs")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "Seed for the initial scores");
  sub->add_option("--max-outer", o.max_outer, "Maximum outer MM iterations")->check(CLI::PositiveNumber);
  sub->add_option("--shrink-threshold", o.shrink_threshold, "Coefficients below this are set to zero")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--boundary", o.boundary, "Boundary coefficient rule")
      ->check(CLI::IsMember({"off", "zero-start", "fixed-zero"}));
}

void add_grid_flags(CLI::App* sub, Options& o) {
  sub->add_option("--kappa-mu-grid", o.kappa_mu_grid, "Candidates for kappa_mu (GCV)");
  sub->add_option("--kappa-theta-grid", o.kappa_theta_grid, "Candidates for kappa_theta (BIC)");
  sub->add_option("--lambda-grid", o.lambda_grid, "Candidates for lambda (BIC), must include 0");
  sub->add_option("--grid", o.grid_file, "JSON file {kappa_mu:[], kappa_theta:[], lambda:[]}");
}

void add_scenario_flags(CLI::App* sub, Options& o) {
  sub->add_option("--case", o.case_id, "Simulation case")->check(CLI::Range(1, 4));
  sub->add_option("--n", o.n, "Number of subjects")->check(CLI::PositiveNumber);
  sub->add_option("--design", o.design, "Sampling design")->check(CLI::IsMember({"dense", "sparse"}));
  sub->add_option("--eigenvalues", o.eigenvalues, "Score variances lambda_1 lambda_2")->expected(2);
}

struct Subcommands {
  CLI::App* simulate;
  CLI::App* fit;
  CLI::App* tune;
  CLI::App* mc;
  CLI::App* metrics;
};

Subcommands build_app(CLI::App& app, Options& o) {
  app.require_subcommand(1);
  app.add_option("--config", o.config, "JSON file of flag values; explicit flags take precedence");
  Subcommands s{};

  s.simulate = app.add_subcommand("simulate", "Generate a simulated dataset and its truth");
  add_scenario_flags(s.simulate, o);
  s.simulate->add_option("--seed", o.seed, "Random seed");
  s.simulate->add_option("--out-data", o.out_data, "Dataset CSV to write");
  s.simulate->add_option("--out-truth", o.out_truth, "Truth JSON to write");

  s.fit = app.add_subcommand("fit", "Fit the model with fixed penalties");
  s.fit->add_option("--data", o.data, "Dataset CSV (subject,time,y)");
  add_basis_flags(s.fit, o);
  add_fit_flags(s.fit, o);
  s.fit->add_option("--kappa-mu", o.kappa_mu, "Mean roughness penalty (default: chosen by GCV)")
      ->check(CLI::NonNegativeNumber);
  s.fit->add_option("--kappa-theta", o.kappa_theta, "Eigenfunction roughness penalty")->check(CLI::NonNegativeNumber);
  s.fit->add_option("--lambda", o.lambda, "fSCAD sparseness parameter")->check(CLI::NonNegativeNumber);
  s.fit->add_option("--out-model", o.out_model, "Model JSON to write");
  s.fit->add_option("--out-grid", o.out_grid, "Grid CSV to write");
  s.fit->add_option("--grid-points", o.grid_points, "Points of the grid CSV")->check(CLI::Range(2, 1000000));

  s.tune = app.add_subcommand("tune", "Select penalties by GCV and BIC, then refit");
  s.tune->add_option("--data", o.data, "Dataset CSV (subject,time,y)");
  add_basis_flags(s.tune, o);
  add_fit_flags(s.tune, o);
  add_grid_flags(s.tune, o);
  s.tune->add_option("--out-table", o.out_table, "BIC table CSV to write");
  s.tune->add_option("--out-best", o.out_best, "Best configuration JSON to write");
  s.tune->add_option("--out-model", o.out_model, "Model JSON of the refit");
  s.tune->add_option("--out-grid", o.out_grid, "Grid CSV of the refit");
  s.tune->add_option("--grid-points", o.grid_points, "Points of the grid CSV")->check(CLI::Range(2, 1000000));

  s.mc = app.add_subcommand("mc", "Monte Carlo study of a simulation scenario");
  add_scenario_flags(s.mc, o);
  s.mc->add_option("--runs", o.runs, "Number of runs")->check(CLI::PositiveNumber);
  s.mc->add_option("--seed", o.seed, "Base seed; run r uses seed + r");
  s.mc->add_option("--K", o.K, "Interior knots of the fitting basis")->check(CLI::NonNegativeNumber);
  s.mc->add_option("--d", o.d, "Degree of the fitting basis")->check(CLI::Range(1, 10));
  s.mc->add_option("--p", o.p, "Number of FPCs")->check(CLI::PositiveNumber);
  s.mc->add_option("--max-outer", o.max_outer, "Maximum outer MM iterations")->check(CLI::PositiveNumber);
  add_grid_flags(s.mc, o);
  s.mc->add_option("--out-runs", o.out_runs, "Per-run CSV to write");
  s.mc->add_option("--out-summary", o.out_summary, "Summary CSV to write");

  s.metrics = app.add_subcommand("metrics", "Compare a fitted model with a truth JSON");
  s.metrics->add_option("--model", o.model, "Model JSON");
  s.metrics->add_option("--truth", o.truth, "Truth JSON");
  s.metrics->add_option("--support-grid", o.support_grid, "Grid size for support metrics")->check(CLI::Range(100, 10000000));
  return s;
}

// ---------------------------------------------------------------------------
// --config: values from a JSON object become flags unless given explicitly.

std::string json_scalar_text(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return format_double(v.get<double>());
  throw UsageError("config: unsupported value " + v.dump());
}

std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& path,
                                      const CLI::App* active) {
  Json cfg = detail::read_json_file(path);
  if (!cfg.is_object()) throw UsageError("config: '" + path + "' must hold a JSON object");
  std::vector<std::string> extra;
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    std::string name = it.key();
    std::replace(name.begin(), name.end(), '_', '-');
    const CLI::Option* opt = nullptr;
    try {
      opt = active->get_option("--" + name);
    } catch (const CLI::OptionNotFound&) {
      throw UsageError("config: unknown key '" + it.key() + "' for subcommand " + active->get_name());
    }
    if (opt->count() > 0) continue;
    extra.push_back("--" + name);
    if (it.value().is_array()) {
      for (const auto& v : it.value()) extra.push_back(json_scalar_text(v));
    } else {
      extra.push_back(json_scalar_text(it.value()));
    }
  }
  std::vector<std::string> merged = args;
  merged.insert(merged.end(), extra.begin(), extra.end());
  return merged;
}

void parse(CLI::App& app, std::vector<std::string> args) {
  std::reverse(args.begin(), args.end());
  app.parse(args);
}

// ---------------------------------------------------------------------------

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required flag ") + flag);
}

std::vector<double> dedupe(const std::vector<double>& values, const char* what) {
  std::vector<double> out;
  for (double v : values)
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  if (out.size() != values.size())
    std::cerr << "warning: removed " << values.size() - out.size() << " duplicate " << what << " candidate(s)\n";
  return out;
}

TuningGrid grid_from(const Options& o) {
  TuningGrid g;
  if (!o.grid_file.empty()) {
    const Json j = detail::read_json_file(o.grid_file);
    if (!j.is_object()) throw DataError("grid file must hold a JSON object");
    auto list = [&](const char* key, std::vector<double>& dst) {
      if (!j.contains(key)) return;
      try {
        dst = j.at(key).get<std::vector<double>>();
      } catch (const Json::exception&) {
        throw DataError(std::string("grid file: '") + key + "' must be an array of numbers");
      }
    };
    list("kappa_mu", g.kappa_mu_candidates);
    list("kappa_theta", g.kappa_theta_candidates);
    list("lambda", g.lambda_candidates);
  }
  if (!o.kappa_mu_grid.empty()) g.kappa_mu_candidates = o.kappa_mu_grid;
  if (!o.kappa_theta_grid.empty()) g.kappa_theta_candidates = o.kappa_theta_grid;
  if (!o.lambda_grid.empty()) g.lambda_candidates = o.lambda_grid;
  g.kappa_mu_candidates = dedupe(g.kappa_mu_candidates, "kappa_mu");
  g.kappa_theta_candidates = dedupe(g.kappa_theta_candidates, "kappa_theta");
  g.lambda_candidates = dedupe(g.lambda_candidates, "lambda");
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return g;
}

FitConfig fit_config_from(const Options& o) {
  FitConfig c;
  c.num_fpcs = o.p;
  c.penalties.kappa_theta = o.kappa_theta;
  c.penalties.lambda = o.lambda;
  c.max_outer_iter = o.max_outer;
  c.shrink_threshold = o.shrink_threshold;
  c.boundary = boundary_rule_from_string(o.boundary);
  c.seed = o.seed;
  return c;
}

void write_to(const std::string& path, const std::string& text) { detail::write_text_file(path, text); }

void print_report(const FitReport& r, const FitConfig& c) {
  std::cout << "converged: " << (r.converged ? "yes" : "no") << " (outer iterations " << r.outer_iterations << ")\n";
  if (c.penalties.lambda > 0.0)
    std::cout << "sparseness: on (lambda = " << format_double(c.penalties.lambda) << ")\n";
  else
    std::cout << "sparseness: off\n";
  std::cout << "kappa_mu: " << format_double(c.penalties.kappa_mu) << "\n";
  std::cout << "kappa_theta: " << format_double(c.penalties.kappa_theta) << "\n";
  std::cout << "negative log-likelihood: " << format_double(r.neg_log_likelihood) << "\n";
  std::cout << "penalized objective: " << format_double(r.penalized_objective) << "\n";
  for (std::size_t k = 0; k < r.df.size(); ++k) {
    std::cout << "fpc " << k + 1 << ": df " << format_double(r.df[k]) << ", joint "
              << (r.fpc_converged[k] ? "converged" : "not converged");
    if (r.dead[k]) std::cout << ", all coefficients zero";
    std::cout << "\n";
  }
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Options& o) {
  require(o.out_data, "--out-data");
  SimScenario sc;
  sc.case_id = o.case_id;
  sc.n = o.n;
  sc.design = sampling_design_from_string(o.design);
  sc.eigenvalues = {o.eigenvalues.at(0), o.eigenvalues.at(1)};
  sc.seed = o.seed;
  const SimData sim = generate(sc);
  write_csv(o.out_data, sim.data);
  if (!o.out_truth.empty()) save_truth(o.out_truth, sim.truth);
  std::cout << "wrote " << sim.data.total_count() << " observations of " << sim.data.subject_count() << " subjects\n";
  return 0;
}

int cmd_fit(const Options& o) {
  require(o.data, "--data");
  const BinaryFunctionalDataset data = load_csv(o.data, o.T);
  const BSplineBasis basis(o.T, o.K, o.d);
  const FitContext ctx(data, basis);
  FitConfig cfg = fit_config_from(o);
  const Initialization init = init_from_naive_fpca(data, basis, cfg.num_fpcs, cfg.seed);
  if (init.rank_warning) std::cerr << "warning: pooled covariance has fewer than p positive eigenvalues\n";
  if (o.kappa_mu < 0.0) {
    SlfpcaModel mean_only = init.model;
    mean_only.scores.setZero();
    const Vector x0 = linear_predictor(ctx.design(), init.model);
    const Vector comp = x0 - linear_predictor(ctx.design(), mean_only);
    Vector ztilde(x0.size());
    for (Eigen::Index r = 0; r < x0.size(); ++r)
      ztilde[r] = working_response(x0[r], static_cast<int>(ctx.signed_outcomes()[r])) - comp[r];
    cfg.penalties.kappa_mu = gcv_kappa_mu(ctx.design(), ztilde, ctx.roughness(), default_smoothing_candidates()).best_kappa;
  } else {
    cfg.penalties.kappa_mu = o.kappa_mu;
  }
  const FitResult res = fit(ctx, cfg, init.model);
  print_report(res.report, cfg);
  if (!o.out_model.empty()) save_model(o.out_model, res.model, &cfg, &res.report);
  if (!o.out_grid.empty()) write_grid_csv(o.out_grid, res.model, o.grid_points);
  return 0;
}

int cmd_tune(const Options& o) {
  require(o.data, "--data");
  const TuningGrid grid = grid_from(o);
  const BinaryFunctionalDataset data = load_csv(o.data, o.T);
  const BSplineBasis basis(o.T, o.K, o.d);
  const FitConfig cfg = fit_config_from(o);
  TuningResult res;
  try {
    res = select_tuning(data, basis, grid, cfg);
  } catch (const NumericalError&) {
    std::cerr << "error: every grid cell failed\n";
    throw;
  }
  std::ostringstream table;
  write_tuning_csv(table, res);
  std::cout << table.str();
  if (!o.out_table.empty()) write_to(o.out_table, table.str());
  const TuningRow& best = res.table[res.best_index];
  std::cout << "best: kappa_mu " << format_double(res.best.kappa_mu) << ", kappa_theta " << format_double(best.kappa_theta)
            << ", lambda " << format_double(best.lambda) << ", bic " << format_double(best.bic) << "\n";
  FitConfig best_cfg = cfg;
  best_cfg.penalties = res.best;
  if (!o.out_best.empty()) {
    Json j{{"kappa_mu", res.best.kappa_mu},
           {"kappa_theta", res.best.kappa_theta},
           {"lambda", res.best.lambda},
           {"bic", best.bic},
           {"df_total", best.df_total}};
    write_to(o.out_best, j.dump(2) + "\n");
  }
  const FitResult& refit = *res.best_fit;
  print_report(refit.report, best_cfg);
  if (!o.out_model.empty()) save_model(o.out_model, refit.model, &best_cfg, &refit.report);
  if (!o.out_grid.empty()) write_grid_csv(o.out_grid, refit.model, o.grid_points);
  return 0;
}

int cmd_mc(const Options& o) {
  const TuningGrid grid = grid_from(o);
  SimScenario sc;
  sc.case_id = o.case_id;
  sc.n = o.n;
  sc.design = sampling_design_from_string(o.design);
  sc.eigenvalues = {o.eigenvalues.at(0), o.eigenvalues.at(1)};
  FitConfig cfg;
  cfg.num_fpcs = o.p;
  cfg.max_outer_iter = o.max_outer;
  FitBasisSpec spec;
  spec.interior_knots = o.K;
  spec.degree = o.d;
  const McSummary s = monte_carlo(sc, cfg, grid, o.runs, o.seed, spec);
  std::ostringstream runs, summary;
  write_mc_runs_csv(runs, s);
  write_mc_summary_csv(summary, s);
  std::cout << runs.str() << summary.str();
  if (!o.out_runs.empty()) write_to(o.out_runs, runs.str());
  if (!o.out_summary.empty()) write_to(o.out_summary, summary.str());
  return 0;
}

int cmd_metrics(const Options& o) {
  require(o.model, "--model");
  require(o.truth, "--truth");
  const SlfpcaModel model = load_model(o.model);
  const TruthTable table = load_truth(o.truth);
  const double T = model.basis.domain_end();
  if (std::abs(T - table.domain_end) > 1e-12 * std::max(1.0, T) ||
      std::abs(table.grid.front()) > 1e-12 || std::abs(table.grid.back() - table.domain_end) > 1e-9 * table.domain_end)
    throw DataError("model domain [0, " + format_double(T) + "] does not match truth domain [0, " +
                    format_double(table.domain_end) + "]");
  SimTruth truth;
  truth.case_id = table.case_id;
  truth.domain_end = table.domain_end;
  truth.mu = table.interpolant(table.mu);
  for (const auto& row : table.phi) truth.phi.push_back(table.interpolant(row));
  std::vector<Function> est;
  for (int k = 0; k < model.num_fpcs(); ++k) est.push_back([&model, k](double t) { return model.eigenfunction_at(k, t); });
  const auto match = match_components(est, truth.phi, T);
  const Function zero = [](double) { return 0.0; };
  std::cout << "ise_mu: " << format_double(ise([&](double t) { return model.mean_at(t); }, truth.mu, false, T)) << "\n";
  for (std::size_t b = 0; b < truth.phi.size(); ++b) {
    const Function& e = match[b] >= 0 ? est[match[b]] : zero;
    const SupportMetrics sm = support_metrics(e, truth.phi[b], o.support_grid, T);
    std::cout << "ise_" << b + 1 << ": " << format_double(ise(e, truth.phi[b], true, T)) << " (estimate "
              << (match[b] >= 0 ? std::to_string(match[b] + 1) : std::string("none")) << ")\n";
    std::cout << "zero_acc_" << b + 1 << ": " << format_double(sm.zero_region_accuracy) << "\n";
    std::cout << "nonzero_acc_" << b + 1 << ": " << format_double(sm.nonzero_region_accuracy) << "\n";
  }
  return 0;
}

int dispatch(const Subcommands& sub, const Options& o) {
  if (sub.simulate->parsed()) return cmd_simulate(o);
  if (sub.fit->parsed()) return cmd_fit(o);
  if (sub.tune->parsed()) return cmd_tune(o);
  if (sub.mc->parsed()) return cmd_mc(o);
  return cmd_metrics(o);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  const char* title = "Sparse logistic functional principal component analysis";
  Options o;
  CLI::App app{title};
  app.fallthrough();
  app.set_version_flag("--version", "slfpca 0.1.0");
  const Subcommands sub = build_app(app, o);
  try {
    parse(app, args);
    if (o.config.empty()) return dispatch(sub, o);
    const std::vector<std::string> merged = merge_config(args, o.config, app.get_subcommands().front());
    Options merged_opts;
    CLI::App again{title};
    again.fallthrough();
    const Subcommands merged_sub = build_app(again, merged_opts);
    parse(again, merged);
    return dispatch(merged_sub, merged_opts);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const OutOfDomain& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitData;
  }
}
