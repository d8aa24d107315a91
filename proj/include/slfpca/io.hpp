#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slfpca/errors.hpp"
#include "slfpca/simulation.hpp"
#include "slfpca/solver.hpp"
#include "slfpca/tuning.hpp"

namespace slfpca {

using Json = nlohmann::ordered_json;

inline constexpr int kExportGridSize = 501;

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[r] = to_std(m.row(r).transpose());
  return out;
}

inline Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t a = 0; a < j.size(); ++a) {
    if (!j[a].is_number()) throw DataError(what + ": expected an array of numbers");
    v[static_cast<Eigen::Index>(a)] = j[a].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, Eigen::Index cols, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array of rows");
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vector_from_json(j[r], what);
    if (row.size() != cols) throw DataError(what + ": row " + std::to_string(r) + " has the wrong length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError("'" + path + "': invalid JSON: " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model.

inline Json basis_to_json(const BSplineBasis& basis) {
  return Json{{"T", basis.domain_end()},
              {"K", basis.interior_knot_count()},
              {"d", basis.degree()},
              {"knots", basis.knot_vector()}};
}

inline BSplineBasis basis_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("T") || !j.contains("K") || !j.contains("d"))
    throw DataError("basis: expected an object with T, K and d");
  try {
    return BSplineBasis(j.at("T").get<double>(), j.at("K").get<int>(), j.at("d").get<int>());
  } catch (const Json::exception& e) {
    throw DataError(std::string("basis: ") + e.what());
  }
}

inline Json config_to_json(const FitConfig& c) {
  return Json{{"p", c.num_fpcs},
              {"kappa_mu", c.penalties.kappa_mu},
              {"kappa_theta", c.penalties.kappa_theta},
              {"lambda", c.penalties.lambda},
              {"scad_a", c.penalties.scad_a},
              {"max_outer_iter", c.max_outer_iter},
              {"max_joint_iter", c.max_joint_iter},
              {"max_sub_iter", c.max_sub_iter},
              {"tol_outer", c.tol_outer},
              {"tol_sub", c.tol_sub},
              {"shrink_threshold", c.shrink_threshold},
              {"boundary", to_string(c.boundary)},
              {"seed", c.seed}};
}

inline Json report_to_json(const FitReport& r) {
  std::vector<bool> fpc(r.fpc_converged.begin(), r.fpc_converged.end());
  std::vector<bool> dead(r.dead.begin(), r.dead.end());
  return Json{{"converged", r.converged},
              {"outer_iterations", r.outer_iterations},
              {"fpc_converged", fpc},
              {"joint_iterations", r.joint_iterations},
              {"neg_log_likelihood", r.neg_log_likelihood},
              {"penalized_objective", r.penalized_objective},
              {"df", r.df},
              {"dead", dead},
              {"component_norms", r.component_norms},
              {"sparse", r.sparse},
              {"boundary_applied", r.boundary_applied},
              {"objective_trace", r.objective_trace}};
}

inline Json model_to_json(const SlfpcaModel& m, const FitConfig* config = nullptr, const FitReport* report = nullptr) {
  Json j{{"basis", basis_to_json(m.basis)},
         {"mu", detail::to_std(m.mu)},
         {"theta", detail::rows_of(m.theta)},
         {"scores", detail::rows_of(m.scores)},
         {"normalized", m.normalized}};
  if (config) j["config"] = config_to_json(*config);
  if (report) j["report"] = report_to_json(*report);
  return j;
}

inline SlfpcaModel model_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("basis") || !j.contains("mu") || !j.contains("theta"))
    throw DataError("model: expected an object with basis, mu and theta");
  SlfpcaModel m;
  m.basis = basis_from_json(j.at("basis"));
  const int L = m.basis.size();
  m.mu = detail::vector_from_json(j.at("mu"), "model mu");
  if (m.mu.size() != L) throw DataError("model: mu must have " + std::to_string(L) + " entries");
  m.theta = detail::matrix_from_json(j.at("theta"), L, "model theta");
  m.scores = j.contains("scores") ? detail::matrix_from_json(j.at("scores"), m.theta.rows(), "model scores")
                                  : Matrix(0, m.theta.rows());
  m.normalized = j.value("normalized", false);
  return m;
}

inline void save_model(const std::string& path, const SlfpcaModel& m, const FitConfig* config = nullptr,
                       const FitReport* report = nullptr) {
  detail::write_text_file(path, model_to_json(m, config, report).dump(2) + "\n");
}

inline SlfpcaModel load_model(const std::string& path) { return model_from_json(detail::read_json_file(path)); }

/// `t,mu_hat,phi_1,...,phi_p` on `points` uniform points over [0, T].
inline void write_grid_csv(std::ostream& out, const SlfpcaModel& m, int points = kExportGridSize) {
  if (points < 2) throw InvalidArgument("grid export: need at least 2 points");
  out << "t,mu_hat";
  for (int k = 0; k < m.num_fpcs(); ++k) out << ",phi_" << k + 1;
  out << '\n';
  const double T = m.basis.domain_end();
  for (int a = 0; a < points; ++a) {
    const double t = a == points - 1 ? T : T * a / (points - 1);
    out << format_double(t) << ',' << format_double(m.mean_at(t));
    for (int k = 0; k < m.num_fpcs(); ++k) out << ',' << format_double(m.eigenfunction_at(k, t));
    out << '\n';
  }
}

inline void write_grid_csv(const std::string& path, const SlfpcaModel& m, int points = kExportGridSize) {
  std::ostringstream s;
  write_grid_csv(s, m, points);
  detail::write_text_file(path, s.str());
}

// ---------------------------------------------------------------------------
// Truth record of a simulated dataset.

/// Tabulated truth: mu and phi_k on a uniform grid, plus scores.
struct TruthTable {
  int case_id = 0;
  double domain_end = kSimDomainEnd;
  std::vector<double> grid;
  std::vector<double> mu;
  std::vector<std::vector<double>> phi;
  Matrix scores;
  std::array<double, 2> eigenvalues{};

  /// Piecewise-linear interpolant of tabulated values.
  Function interpolant(const std::vector<double>& values) const {
    const std::vector<double> g = grid;
    return [g, values](double t) {
      if (t <= g.front()) return values.front();
      if (t >= g.back()) return values.back();
      const auto it = std::upper_bound(g.begin(), g.end(), t);
      const std::size_t b = static_cast<std::size_t>(it - g.begin());
      const double w = (t - g[b - 1]) / (g[b] - g[b - 1]);
      return (1.0 - w) * values[b - 1] + w * values[b];
    };
  }
};

inline Json truth_to_json(const SimTruth& truth, int points = kExportGridSize) {
  std::vector<double> grid(points), mu(points);
  std::vector<std::vector<double>> phi(truth.phi.size(), std::vector<double>(points));
  for (int a = 0; a < points; ++a) {
    const double t = a == points - 1 ? truth.domain_end : truth.domain_end * a / (points - 1);
    grid[a] = t;
    mu[a] = truth.mu(t);
    for (std::size_t k = 0; k < truth.phi.size(); ++k) phi[k][a] = truth.phi[k](t);
  }
  return Json{{"case", truth.case_id},
              {"T", truth.domain_end},
              {"eigenvalues", truth.eigenvalues},
              {"grid", grid},
              {"mu", mu},
              {"phi", phi},
              {"scores", detail::rows_of(truth.scores)}};
}

inline TruthTable truth_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("T") || !j.contains("grid") || !j.contains("mu") || !j.contains("phi"))
    throw DataError("truth: expected an object with T, grid, mu and phi");
  TruthTable t;
  try {
    t.case_id = j.value("case", 0);
    t.domain_end = j.at("T").get<double>();
    t.grid = j.at("grid").get<std::vector<double>>();
    t.mu = j.at("mu").get<std::vector<double>>();
    t.phi = j.at("phi").get<std::vector<std::vector<double>>>();
    if (j.contains("eigenvalues")) t.eigenvalues = j.at("eigenvalues").get<std::array<double, 2>>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("truth: ") + e.what());
  }
  if (t.grid.size() < 2 || t.mu.size() != t.grid.size()) throw DataError("truth: grid and mu must have equal length >= 2");
  for (const auto& row : t.phi)
    if (row.size() != t.grid.size()) throw DataError("truth: every phi row must match the grid length");
  if (!std::is_sorted(t.grid.begin(), t.grid.end())) throw DataError("truth: grid must be increasing");
  if (j.contains("scores")) t.scores = detail::matrix_from_json(j.at("scores"), static_cast<Eigen::Index>(t.phi.size()), "truth scores");
  return t;
}

inline void save_truth(const std::string& path, const SimTruth& truth) {
  detail::write_text_file(path, truth_to_json(truth).dump(2) + "\n");
}

inline TruthTable load_truth(const std::string& path) { return truth_from_json(detail::read_json_file(path)); }

// ---------------------------------------------------------------------------
// Tables.

inline void write_tuning_csv(std::ostream& out, const TuningResult& r) {
  out << "kappa_theta,lambda,bic,df_total,converged\n";
  for (const auto& row : r.table)
    out << format_double(row.kappa_theta) << ',' << format_double(row.lambda) << ',' << format_double(row.bic) << ','
        << format_double(row.df_total) << ',' << (row.failed ? "failed" : (row.converged ? "true" : "false")) << '\n';
}

inline void write_mc_runs_csv(std::ostream& out, const McSummary& s) {
  out << "run,ise_mu,ise_1,ise_2,zero_acc_1,zero_acc_2,lambda_selected,kappa_theta_selected,converged\n";
  for (const auto& r : s.rows) {
    out << r.run;
    if (r.failed) {
      out << ",,,,,,,,failed\n";
      continue;
    }
    for (double v : {r.ise_mu, r.ise_1, r.ise_2, r.zero_acc_1, r.zero_acc_2, r.lambda_selected, r.kappa_theta_selected})
      out << ',' << format_double(v);
    out << ',' << (r.converged ? "true" : "false") << '\n';
  }
}

/// Rows `mean` and `sd`, one column per metric, plus the failure count.
inline void write_mc_summary_csv(std::ostream& out, const McSummary& s) {
  out << "stat,ise_mu,ise_1,ise_2,zero_acc_1,zero_acc_2,lambda_selected,kappa_theta_selected,converged,failures\n";
  const McStat* cols[] = {&s.ise_mu,     &s.ise_1,           &s.ise_2,
                          &s.zero_acc_1, &s.zero_acc_2,      &s.lambda_selected,
                          &s.kappa_theta_selected, &s.converged};
  out << "mean";
  for (const McStat* c : cols) out << ',' << format_double(c->mean);
  out << ',' << s.failures << '\n';
  out << "sd";
  for (const McStat* c : cols) out << ',' << format_double(c->sd);
  out << ',' << s.failures << '\n';
}

}  // namespace slfpca
