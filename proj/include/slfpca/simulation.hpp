/**
 * @file simulation.hpp
 * @brief Synthetic binary functional data from a latent two-component process,
 *        error metrics, and the Monte Carlo driver.
 *
 * Latent curves are X_i(t) = mu(t) + xi_i1 phi_1(t) + xi_i2 phi_2(t) on [0, 10] with
 * mu(t) = 2 sin(pi t / 5) / sqrt(5) and xi_ik ~ N(0, lambda_k). Outcomes are
 * Bernoulli(pi(X_i(t_ij))).
 *
 *   case 1: phi_1 ~ B_4,        phi_2 ~ B_10          (locally sparse)
 *   case 2: phi_1 ~ B_7,        phi_2 ~ B_4 - B_10    (locally sparse)
 *   case 3: cos(pi t/5)/sqrt5,  sin(pi t/5)/sqrt5
 *   case 4: cos(pi t/5)/sqrt5,  cos(2 pi t/5)/sqrt5
 *
 * B_l is the l-th (1-based) cubic B-spline with nine equally spaced interior knots.
 */
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "slfpca/bspline.hpp"
#include "slfpca/dataset.hpp"
#include "slfpca/errors.hpp"
#include "slfpca/init.hpp"
#include "slfpca/solver.hpp"
#include "slfpca/tuning.hpp"

namespace slfpca {

using Function = std::function<double(double)>;

enum class SamplingDesign { kDense, kSparse };

inline const char* to_string(SamplingDesign d) { return d == SamplingDesign::kDense ? "dense" : "sparse"; }

inline SamplingDesign sampling_design_from_string(const std::string& s) {
  if (s == "dense") return SamplingDesign::kDense;
  if (s == "sparse") return SamplingDesign::kSparse;
  throw InvalidArgument("unknown design '" + s + "' (expected dense or sparse)");
}

inline constexpr double kSimDomainEnd = 10.0;
inline constexpr int kDenseGridSize = 51;

struct SimScenario {
  int case_id = 1;
  std::size_t n = 200;
  SamplingDesign design = SamplingDesign::kDense;
  std::array<double, 2> eigenvalues{9.0, 4.0};
  std::uint64_t seed = 1;
  /// Points of the dense grid.
  int dense_grid_size = kDenseGridSize;

  void validate() const {
    if (case_id < 1 || case_id > 4) throw InvalidArgument("scenario: case must be 1, 2, 3 or 4");
    if (n < 1) throw InvalidArgument("scenario: n must be >= 1");
    if (dense_grid_size < 2) throw InvalidArgument("scenario: dense grid needs >= 2 points");
    if (!(eigenvalues[0] >= 0.0) || !(eigenvalues[1] >= 0.0)) throw InvalidArgument("scenario: eigenvalues must be >= 0");
  }
};

/// The cubic, K = 9 basis on [0, 10] that defines the case 1/2 eigenfunctions.
inline const BSplineBasis& generator_basis() {
  static const BSplineBasis basis(kSimDomainEnd, 9, 3);
  return basis;
}

inline double true_mean(double t) { return 2.0 * std::sin(std::numbers::pi * t / 5.0) / std::sqrt(5.0); }

/// Coefficients (in basis_ref) of the two eigenfunctions of case 1 or 2, L2-normalized.
inline std::array<Vector, 2> sparse_case_coefficients(int case_id, const BSplineBasis& basis_ref) {
  if (case_id != 1 && case_id != 2) throw InvalidArgument("sparse_case_coefficients: case must be 1 or 2");
  if (basis_ref.size() < 10) throw InvalidArgument("sparse_case_coefficients: basis needs at least 10 functions");
  const Matrix mass = basis_ref.gram(0);
  const int L = basis_ref.size();
  auto unit = [&](Vector c) { return Vector(c / std::sqrt(c.dot(mass * c))); };
  Vector a = Vector::Zero(L);
  Vector b = Vector::Zero(L);
  if (case_id == 1) {
    a[3] = 1.0;  // B_4
    b[9] = 1.0;  // B_10
  } else {
    a[6] = 1.0;  // B_7
    b[3] = 1.0;
    b[9] = -1.0;
  }
  return {unit(a), unit(b)};
}

inline std::array<Function, 2> true_eigenfunctions(int case_id, const BSplineBasis& basis_ref = generator_basis()) {
  const double root5 = std::sqrt(5.0);
  const double pi = std::numbers::pi;
  switch (case_id) {
    case 1:
    case 2: {
      const auto coef = sparse_case_coefficients(case_id, basis_ref);
      auto make = [basis_ref](Vector c) -> Function {
        return [basis_ref, c](double t) { return basis_ref.eval_function(c, t); };
      };
      return {make(coef[0]), make(coef[1])};
    }
    case 3:
      return {[=](double t) { return std::cos(pi * t / 5.0) / root5; },
              [=](double t) { return std::sin(pi * t / 5.0) / root5; }};
    case 4:
      return {[=](double t) { return std::cos(pi * t / 5.0) / root5; },
              [=](double t) { return std::cos(2.0 * pi * t / 5.0) / root5; }};
    default:
      throw InvalidArgument("unknown simulation case " + std::to_string(case_id));
  }
}

struct SimTruth {
  int case_id = 1;
  double domain_end = kSimDomainEnd;
  Function mu;
  std::vector<Function> phi;
  Matrix scores;  // n x 2
  std::array<double, 2> eigenvalues{};
};

struct SimData {
  BinaryFunctionalDataset data;
  SimTruth truth;
};

/// Draws one dataset. Per subject, in order: the two scores, then (sparse design)
/// m_i ~ U{8..12} and sorted U[0, 10] times, then the outcomes.
inline SimData generate(const SimScenario& scenario) {
  scenario.validate();
  const auto phi = true_eigenfunctions(scenario.case_id);
  std::mt19937_64 rng(scenario.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> count(8, 12);
  std::uniform_real_distribution<double> when(0.0, kSimDomainEnd);

  const int grid = scenario.dense_grid_size;
  std::vector<double> dense(grid);
  for (int j = 0; j < grid; ++j) dense[j] = kSimDomainEnd * j / (grid - 1);

  SimData out;
  out.truth.case_id = scenario.case_id;
  out.truth.mu = true_mean;
  out.truth.phi = {phi[0], phi[1]};
  out.truth.eigenvalues = scenario.eigenvalues;
  out.truth.scores.resize(scenario.n, 2);

  std::vector<SubjectRecord> subjects;
  subjects.reserve(scenario.n);
  for (std::size_t i = 0; i < scenario.n; ++i) {
    const double xi1 = std::sqrt(scenario.eigenvalues[0]) * normal(rng);
    const double xi2 = std::sqrt(scenario.eigenvalues[1]) * normal(rng);
    out.truth.scores(i, 0) = xi1;
    out.truth.scores(i, 1) = xi2;
    SubjectRecord rec;
    rec.id = "s" + std::to_string(i + 1);
    if (scenario.design == SamplingDesign::kDense) {
      rec.times = dense;
    } else {
      const int m = count(rng);
      rec.times.resize(m);
      for (double& t : rec.times) t = when(rng);
      std::sort(rec.times.begin(), rec.times.end());
    }
    rec.outcomes.reserve(rec.times.size());
    for (double t : rec.times) {
      const double x = true_mean(t) + xi1 * phi[0](t) + xi2 * phi[1](t);
      rec.outcomes.push_back(unif(rng) < logistic(x) ? 1 : 0);
    }
    subjects.push_back(std::move(rec));
  }
  out.data = BinaryFunctionalDataset(kSimDomainEnd, std::move(subjects));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics.

inline constexpr int kIsePoints = 2001;

/// Composite Simpson rule on [0, T] with `points` (odd) nodes.
inline double simpson(const Function& f, double domain_end, int points = kIsePoints) {
  if (points < 3 || points % 2 == 0) throw InvalidArgument("simpson: need an odd number >= 3 of points");
  const double h = domain_end / (points - 1);
  double s = f(0.0) + f(domain_end);
  for (int i = 1; i < points - 1; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

inline double l2_inner(const Function& f, const Function& g, double domain_end = kSimDomainEnd) {
  return simpson([&](double t) { return f(t) * g(t); }, domain_end);
}

/// int (truth - s est)^2 dt, minimized over s in {+1, -1} when sign_align is set.
inline double ise(const Function& estimate, const Function& truth, bool sign_align, double domain_end = kSimDomainEnd) {
  const double plus = simpson([&](double t) { const double e = truth(t) - estimate(t); return e * e; }, domain_end);
  if (!sign_align) return plus;
  const double minus = simpson([&](double t) { const double e = truth(t) + estimate(t); return e * e; }, domain_end);
  return std::min(plus, minus);
}

/// L2 projection of f onto the span of `basis`, Simpson quadrature on 2001 points.
inline Vector project_onto_basis(const Function& f, const BSplineBasis& basis) {
  const int points = kIsePoints;
  const double T = basis.domain_end();
  const double h = T / (points - 1);
  Vector rhs = Vector::Zero(basis.size());
  for (int a = 0; a < points; ++a) {
    const double w = (a == 0 || a == points - 1) ? 1.0 : (a % 2 == 1 ? 4.0 : 2.0);
    const double t = a * h;
    rhs += (w * h / 3.0 * f(t)) * basis.eval(t);
  }
  return detail::solve_spd(basis.gram(0), rhs, "basis mass matrix");
}

/// The truth expressed in `basis` (exact for the case 1/2 eigenfunctions when `basis`
/// is the generator basis), with the true scores.
inline SlfpcaModel truth_model(const SimTruth& truth, const BSplineBasis& basis) {
  SlfpcaModel m;
  m.basis = basis;
  m.mu = project_onto_basis(truth.mu, basis);
  m.theta.resize(static_cast<Eigen::Index>(truth.phi.size()), basis.size());
  for (std::size_t k = 0; k < truth.phi.size(); ++k)
    m.theta.row(static_cast<Eigen::Index>(k)) = project_onto_basis(truth.phi[k], basis).transpose();
  m.scores = truth.scores;
  m.normalized = true;
  return m;
}

struct SupportMetrics {
  double zero_region_accuracy = 1.0;
  double nonzero_region_accuracy = 1.0;
};

inline constexpr double kTruthZeroTolerance = 1e-10;
inline constexpr double kEstimateZeroThreshold = 1e-6;

/// On a uniform grid: fraction of true-zero points (|truth| <= 1e-10 with a zero neighbour, so
/// isolated sign changes are not a region) where |estimate| < 1e-6, and fraction of clearly non-zero points (|truth| >= 1e-6) where the sign-aligned estimate is
/// non-zero with the same sign. Empty regions score 1.
inline SupportMetrics support_metrics(const Function& estimate, const Function& truth, int grid_size,
                                      double domain_end = kSimDomainEnd) {
  if (grid_size < 100) throw InvalidArgument("support_metrics: grid_size must be >= 100");
  std::vector<double> est(grid_size);
  std::vector<double> tru(grid_size);
  double cross = 0.0;
  for (int g = 0; g < grid_size; ++g) {
    const double t = domain_end * g / (grid_size - 1);
    est[g] = estimate(t);
    tru[g] = truth(t);
    cross += est[g] * tru[g];
  }
  const double sign = cross < 0.0 ? -1.0 : 1.0;
  std::vector<bool> zero(grid_size);
  for (int g = 0; g < grid_size; ++g) zero[g] = std::abs(tru[g]) <= kTruthZeroTolerance;
  int zero_total = 0;
  int zero_hit = 0;
  int live_total = 0;
  int live_hit = 0;
  for (int g = 0; g < grid_size; ++g) {
    if (zero[g]) {
      if (!(g > 0 && zero[g - 1]) && !(g + 1 < grid_size && zero[g + 1])) continue;
      ++zero_total;
      if (std::abs(est[g]) < kEstimateZeroThreshold) ++zero_hit;
    } else if (std::abs(tru[g]) >= kEstimateZeroThreshold) {
      ++live_total;
      const double e = sign * est[g];
      if (std::abs(e) >= kEstimateZeroThreshold && (e > 0.0) == (tru[g] > 0.0)) ++live_hit;
    }
  }
  SupportMetrics out;
  out.zero_region_accuracy = zero_total == 0 ? 1.0 : static_cast<double>(zero_hit) / zero_total;
  out.nonzero_region_accuracy = live_total == 0 ? 1.0 : static_cast<double>(live_hit) / live_total;
  return out;
}

/// For each truth component, the index of the estimated component assigned to it, chosen to
/// maximize the summed |L2 inner product| over all one-to-one assignments. -1 when there are
/// fewer estimates than truths.
inline std::vector<int> match_components(const std::vector<Function>& estimates, const std::vector<Function>& truths,
                                         double domain_end = kSimDomainEnd) {
  const std::size_t ne = estimates.size();
  const std::size_t nt = truths.size();
  Matrix score(ne, nt);
  for (std::size_t a = 0; a < ne; ++a)
    for (std::size_t b = 0; b < nt; ++b) score(a, b) = std::abs(l2_inner(estimates[a], truths[b], domain_end));
  // Slots hold estimate indices padded with -1 so every truth can take any estimate when ne < nt.
  std::vector<int> perm(std::max(ne, nt), -1);
  for (std::size_t a = 0; a < ne; ++a) perm[perm.size() - ne + a] = static_cast<int>(a);
  std::vector<int> best(nt, -1);
  double best_total = -1.0;
  do {
    double total = 0.0;
    for (std::size_t b = 0; b < nt; ++b)
      if (perm[b] >= 0) total += score(perm[b], b);
    if (total > best_total + 1e-15) {
      best_total = total;
      for (std::size_t b = 0; b < nt; ++b) best[b] = perm[b];
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Monte Carlo.

struct McRow {
  int run = 0;
  std::uint64_t seed = 0;
  double ise_mu = 0.0;
  double ise_1 = 0.0;
  double ise_2 = 0.0;
  double zero_acc_1 = 0.0;
  double zero_acc_2 = 0.0;
  double nonzero_acc_1 = 0.0;
  double nonzero_acc_2 = 0.0;
  double lambda_selected = 0.0;
  double kappa_theta_selected = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct McStat {
  double mean = 0.0;
  double sd = 0.0;
};

struct McSummary {
  std::vector<McRow> rows;
  int failures = 0;
  McStat ise_mu, ise_1, ise_2, zero_acc_1, zero_acc_2, nonzero_acc_1, nonzero_acc_2, lambda_selected,
      kappa_theta_selected, converged;
};

struct FitBasisSpec {
  double domain_end = kSimDomainEnd;
  int interior_knots = 9;
  int degree = 3;
};

namespace detail {
template <typename Get>
McStat summarize(const std::vector<McRow>& rows, Get get) {
  McStat s;
  int count = 0;
  for (const auto& r : rows)
    if (!r.failed) {
      s.mean += get(r);
      ++count;
    }
  if (count == 0) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  s.mean /= count;
  double ss = 0.0;
  for (const auto& r : rows)
    if (!r.failed) ss += (get(r) - s.mean) * (get(r) - s.mean);
  s.sd = count > 1 ? std::sqrt(ss / (count - 1)) : 0.0;
  return s;
}
}  // namespace detail

/// Scores one fitted model against the truth of its scenario.
inline McRow score_fit(const SlfpcaModel& model, const SimTruth& truth) {
  McRow row;
  const double T = model.basis.domain_end();
  row.ise_mu = ise([&](double t) { return model.mean_at(t); }, truth.mu, false, T);
  std::vector<Function> est;
  for (int k = 0; k < model.num_fpcs(); ++k) est.push_back([&model, k](double t) { return model.eigenfunction_at(k, t); });
  const auto match = match_components(est, truth.phi, T);
  const Function zero = [](double) { return 0.0; };
  double* ise_out[2] = {&row.ise_1, &row.ise_2};
  double* zero_out[2] = {&row.zero_acc_1, &row.zero_acc_2};
  double* live_out[2] = {&row.nonzero_acc_1, &row.nonzero_acc_2};
  for (std::size_t b = 0; b < truth.phi.size() && b < 2; ++b) {
    const Function& e = match[b] >= 0 ? est[match[b]] : zero;
    *ise_out[b] = ise(e, truth.phi[b], true, T);
    const auto sm = support_metrics(e, truth.phi[b], 1001, T);
    *zero_out[b] = sm.zero_region_accuracy;
    *live_out[b] = sm.nonzero_region_accuracy;
  }
  return row;
}

/// Run r (1-based) uses seed base_seed + r for data generation, initialization and fitting.
inline McSummary monte_carlo(const SimScenario& scenario, const FitConfig& config, const TuningGrid& grid, int runs,
                             std::uint64_t base_seed, const FitBasisSpec& basis_spec = {}) {
  if (runs < 1) throw InvalidArgument("monte_carlo: runs must be >= 1");
  const BSplineBasis basis(basis_spec.domain_end, basis_spec.interior_knots, basis_spec.degree);
  McSummary out;
  for (int r = 1; r <= runs; ++r) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
    McRow row;
    try {
      SimScenario sc = scenario;
      sc.seed = seed;
      const SimData sim = generate(sc);
      FitConfig cfg = config;
      cfg.seed = seed;
      const TuningResult tuned = select_tuning(sim.data, basis, grid, cfg);
      row = score_fit(tuned.best_fit->model, sim.truth);
      row.lambda_selected = tuned.best.lambda;
      row.kappa_theta_selected = tuned.best.kappa_theta;
      row.converged = tuned.best_fit->report.converged;
    } catch (const std::exception& e) {
      row = McRow{};
      row.failed = true;
      row.error = e.what();
      ++out.failures;
    }
    row.run = r;
    row.seed = seed;
    out.rows.push_back(row);
  }
  out.ise_mu = detail::summarize(out.rows, [](const McRow& r) { return r.ise_mu; });
  out.ise_1 = detail::summarize(out.rows, [](const McRow& r) { return r.ise_1; });
  out.ise_2 = detail::summarize(out.rows, [](const McRow& r) { return r.ise_2; });
  out.zero_acc_1 = detail::summarize(out.rows, [](const McRow& r) { return r.zero_acc_1; });
  out.zero_acc_2 = detail::summarize(out.rows, [](const McRow& r) { return r.zero_acc_2; });
  out.nonzero_acc_1 = detail::summarize(out.rows, [](const McRow& r) { return r.nonzero_acc_1; });
  out.nonzero_acc_2 = detail::summarize(out.rows, [](const McRow& r) { return r.nonzero_acc_2; });
  out.lambda_selected = detail::summarize(out.rows, [](const McRow& r) { return r.lambda_selected; });
  out.kappa_theta_selected = detail::summarize(out.rows, [](const McRow& r) { return r.kappa_theta_selected; });
  out.converged = detail::summarize(out.rows, [](const McRow& r) { return r.converged ? 1.0 : 0.0; });
  return out;
}

}  // namespace slfpca
