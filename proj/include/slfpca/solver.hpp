/**
 * @file solver.hpp
 * @brief MM fitting of the sparse logistic FPCA model.
 *
 * The Bernoulli negative log-likelihood is majorized at the current linear
 * predictor X0 by the quadratic
 *
 *   -log pi(v) <= -log pi(v0) + (1/8) [v - v0 - 4 {1 - pi(v0)}]^2,
 *
 * which turns every outer iteration into a penalized least-squares problem in
 * the working responses z = X0 + 4 q {1 - pi(q X0)}. That problem is solved by
 * block updates: the mean coefficients, then for each component k in turn an
 * alternation between its scores (closed form, per subject) and its
 * coefficient vector (ridge solve with the roughness matrix V and the local
 * quadratic fSCAD weights W, iterated to a fixed point with shrink-to-zero).
 *
 * Objective scale: with the majorizer's factor 8 absorbed into the smoothing
 * parameters, the quantity that every block update decreases is
 *
 *   F = -loglik + (N/8) (kappa_mu mu'V mu + kappa_theta sum_k theta_k'V theta_k)
 *       + N sum_k fscad(theta_k),
 *
 * with fscad the discretized (1/8) sum_m p_lambda(s_m) value from penalty.hpp.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "slfpca/bspline.hpp"
#include "slfpca/dataset.hpp"
#include "slfpca/errors.hpp"
#include "slfpca/penalty.hpp"

namespace slfpca {

// ---------------------------------------------------------------------------
// Scalar pieces of the logistic majorizer.

/// pi(v) = e^v / (1 + e^v), evaluated without overflow.
inline double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

/// log pi(v).
inline double log_logistic(double v) {
  if (v >= 0.0) return -std::log1p(std::exp(-v));
  return v - std::log1p(std::exp(v));
}

/// z = X0 + 4 q {1 - pi(q X0)}.
inline double working_response(double x0, int q) {
  if (q != 1 && q != -1) throw InvalidArgument("working_response: q must be +1 or -1");
  return x0 + 4.0 * q * (1.0 - logistic(q * x0));
}

/// Right-hand side of the logistic majorizer at v around v0.
inline double logistic_majorizer(double v, double v0) {
  const double gap = v - v0 - 4.0 * (1.0 - logistic(v0));
  return -log_logistic(v0) + gap * gap / 8.0;
}

// ---------------------------------------------------------------------------
// Model, configuration, report.

/// How the first and last coefficients of theta_k are treated in the theta sub-iteration.
enum class BoundaryRule {
  kOff,        ///< untouched
  kZeroStart,  ///< zeroed before the first LQA weights are formed, then free
  kFixedZero,  ///< zeroed and excluded from the solve
};

inline const char* to_string(BoundaryRule rule) {
  switch (rule) {
    case BoundaryRule::kOff: return "off";
    case BoundaryRule::kZeroStart: return "zero-start";
    case BoundaryRule::kFixedZero: return "fixed-zero";
  }
  return "?";
}

inline BoundaryRule boundary_rule_from_string(const std::string& s) {
  if (s == "off") return BoundaryRule::kOff;
  if (s == "zero-start") return BoundaryRule::kZeroStart;
  if (s == "fixed-zero") return BoundaryRule::kFixedZero;
  throw InvalidArgument("unknown boundary rule '" + s + "' (expected off, zero-start or fixed-zero)");
}

struct FitConfig {
  int num_fpcs = 2;
  PenaltyConfig penalties;
  int max_outer_iter = 100;
  int max_joint_iter = 50;
  int max_sub_iter = 50;
  double tol_outer = 1e-4;
  double tol_sub = 1e-5;
  double shrink_threshold = 1e-3;
  BoundaryRule boundary = BoundaryRule::kZeroStart;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_fpcs < 1) throw InvalidArgument("number of FPCs p must be >= 1");
    penalties.validate();
    if (max_outer_iter < 1 || max_joint_iter < 1 || max_sub_iter < 1)
      throw InvalidArgument("iteration limits must be >= 1");
    if (!(tol_outer > 0.0) || !(tol_sub > 0.0)) throw InvalidArgument("tolerances must be positive");
    if (!(shrink_threshold >= 0.0)) throw InvalidArgument("shrink threshold must be non-negative");
  }
};

/// mu(t) = B(t)'mu, phi_k(t) = B(t)'theta_k, scores xi (n x p).
struct SlfpcaModel {
  BSplineBasis basis{10.0, 9, 3};
  Vector mu;
  Matrix theta;   // p x L
  Matrix scores;  // n x p
  bool normalized = false;

  int num_fpcs() const noexcept { return static_cast<int>(theta.rows()); }
  std::size_t subject_count() const noexcept { return static_cast<std::size_t>(scores.rows()); }

  double mean_at(double t) const { return basis.eval_function(mu, t); }
  double eigenfunction_at(int k, double t) const { return basis.eval_function(theta.row(k).transpose(), t); }

  void check_shapes() const {
    basis.check_coefficients(mu);
    if (theta.cols() != basis.size()) throw InvalidArgument("model: theta must have L columns");
    if (scores.cols() != theta.rows()) throw InvalidArgument("model: scores must have p columns");
  }
};

struct FitReport {
  /// F after each outer iteration.
  std::vector<double> objective_trace;
  bool converged = false;
  /// Joint (score, coefficient) convergence of each component in the last outer iteration.
  std::vector<bool> fpc_converged;
  int outer_iterations = 0;
  std::vector<int> joint_iterations;
  /// -loglik at the returned model.
  double neg_log_likelihood = 0.0;
  /// F at the returned (normalized) model.
  double penalized_objective = 0.0;
  std::vector<double> df;
  /// L2 norm of each psi_k before Step 4 rescaled it.
  std::vector<double> component_norms;
  /// Components whose coefficients were shrunk entirely to zero.
  std::vector<bool> dead;
  bool sparse = false;
  bool boundary_applied = false;
};

struct FitResult {
  SlfpcaModel model;
  FitReport report;
};

// ---------------------------------------------------------------------------
// Shared precomputation for one (data, basis) pair.

class FitContext {
 public:
  FitContext(const BinaryFunctionalDataset& data, const BSplineBasis& basis)
      : basis_(basis),
        design_(data, basis),
        roughness_(basis.gram(2)),
        mass_(basis.gram(0)),
        segments_(basis.segment_grams()),
        q_(data.signed_outcomes()) {}

  const BSplineBasis& basis() const noexcept { return basis_; }
  const DesignCache& design() const noexcept { return design_; }
  /// V = int B'' B''^T.
  const Matrix& roughness() const noexcept { return roughness_; }
  /// G0 = int B B^T.
  const Matrix& mass() const noexcept { return mass_; }
  /// V_m per knot segment.
  const std::vector<Matrix>& segment_grams() const noexcept { return segments_; }
  const Vector& signed_outcomes() const noexcept { return q_; }
  std::size_t total_count() const noexcept { return design_.rows(); }
  std::size_t subject_count() const noexcept { return design_.subject_count(); }

 private:
  BSplineBasis basis_;
  DesignCache design_;
  Matrix roughness_;
  Matrix mass_;
  std::vector<Matrix> segments_;
  Vector q_;
};

// ---------------------------------------------------------------------------
// Linear algebra helpers.

namespace detail {

/// Cholesky solve that refuses numerically singular systems.
inline Vector solve_spd(const Matrix& a, const Vector& b, const std::string& advice) {
  if (a.rows() == 0) return Vector();
  Eigen::LLT<Matrix> llt(a);
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (llt.info() != Eigen::Success) throw NumericalError("singular system: " + advice);
  const Vector piv = llt.matrixL().toDenseMatrix().diagonal();
  if (piv.cwiseAbs2().minCoeff() < 1e-13 * scale) throw NumericalError("numerically singular system: " + advice);
  return llt.solve(b);
}

inline std::vector<int> indices_of(const std::vector<bool>& mask) {
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<int>(i));
  return out;
}

inline Matrix principal_submatrix(const Matrix& a, const std::vector<int>& idx) {
  const int n = static_cast<int>(idx.size());
  Matrix out(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out(r, c) = a(idx[r], idx[c]);
  return out;
}

inline Vector subvector(const Vector& v, const std::vector<int>& idx) {
  Vector out(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
  return out;
}

inline double relative_change(const Eigen::Ref<const Vector>& before, const Eigen::Ref<const Vector>& after) {
  const double scale = std::max(before.norm(), after.norm());
  if (scale == 0.0) return 0.0;
  return (after - before).norm() / scale;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Block updates.

/// mu = (B'B + N kappa_mu V)^{-1} B' ztilde, solved as the stacked least-squares problem
/// [B; sqrt(N kappa_mu) R] mu ~ [ztilde; 0] with V = R'R, which stays accurate for very large kappa_mu.
inline Vector update_mean(const DesignCache& design, const Eigen::Ref<const Vector>& ztilde, double kappa_mu,
                          const Matrix& roughness) {
  if (!(kappa_mu >= 0.0)) throw InvalidArgument("update_mean: kappa_mu must be non-negative");
  const Eigen::Index n_obs = static_cast<Eigen::Index>(design.rows());
  const Eigen::Index L = design.basis_size();
  if (ztilde.size() != n_obs) throw InvalidArgument("update_mean: ztilde must have N entries");
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(roughness);
  Matrix stacked(n_obs + L, L);
  stacked.topRows(n_obs) = design.matrix();
  stacked.bottomRows(L) = (eig.eigenvalues().cwiseMax(0.0) * (static_cast<double>(n_obs) * kappa_mu)).cwiseSqrt().asDiagonal() *
                          eig.eigenvectors().transpose();
  Vector rhs = Vector::Zero(n_obs + L);
  rhs.head(n_obs) = ztilde;
  Eigen::ColPivHouseholderQR<Matrix> qr(stacked.rows(), stacked.cols());
  qr.setThreshold(1e-10);
  qr.compute(stacked);
  if (qr.rank() < L)
    throw NumericalError("numerically singular system: mean update (B'B + N kappa_mu V); use kappa_mu > 0 or more observations");
  return qr.solve(rhs);
}

/// Closed-form score for one subject: sum_j (B_ij'theta) zbar_ij / sum_j (B_ij'theta)^2, or 0
/// when the denominator is below 1e-10.
inline double update_score(const Eigen::Ref<const Vector>& zbar_i, const Eigen::Ref<const Matrix>& rows_i,
                           const Eigen::Ref<const Vector>& theta_k) {
  if (rows_i.rows() != zbar_i.size() || rows_i.cols() != theta_k.size())
    throw InvalidArgument("update_score: dimension mismatch");
  const Vector fitted = rows_i * theta_k;
  const double den = fitted.squaredNorm();
  if (den < 1e-10) return 0.0;
  return fitted.dot(zbar_i) / den;
}

namespace detail {
/// Same score from subject moments h_i = sum_j B_ij zbar_ij and G_i = sum_j B_ij B_ij'.
inline double score_from_moments(const Vector& h, const Matrix& g, const Vector& theta) {
  const double den = theta.dot(g * theta);
  if (den < 1e-10) return 0.0;
  return theta.dot(h) / den;
}
}  // namespace detail

/// Normal equations of the theta_k least-squares part: U'U and U'zbar with U_ij = xi_ik B_ij.
struct ThetaSystem {
  Matrix gram;  // U'U
  Vector rhs;   // U'zbar
  double total_count = 0.0;
  double residual_ss = 0.0;  // zbar'zbar, for objective reporting
};

inline ThetaSystem build_theta_system(const DesignCache& design, const Eigen::Ref<const Vector>& zbar,
                                      const Eigen::Ref<const Vector>& scores_k) {
  if (static_cast<std::size_t>(zbar.size()) != design.rows()) throw InvalidArgument("theta update: zbar must have N entries");
  if (static_cast<std::size_t>(scores_k.size()) != design.subject_count())
    throw InvalidArgument("theta update: scores must have n entries");
  const int L = design.basis_size();
  ThetaSystem sys{Matrix::Zero(L, L), Vector::Zero(L), static_cast<double>(design.rows()), zbar.squaredNorm()};
  Vector h(L);
  for (std::size_t i = 0; i < design.subject_count(); ++i) {
    const double xi = scores_k[i];
    if (xi == 0.0) continue;
    h.setZero();
    for (std::size_t r = design.begin(i); r < design.end(i); ++r) design.axpy(r, zbar[r], h);
    sys.gram.noalias() += (xi * xi) * design.subject_gram(i);
    sys.rhs.noalias() += xi * h;
  }
  return sys;
}

struct SubIterOptions {
  int max_sub_iter = 50;
  double tol_sub = 1e-5;
  double shrink_threshold = 1e-3;
  BoundaryRule boundary = BoundaryRule::kZeroStart;
};

struct ThetaUpdate {
  Vector theta;
  std::vector<bool> active;
  int iterations = 0;
  bool converged = false;
  /// Frozen-W surrogate value before and after each solve (shrink steps happen in between).
  std::vector<std::pair<double, double>> solve_trace;
};

/// Value of zbar'zbar - 2 theta'U'zbar + theta'(U'U + N kappa V + N W) theta.
inline double theta_surrogate(const ThetaSystem& sys, const Matrix& penalty, const Vector& theta) {
  return sys.residual_ss - 2.0 * theta.dot(sys.rhs) + theta.dot((sys.gram + penalty) * theta);
}

/// Fixed-point iteration for theta_k: LQA weights from the current iterate, ridge solve on the
/// active set, small entries shrunk to zero and dropped from the active set for the rest of the call.
inline ThetaUpdate update_theta_subiter(const ThetaSystem& sys, const PenaltyConfig& pen, const BSplineBasis& basis,
                                        const Matrix& roughness, const std::vector<Matrix>& segment_grams,
                                        const Eigen::Ref<const Vector>& theta_init, const SubIterOptions& opt) {
  basis.check_coefficients(theta_init);
  const int L = basis.size();
  const double n_obs = sys.total_count;
  ThetaUpdate out;
  out.theta = theta_init;
  out.active.assign(L, true);
  if (opt.boundary != BoundaryRule::kOff && L >= 2) {
    out.theta[0] = 0.0;
    out.theta[L - 1] = 0.0;
    if (opt.boundary == BoundaryRule::kFixedZero) out.active[0] = out.active[L - 1] = false;
  }
  const Matrix smooth = n_obs * pen.kappa_theta * roughness;
  const bool sparse = pen.lambda > 0.0;
  const std::string advice = "theta update (U'U + N kappa_theta V + N W); increase kappa_theta or the shrink threshold";

  for (int it = 1; it <= opt.max_sub_iter; ++it) {
    out.iterations = it;
    const Matrix penalty =
        sparse ? Matrix(smooth + n_obs * lqa_weight_matrix(out.theta, basis, pen.lambda, pen.scad_a, segment_grams))
               : smooth;
    const auto idx = detail::indices_of(out.active);
    Vector next = Vector::Zero(L);
    if (!idx.empty()) {
      const Matrix lhs = detail::principal_submatrix(sys.gram + penalty, idx);
      const Vector sol = detail::solve_spd(lhs, detail::subvector(sys.rhs, idx), advice);
      for (std::size_t a = 0; a < idx.size(); ++a) next[idx[a]] = sol[a];
    }
    out.solve_trace.emplace_back(theta_surrogate(sys, penalty, out.theta), theta_surrogate(sys, penalty, next));
    if (!sparse) {
      out.theta = next;
      out.converged = true;
      break;
    }
    for (int l = 0; l < L; ++l) {
      if (out.active[l] && std::abs(next[l]) < opt.shrink_threshold) {
        next[l] = 0.0;
        out.active[l] = false;
      }
    }
    const double delta = (next - out.theta).cwiseAbs().maxCoeff();
    out.theta = next;
    if (delta < opt.tol_sub) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Convenience overload building U'U and U'zbar from the stacked working residuals.
inline ThetaUpdate update_theta_subiter(const DesignCache& design, const Eigen::Ref<const Vector>& zbar,
                                        const Eigen::Ref<const Vector>& scores_k, const PenaltyConfig& pen,
                                        const BSplineBasis& basis, const Eigen::Ref<const Vector>& theta_init,
                                        const SubIterOptions& opt) {
  return update_theta_subiter(build_theta_system(design, zbar, scores_k), pen, basis, basis.gram(2),
                              basis.segment_grams(), theta_init, opt);
}

/// df_k = tr[U_A (U_A'U_A + N kappa V_A)^{-1} U_A'] over the non-zero entries A of theta_k.
inline double component_df(const DesignCache& design, const Eigen::Ref<const Vector>& scores_k,
                           const Eigen::Ref<const Vector>& theta_k, double kappa_theta, const Matrix& roughness) {
  std::vector<bool> mask(theta_k.size());
  for (Eigen::Index l = 0; l < theta_k.size(); ++l) mask[l] = theta_k[l] != 0.0;
  const auto idx = detail::indices_of(mask);
  if (idx.empty()) return 0.0;
  const int L = design.basis_size();
  Matrix utu = Matrix::Zero(L, L);
  for (std::size_t i = 0; i < design.subject_count(); ++i) utu.noalias() += scores_k[i] * scores_k[i] * design.subject_gram(i);
  const Matrix ua = detail::principal_submatrix(utu, idx);
  const Matrix lhs = ua + static_cast<double>(design.rows()) * kappa_theta * detail::principal_submatrix(roughness, idx);
  // tr(lhs^+ U_A'U_A); the pseudo-inverse covers kappa = 0 with collinear columns.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(lhs);
  return cod.solve(ua).trace();
}

// ---------------------------------------------------------------------------
// Objective pieces.

/// Per-subject coefficient vectors mu + Theta' xi_i (L x n).
inline Matrix subject_coefficients(const SlfpcaModel& model) {
  Matrix c = model.theta.transpose() * model.scores.transpose();
  c.colwise() += model.mu;
  return c;
}

/// X_ij for every observation.
inline Vector linear_predictor(const DesignCache& design, const SlfpcaModel& model) {
  const Matrix coef = subject_coefficients(model);
  Vector x(design.rows());
  for (std::size_t i = 0; i < design.subject_count(); ++i)
    for (std::size_t r = design.begin(i); r < design.end(i); ++r) x[r] = design.dot(r, coef.col(i));
  return x;
}

/// -sum_ij log pi(q_ij X_ij).
inline double negative_log_likelihood(const FitContext& ctx, const SlfpcaModel& model) {
  const Vector x = linear_predictor(ctx.design(), model);
  const Vector& q = ctx.signed_outcomes();
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.size(); ++r) total -= log_logistic(q[r] * x[r]);
  return total;
}

/// F as documented at the top of this file.
inline double penalized_objective(const FitContext& ctx, const SlfpcaModel& model, const PenaltyConfig& pen) {
  const double n_obs = static_cast<double>(ctx.total_count());
  double value = negative_log_likelihood(ctx, model);
  value += n_obs / 8.0 * pen.kappa_mu * model.mu.dot(ctx.roughness() * model.mu);
  for (int k = 0; k < model.num_fpcs(); ++k) {
    const Vector th = model.theta.row(k).transpose();
    value += n_obs / 8.0 * pen.kappa_theta * th.dot(ctx.roughness() * th);
    value += n_obs * fscad_penalty_value(th, ctx.basis(), pen.lambda, pen.scad_a, ctx.segment_grams());
  }
  return value;
}

/// Rescales each theta_k to unit L2 norm and its scores by the removed factor.
/// All-zero components are left at zero.
inline void normalize_components(SlfpcaModel& model, const Matrix& mass) {
  for (int k = 0; k < model.num_fpcs(); ++k) {
    const Vector th = model.theta.row(k).transpose();
    const double norm = std::sqrt(std::max(0.0, th.dot(mass * th)));
    if (norm == 0.0) continue;
    model.theta.row(k) /= norm;
    model.scores.col(k) *= norm;
  }
  model.normalized = true;
}

// ---------------------------------------------------------------------------
// The MM algorithm.

inline FitResult fit(const FitContext& ctx, const FitConfig& config, const SlfpcaModel& init) {
  config.validate();
  init.check_shapes();
  const BSplineBasis& basis = ctx.basis();
  const DesignCache& design = ctx.design();
  if (init.basis.size() != basis.size() || init.basis.domain_end() != basis.domain_end())
    throw InvalidArgument("fit: initial model basis differs from fitting basis");
  if (init.subject_count() != ctx.subject_count()) throw InvalidArgument("fit: initial scores must have one row per subject");
  if (init.num_fpcs() != config.num_fpcs) throw InvalidArgument("fit: initial model has a different number of FPCs");

  const PenaltyConfig& pen = config.penalties;
  const std::size_t n = ctx.subject_count();
  const std::size_t total = ctx.total_count();
  const int L = basis.size();
  const int p = config.num_fpcs;
  const Vector& q = ctx.signed_outcomes();
  const SubIterOptions sub{config.max_sub_iter, config.tol_sub, config.shrink_threshold, config.boundary};

  FitResult result{init, {}};
  SlfpcaModel& model = result.model;
  model.basis = basis;
  model.normalized = false;
  FitReport& report = result.report;
  report.sparse = pen.lambda > 0.0;
  report.boundary_applied = config.boundary != BoundaryRule::kOff;
  report.fpc_converged.assign(p, false);
  report.joint_iterations.assign(p, 0);

  Vector z(total);
  Vector zbar(total);
  std::vector<Vector> moments(n, Vector::Zero(L));

  for (int outer = 1; outer <= config.max_outer_iter; ++outer) {
    report.outer_iterations = outer;
    const Vector mu_before = model.mu;
    const Matrix theta_before = model.theta;
    const Matrix scores_before = model.scores;

    // Re-majorize at the current model.
    const Vector x0 = linear_predictor(design, model);
    for (std::size_t r = 0; r < total; ++r) z[r] = working_response(x0[r], static_cast<int>(q[r]));

    // Step 2: mean, with ztilde = z - B Theta' xi.
    {
      Vector ztilde = z;
      const Matrix comp = model.theta.transpose() * model.scores.transpose();  // L x n
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = design.begin(i); r < design.end(i); ++r) ztilde[r] -= design.dot(r, comp.col(i));
      model.mu = update_mean(design, ztilde, pen.kappa_mu, ctx.roughness());
    }

    // Step 3: components in order.
    for (int k = 0; k < p; ++k) {
      Matrix others = model.theta.transpose() * model.scores.transpose();  // L x n
      others -= model.theta.row(k).transpose() * model.scores.col(k).transpose();
      others.colwise() += model.mu;
      double zbar_ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        moments[i].setZero();
        for (std::size_t r = design.begin(i); r < design.end(i); ++r) {
          zbar[r] = z[r] - design.dot(r, others.col(i));
          zbar_ss += zbar[r] * zbar[r];
          design.axpy(r, zbar[r], moments[i]);
        }
      }

      Vector theta_k = model.theta.row(k).transpose();
      Vector xi_k = model.scores.col(k);
      bool joint_ok = false;
      for (int jt = 1; jt <= config.max_joint_iter; ++jt) {
        ++report.joint_iterations[k];
        const Vector xi_prev = xi_k;
        const Vector theta_prev = theta_k;
        for (std::size_t i = 0; i < n; ++i) xi_k[i] = detail::score_from_moments(moments[i], design.subject_gram(i), theta_k);

        ThetaSystem sys{Matrix::Zero(L, L), Vector::Zero(L), static_cast<double>(total), zbar_ss};
        for (std::size_t i = 0; i < n; ++i) {
          if (xi_k[i] == 0.0) continue;
          sys.gram.noalias() += (xi_k[i] * xi_k[i]) * design.subject_gram(i);
          sys.rhs.noalias() += xi_k[i] * moments[i];
        }
        theta_k = update_theta_subiter(sys, pen, basis, ctx.roughness(), ctx.segment_grams(), theta_k, sub).theta;

        const double change =
            std::max(detail::relative_change(xi_prev, xi_k), detail::relative_change(theta_prev, theta_k));
        if (change < config.tol_outer) {
          joint_ok = true;
          break;
        }
      }
      report.fpc_converged[k] = joint_ok;
      model.theta.row(k) = theta_k.transpose();
      model.scores.col(k) = xi_k;
    }

    report.objective_trace.push_back(penalized_objective(ctx, model, pen));

    double change = detail::relative_change(mu_before, model.mu);
    for (int k = 0; k < p; ++k) {
      change = std::max(change, detail::relative_change(theta_before.row(k).transpose(), model.theta.row(k).transpose()));
      change = std::max(change, detail::relative_change(scores_before.col(k), model.scores.col(k)));
    }
    if (change < config.tol_outer) {
      report.converged = true;
      break;
    }
  }

  // Step 4. Score means are not identified against mu; move them into the mean.
  for (int k = 0; k < p; ++k) {
    const Vector th = model.theta.row(k).transpose();
    report.component_norms.push_back(std::sqrt(std::max(0.0, th.dot(ctx.mass() * th))));
    const double shift = model.scores.col(k).mean();
    model.mu += shift * th;
    model.scores.col(k).array() -= shift;
  }
  normalize_components(model, ctx.mass());
  report.dead.assign(p, false);
  report.df.assign(p, 0.0);
  for (int k = 0; k < p; ++k) {
    report.dead[k] = model.theta.row(k).cwiseAbs().maxCoeff() == 0.0;
    report.df[k] = component_df(design, model.scores.col(k), model.theta.row(k).transpose(), pen.kappa_theta,
                                ctx.roughness());
  }
  report.neg_log_likelihood = negative_log_likelihood(ctx, model);
  report.penalized_objective = penalized_objective(ctx, model, pen);
  return result;
}

/// Scores only, with mu and Theta held at `model`: per-subject damped Newton on the likelihood,
/// started at model.scores. Subjects whose likelihood has no finite maximizer (separated
/// outcomes) stop at max_iter. Returns the n x p score matrix.
inline Matrix fit_scores(const FitContext& ctx, const SlfpcaModel& model, int max_iter = 200, double tol = 1e-8) {
  model.check_shapes();
  if (model.subject_count() != ctx.subject_count()) throw InvalidArgument("fit_scores: scores must have one row per subject");
  if (max_iter < 1 || !(tol > 0.0)) throw InvalidArgument("fit_scores: need max_iter >= 1 and tol > 0");
  const DesignCache& design = ctx.design();
  const Vector& q = ctx.signed_outcomes();
  const int p = model.num_fpcs();
  Matrix scores = model.scores;
  for (std::size_t i = 0; i < ctx.subject_count(); ++i) {
    const std::size_t r0 = design.begin(i);
    const Eigen::Index m = static_cast<Eigen::Index>(design.end(i) - r0);
    Vector offset(m);
    Matrix phi(m, p);
    Vector qi(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const std::size_t r = r0 + static_cast<std::size_t>(j);
      offset[j] = design.dot(r, model.mu);
      for (int k = 0; k < p; ++k) phi(j, k) = design.dot(r, model.theta.row(k).transpose());
      qi[j] = q[r];
    }
    const auto nll = [&](const Vector& xi) {
      const Vector v = offset + phi * xi;
      double f = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) f -= log_logistic(qi[j] * v[j]);
      return f;
    };
    Vector xi = scores.row(i).transpose();
    double f = nll(xi);
    for (int it = 0; it < max_iter; ++it) {
      const Vector v = offset + phi * xi;
      Vector grad = Vector::Zero(p);
      Matrix hess = Matrix::Zero(p, p);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double pj = logistic(qi[j] * v[j]);
        grad -= qi[j] * (1.0 - pj) * phi.row(j).transpose();
        hess += pj * (1.0 - pj) * phi.row(j).transpose() * phi.row(j);
      }
      // Small ridge keeps the step defined when a component has no support among this subject's times.
      hess.diagonal().array() += 1e-10 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
      const Vector step = hess.ldlt().solve(grad);
      double t = 1.0;
      Vector next = xi - step;
      double fn = nll(next);
      while (fn > f && t > 1e-10) {
        t *= 0.5;
        next = xi - t * step;
        fn = nll(next);
      }
      if (fn > f) break;
      const double change = (next - xi).cwiseAbs().maxCoeff();
      xi = next;
      f = fn;
      if (change < tol * (1.0 + xi.cwiseAbs().maxCoeff())) break;
    }
    scores.row(i) = xi.transpose();
  }
  return scores;
}

inline FitResult fit(const BinaryFunctionalDataset& data, const BSplineBasis& basis, const FitConfig& config,
                     const SlfpcaModel& init) {
  const FitContext ctx(data, basis);
  return fit(ctx, config, init);
}

}  // namespace slfpca
