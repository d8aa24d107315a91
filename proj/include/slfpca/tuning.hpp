#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "slfpca/gcv.hpp"
#include "slfpca/init.hpp"
#include "slfpca/solver.hpp"

namespace slfpca {

struct TuningGrid {
  std::vector<double> kappa_mu_candidates = default_smoothing_candidates();
  std::vector<double> kappa_theta_candidates = default_smoothing_candidates();
  std::vector<double> lambda_candidates = default_lambda_candidates();

  /// {0} and six log-spaced values from 0.01 to 0.3.
  static std::vector<double> default_lambda_candidates() {
    std::vector<double> out{0.0};
    for (double v : log_spaced(0.01, 0.3, 6)) out.push_back(v);
    return out;
  }

  void validate() const {
    if (kappa_mu_candidates.empty() || kappa_theta_candidates.empty() || lambda_candidates.empty())
      throw InvalidArgument("tuning grid: candidate lists must be non-empty");
    if (std::find(lambda_candidates.begin(), lambda_candidates.end(), 0.0) == lambda_candidates.end())
      throw InvalidArgument("tuning grid: lambda candidates must include 0");
    for (const auto* list : {&kappa_mu_candidates, &kappa_theta_candidates, &lambda_candidates})
      for (double v : *list)
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("tuning grid: candidates must be finite and >= 0");
  }
};

struct BicResult {
  double bic = 0.0;
  double neg_log_likelihood = 0.0;
  std::vector<double> df;
  double df_total() const {
    double s = 0.0;
    for (double d : df) s += d;
    return s;
  }
};

/// -2 loglik + (sum_k df_k) log N at the model as given.
inline BicResult bic_score(const FitContext& ctx, const SlfpcaModel& model, double kappa_theta) {
  BicResult out;
  out.neg_log_likelihood = negative_log_likelihood(ctx, model);
  for (int k = 0; k < model.num_fpcs(); ++k)
    out.df.push_back(component_df(ctx.design(), model.scores.col(k), model.theta.row(k).transpose(), kappa_theta,
                                  ctx.roughness()));
  out.bic = 2.0 * out.neg_log_likelihood + out.df_total() * std::log(static_cast<double>(ctx.total_count()));
  return out;
}

struct TuningRow {
  double kappa_theta = 0.0;
  double lambda = 0.0;
  double bic = std::numeric_limits<double>::infinity();
  double df_total = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct TuningResult {
  PenaltyConfig best;
  std::size_t best_index = 0;
  GcvResult kappa_mu_gcv;
  /// kappa_theta-major, lambda-minor, in grid order.
  std::vector<TuningRow> table;
  std::optional<FitResult> best_fit;
};

/// kappa_mu by GCV on the first surrogate at `init`, then one fit per (kappa_theta, lambda)
/// from that same initialization; the smallest BIC wins, ties going to larger lambda and
/// then larger kappa_theta. Failed cells score +inf.
inline TuningResult select_tuning(const FitContext& ctx, const TuningGrid& grid, const FitConfig& config,
                                  const SlfpcaModel& init) {
  grid.validate();
  config.validate();
  init.check_shapes();
  TuningResult out;

  // Working responses of the first surrogate, minus the initial component part.
  const Vector x0 = linear_predictor(ctx.design(), init);
  SlfpcaModel mean_only = init;
  mean_only.scores.setZero();
  const Vector comp = x0 - linear_predictor(ctx.design(), mean_only);
  Vector ztilde(x0.size());
  for (Eigen::Index r = 0; r < x0.size(); ++r)
    ztilde[r] = working_response(x0[r], static_cast<int>(ctx.signed_outcomes()[r])) - comp[r];
  out.kappa_mu_gcv = gcv_kappa_mu(ctx.design(), ztilde, ctx.roughness(), grid.kappa_mu_candidates);

  bool have_best = false;
  for (double kt : grid.kappa_theta_candidates) {
    for (double lam : grid.lambda_candidates) {
      TuningRow row;
      row.kappa_theta = kt;
      row.lambda = lam;
      FitConfig cell = config;
      cell.penalties.kappa_mu = out.kappa_mu_gcv.best_kappa;
      cell.penalties.kappa_theta = kt;
      cell.penalties.lambda = lam;
      std::optional<FitResult> result;
      try {
        result = fit(ctx, cell, init);
        const BicResult b = bic_score(ctx, result->model, kt);
        row.bic = b.bic;
        row.df_total = b.df_total();
        row.converged = result->report.converged;
        if (!std::isfinite(row.bic)) row.bic = std::numeric_limits<double>::infinity();
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
        result.reset();
      }
      out.table.push_back(row);
      const std::size_t idx = out.table.size() - 1;
      bool better = false;
      if (!row.failed && std::isfinite(row.bic)) {
        if (!have_best) {
          better = true;
        } else {
          const TuningRow& cur = out.table[out.best_index];
          if (row.bic < cur.bic) better = true;
          else if (row.bic == cur.bic) better = lam > cur.lambda || (lam == cur.lambda && kt > cur.kappa_theta);
        }
      }
      if (better) {
        have_best = true;
        out.best_index = idx;
        out.best = cell.penalties;
        out.best_fit = std::move(result);
      }
    }
  }
  if (!have_best) throw NumericalError("select_tuning: every grid cell failed");
  return out;
}

/// Same, with the naive-FPCA initialization seeded by config.seed.
inline TuningResult select_tuning(const BinaryFunctionalDataset& data, const BSplineBasis& basis, const TuningGrid& grid,
                                  const FitConfig& config) {
  const FitContext ctx(data, basis);
  const Initialization init = init_from_naive_fpca(data, basis, config.num_fpcs, config.seed);
  return select_tuning(ctx, grid, config, init.model);
}

}  // namespace slfpca
