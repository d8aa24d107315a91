#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "slfpca/dataset.hpp"
#include "slfpca/errors.hpp"
#include "slfpca/solver.hpp"

namespace slfpca {

struct GcvResult {
  double best_kappa = 0.0;
  std::size_t best_index = 0;
  /// One score per candidate, +inf where the system was singular.
  std::vector<double> scores;
};

/// GCV(kappa) = [N^{-1} ||(I - S) z||^2] / [1 - N^{-1} tr S]^2 with
/// S = B (B'B + N kappa V)^{-1} B'. tr S is taken from the L x L system.
inline double gcv_score(const DesignCache& design, const Eigen::Ref<const Vector>& ztilde, const Matrix& roughness,
                        double kappa) {
  const double n_obs = static_cast<double>(design.rows());
  const Matrix lhs = design.cross_product() + n_obs * kappa * roughness;
  const Vector coef = detail::solve_spd(lhs, design.transpose_times(ztilde), "GCV smoother system");
  Eigen::LLT<Matrix> llt(lhs);
  const double trace = llt.solve(design.cross_product()).trace();
  double rss = 0.0;
  for (std::size_t r = 0; r < design.rows(); ++r) {
    const double e = ztilde[r] - design.dot(r, coef);
    rss += e * e;
  }
  const double denom = 1.0 - trace / n_obs;
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return (rss / n_obs) / (denom * denom);
}

/// Smallest-GCV candidate; ties keep the earlier candidate.
inline GcvResult gcv_kappa_mu(const DesignCache& design, const Eigen::Ref<const Vector>& ztilde, const Matrix& roughness,
                              const std::vector<double>& candidates) {
  if (candidates.empty()) throw InvalidArgument("gcv_kappa_mu: no candidates");
  GcvResult out;
  out.scores.reserve(candidates.size());
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (!(candidates[c] >= 0.0)) throw InvalidArgument("gcv_kappa_mu: candidates must be non-negative");
    double score = std::numeric_limits<double>::infinity();
    try {
      score = gcv_score(design, ztilde, roughness, candidates[c]);
    } catch (const NumericalError&) {
    }
    out.scores.push_back(score);
    if (score < best) {
      best = score;
      out.best_index = c;
      any = true;
    }
  }
  if (!any) throw NumericalError("gcv_kappa_mu: every candidate produced a singular or degenerate smoother");
  out.best_kappa = candidates[out.best_index];
  return out;
}

/// n log-spaced values from lo to hi inclusive.
inline std::vector<double> log_spaced(double lo, double hi, int n) {
  if (n < 1 || !(lo > 0.0) || !(hi >= lo)) throw InvalidArgument("log_spaced: need n >= 1 and 0 < lo <= hi");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < n; ++i) out[i] = std::pow(10.0, a + (b - a) * i / (n - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

/// 1e-8 ... 1e-1, eight log-spaced points.
inline std::vector<double> default_smoothing_candidates() { return log_spaced(1e-8, 1e-1, 8); }

}  // namespace slfpca
