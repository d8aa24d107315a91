#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "slfpca/bspline.hpp"
#include "slfpca/dataset.hpp"
#include "slfpca/gcv.hpp"
#include "slfpca/solver.hpp"

namespace slfpca {

/// Number of grid points the pooled covariance lives on.
inline constexpr int kCovarianceGridSize = 51;
/// Floor on the variance of the random initial scores.
inline constexpr double kInitialScoreVarianceFloor = 1e-4;

struct Initialization {
  SlfpcaModel model;
  /// Leading operator eigenvalues of the pooled covariance, descending.
  std::vector<double> eigenvalues;
  /// Fewer than p strictly positive eigenvalues were available.
  bool rank_warning = false;
  /// Whether same-observation products were dropped when pooling.
  bool diagonal_excluded = false;
};

namespace detail {

// Fill empty covariance cells from the mean of their filled neighbours, sweeping until stable.
inline void fill_empty_cells(Matrix& cov, std::vector<std::vector<bool>>& filled) {
  const int g = static_cast<int>(cov.rows());
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::pair<int, int>> newly;
    std::vector<double> values;
    for (int a = 0; a < g; ++a) {
      for (int b = 0; b < g; ++b) {
        if (filled[a][b]) continue;
        double sum = 0.0;
        int count = 0;
        for (int da = -1; da <= 1; ++da)
          for (int db = -1; db <= 1; ++db) {
            const int u = a + da;
            const int v = b + db;
            if ((da == 0 && db == 0) || u < 0 || v < 0 || u >= g || v >= g || !filled[u][v]) continue;
            sum += cov(u, v);
            ++count;
          }
        if (count > 0) {
          newly.emplace_back(a, b);
          values.push_back(sum / count);
        }
      }
    }
    for (std::size_t c = 0; c < newly.size(); ++c) {
      cov(newly[c].first, newly[c].second) = values[c];
      filled[newly[c].first][newly[c].second] = true;
      changed = true;
    }
  }
}

}  // namespace detail

/// Initial values from a naive FPCA of the signed outcomes q_ij.
///
/// (a) mean: penalized spline fit of q on t with GCV-selected ridge;
/// (b) residual products pooled onto a 51-point grid with a triangular kernel one
///     grid cell wide (same-observation products dropped unless every subject is
///     observed at least 51 times), eigendecomposed, eigenvectors projected onto
///     the basis by least squares and L2-normalized;
/// (c) scores drawn from N(0, max(eigenvalue_k, 1e-4)).
inline Initialization init_from_naive_fpca(const BinaryFunctionalDataset& data, const BSplineBasis& basis, int p,
                                           std::uint64_t seed) {
  if (p < 1) throw InvalidArgument("init: p must be >= 1");
  const std::size_t n = data.subject_count();
  const std::size_t total = data.total_count();
  const int L = basis.size();
  if (total < static_cast<std::size_t>(L))
    throw InvalidArgument("init: need at least L = " + std::to_string(L) + " observations");

  const DesignCache design(data, basis);
  const Matrix roughness = basis.gram(2);
  const Matrix mass = basis.gram(0);
  const Vector q = data.signed_outcomes();

  Initialization out;
  SlfpcaModel& model = out.model;
  model.basis = basis;

  // (a)
  const GcvResult gcv = gcv_kappa_mu(design, q, roughness, default_smoothing_candidates());
  model.mu = update_mean(design, q, gcv.best_kappa, roughness);

  // (b)
  const int g = kCovarianceGridSize;
  const double T = basis.domain_end();
  const double step = T / (g - 1);
  std::size_t min_count = total;
  for (std::size_t i = 0; i < n; ++i) min_count = std::min(min_count, data.count(i));
  out.diagonal_excluded = min_count < static_cast<std::size_t>(g);

  Matrix num = Matrix::Zero(g, g);
  Matrix den = Matrix::Zero(g, g);
  struct Spread {
    int cell[2];
    double weight[2];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.subject(i);
    const std::size_t m = s.times.size();
    std::vector<Spread> spread(m);
    std::vector<double> resid(m);
    for (std::size_t j = 0; j < m; ++j) {
      resid[j] = (2.0 * s.outcomes[j] - 1.0) - basis.eval_function(model.mu, s.times[j]);
      const double pos = s.times[j] / step;
      const int lo = std::clamp(static_cast<int>(std::floor(pos)), 0, g - 1);
      const int hi = std::min(lo + 1, g - 1);
      const double frac = std::clamp(pos - lo, 0.0, 1.0);
      spread[j] = Spread{{lo, hi}, {1.0 - frac, lo == hi ? 0.0 : frac}};
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t l = 0; l < m; ++l) {
        if (out.diagonal_excluded && j == l) continue;
        const double prod = resid[j] * resid[l];
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            const double w = spread[j].weight[a] * spread[l].weight[b];
            if (w == 0.0) continue;
            num(spread[j].cell[a], spread[l].cell[b]) += w * prod;
            den(spread[j].cell[a], spread[l].cell[b]) += w;
          }
      }
    }
  }
  Matrix cov = Matrix::Zero(g, g);
  std::vector<std::vector<bool>> filled(g, std::vector<bool>(g, false));
  bool any = false;
  for (int a = 0; a < g; ++a)
    for (int b = 0; b < g; ++b)
      if (den(a, b) > 0.0) {
        cov(a, b) = num(a, b) / den(a, b);
        filled[a][b] = true;
        any = true;
      }
  if (any) detail::fill_empty_cells(cov, filled);
  cov = 0.5 * (cov + cov.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector evals = eig.eigenvalues();  // ascending
  const Matrix evecs = eig.eigenvectors();

  Matrix grid_basis(g, L);
  for (int a = 0; a < g; ++a) grid_basis.row(a) = basis.eval(a * step).transpose();
  const Eigen::CompleteOrthogonalDecomposition<Matrix> projector(grid_basis);

  model.theta.resize(p, L);
  int positive = 0;
  for (int k = 0; k < p; ++k) {
    const int col = g - 1 - (k % g);
    const double ev = evals[col] * step;
    out.eigenvalues.push_back(ev);
    if (ev > 1e-12) ++positive;
    Vector coef = projector.solve(Vector(evecs.col(col) / std::sqrt(step)));
    double norm = std::sqrt(std::max(0.0, coef.dot(mass * coef)));
    if (!(norm > 1e-12) || !std::isfinite(norm)) {
      coef = Vector::Ones(L);
      norm = std::sqrt(coef.dot(mass * coef));
    }
    model.theta.row(k) = (coef / norm).transpose();
  }
  out.rank_warning = positive < p;

  // (c)
  std::mt19937_64 rng(seed);
  model.scores.resize(n, p);
  for (int k = 0; k < p; ++k) {
    std::normal_distribution<double> draw(0.0, std::sqrt(std::max(out.eigenvalues[k], kInitialScoreVarianceFloor)));
    for (std::size_t i = 0; i < n; ++i) model.scores(i, k) = draw(rng);
  }
  model.normalized = true;
  return out;
}

/// mu = 0, theta rows standard normal then L2-normalized, scores standard normal.
inline SlfpcaModel init_random(const BSplineBasis& basis, std::size_t n, int p, std::uint64_t seed) {
  if (p < 1) throw InvalidArgument("init: p must be >= 1");
  const int L = basis.size();
  const Matrix mass = basis.gram(0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> draw(0.0, 1.0);
  SlfpcaModel model;
  model.basis = basis;
  model.mu = Vector::Zero(L);
  model.theta.resize(p, L);
  for (int k = 0; k < p; ++k) {
    Vector row(L);
    for (int l = 0; l < L; ++l) row[l] = draw(rng);
    model.theta.row(k) = (row / std::sqrt(row.dot(mass * row))).transpose();
  }
  model.scores.resize(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < p; ++k) model.scores(i, k) = draw(rng);
  model.normalized = true;
  return model;
}

}  // namespace slfpca
