/**
 * @file bspline.hpp
 * @brief Clamped uniform B-spline basis on [0, T] with exact Gram matrices.
 *
 * The knot vector repeats each endpoint d + 1 times and places K equally spaced
 * interior knots, giving L = K + d + 1 basis functions. Values and derivatives
 * use the Cox-de Boor recursion in the triangular-table form of Piegl & Tiller
 * (The NURBS Book, A2.2/A2.3). Gram matrices are integrated piecewise with
 * Gauss-Legendre rules that are exact for the polynomial integrands.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slfpca/errors.hpp"

namespace slfpca {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw InvalidArgument("gauss_legendre: need at least one node");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  if (n == 1) {
    weights[0] = 2.0;
    return;
  }
  for (int i = 0; i < (n + 1) / 2; ++i) {
    // Tricomi initial guess, refined by Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

class BSplineBasis {
 public:
  /// Equally spaced interior knots on [0, domain_end].
  BSplineBasis(double domain_end, int interior_knots, int degree)
      : domain_end_(domain_end), interior_knots_(interior_knots), degree_(degree) {
    if (!(domain_end > 0.0) || !std::isfinite(domain_end))
      throw InvalidArgument("BSplineBasis: domain end T must be positive");
    if (interior_knots < 0) throw InvalidArgument("BSplineBasis: interior knot count K must be >= 0");
    if (degree < 0) throw InvalidArgument("BSplineBasis: degree d must be >= 0");

    const int segments = interior_knots + 1;
    breakpoints_.resize(segments + 1);
    for (int m = 0; m <= segments; ++m) breakpoints_[m] = domain_end * m / segments;
    breakpoints_.back() = domain_end;

    knots_.reserve(size() + degree + 1);
    for (int i = 0; i < degree; ++i) knots_.push_back(0.0);
    knots_.insert(knots_.end(), breakpoints_.begin(), breakpoints_.end());
    for (int i = 0; i < degree; ++i) knots_.push_back(domain_end);

    gauss_legendre(quadrature_nodes(), gl_nodes_, gl_weights_);
  }

  double domain_end() const noexcept { return domain_end_; }
  int degree() const noexcept { return degree_; }
  int interior_knot_count() const noexcept { return interior_knots_; }
  int segment_count() const noexcept { return interior_knots_ + 1; }
  /// L = K + d + 1.
  int size() const noexcept { return interior_knots_ + degree_ + 1; }

  /// tau_0 = 0 < tau_1 < ... < tau_{K+1} = T.
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }
  /// Full clamped knot vector of length L + d + 1.
  const std::vector<double>& knot_vector() const noexcept { return knots_; }

  /// Gauss-Legendre points per knot segment; exact for polynomials of degree 2d.
  int quadrature_nodes() const noexcept { return degree_ + 2; }

  /// Knot segment containing t, 0..K. The right endpoint T belongs to segment K.
  int segment_of(double t) const {
    check_domain(t);
    const int segments = segment_count();
    int m = static_cast<int>(std::floor(t / domain_end_ * segments));
    m = std::clamp(m, 0, segments - 1);
    // Guard against rounding at the breakpoints.
    while (m > 0 && t < breakpoints_[m]) --m;
    while (m < segments - 1 && t >= breakpoints_[m + 1]) ++m;
    return m;
  }

  /// Values of the d + 1 possibly non-zero basis functions (or their `deriv`-th derivative) at t.
  /// Returns the index of the first of them; out must hold d + 1 entries.
  int eval_local(double t, int deriv, std::span<double> out) const {
    if (deriv < 0) throw InvalidArgument("eval_basis: derivative order must be >= 0");
    if (out.size() < static_cast<std::size_t>(degree_ + 1))
      throw InvalidArgument("eval_basis: output span too small");
    const int segment = segment_of(t);
    const int span = degree_ + segment;
    local_derivatives(span, clamp_to_domain(t), deriv, out);
    return span - degree_;
  }

  /// (B_1^{(deriv)}(t), ..., B_L^{(deriv)}(t)).
  Vector eval(double t, int deriv = 0) const {
    std::vector<double> local(degree_ + 1);
    const int first = eval_local(t, deriv, local);
    Vector row = Vector::Zero(size());
    for (int j = 0; j <= degree_; ++j) row[first + j] = local[j];
    return row;
  }

  /// f(t) = B(t)^T coef, or its derivative.
  double eval_function(const Eigen::Ref<const Vector>& coef, double t, int deriv = 0) const {
    check_coefficients(coef);
    std::vector<double> local(degree_ + 1);
    const int first = eval_local(t, deriv, local);
    double v = 0.0;
    for (int j = 0; j <= degree_; ++j) v += local[j] * coef[first + j];
    return v;
  }

  /// int_lower^upper B^{(deriv)}(t) B^{(deriv)}(t)^T dt, exact.
  Matrix gram(int deriv, double lower, double upper) const {
    if (deriv < 0) throw InvalidArgument("gram_matrix: derivative order must be >= 0");
    check_domain(lower);
    check_domain(upper);
    if (!(lower < upper)) throw InvalidArgument("gram_matrix: need lower < upper");

    Matrix g = Matrix::Zero(size(), size());
    std::vector<double> local(degree_ + 1);
    const int nq = static_cast<int>(gl_nodes_.size());
    for (int m = 0; m < segment_count(); ++m) {
      const double a = std::max(lower, breakpoints_[m]);
      const double b = std::min(upper, breakpoints_[m + 1]);
      if (!(a < b)) continue;
      const double half = 0.5 * (b - a);
      const double mid = 0.5 * (a + b);
      const int span = degree_ + m;
      for (int q = 0; q < nq; ++q) {
        const double t = mid + half * gl_nodes_[q];
        const double w = half * gl_weights_[q];
        local_derivatives(span, t, deriv, local);
        const int first = span - degree_;
        for (int r = 0; r <= degree_; ++r)
          for (int c = 0; c <= degree_; ++c) g(first + r, first + c) += w * local[r] * local[c];
      }
    }
    return 0.5 * (g + g.transpose());
  }

  Matrix gram(int deriv) const { return gram(deriv, 0.0, domain_end_); }

  /// V_m = int_{tau_{m-1}}^{tau_m} B B^T dt for m = 1..K+1.
  std::vector<Matrix> segment_grams() const {
    std::vector<Matrix> out;
    out.reserve(segment_count());
    for (int m = 0; m < segment_count(); ++m) out.push_back(gram(0, breakpoints_[m], breakpoints_[m + 1]));
    return out;
  }

  /// Support of B_l (0-based l) as [knot_l, knot_{l+d+1}].
  std::pair<double, double> support(int l) const {
    if (l < 0 || l >= size()) throw InvalidArgument("support: basis index out of range");
    return {knots_[l], knots_[l + degree_ + 1]};
  }

  void check_coefficients(const Eigen::Ref<const Vector>& coef) const {
    if (coef.size() != size())
      throw InvalidArgument("coefficient vector has length " + std::to_string(coef.size()) +
                            ", basis has " + std::to_string(size()) + " functions");
  }

  bool contains(double t) const noexcept {
    const double slack = 1e-12 * domain_end_;
    return std::isfinite(t) && t >= -slack && t <= domain_end_ + slack;
  }

  void check_domain(double t) const {
    if (!contains(t))
      throw OutOfDomain("t = " + std::to_string(t) + " outside [0, " + std::to_string(domain_end_) + "]");
  }

 private:
  double clamp_to_domain(double t) const noexcept { return std::clamp(t, 0.0, domain_end_); }

  // Piegl & Tiller A2.3 restricted to one derivative order.
  void local_derivatives(int span, double t, int deriv, std::span<double> out) const {
    const int p = degree_;
    if (deriv > p) {
      std::fill(out.begin(), out.begin() + p + 1, 0.0);
      return;
    }
    std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
    std::vector<double> left(p + 1), right(p + 1);
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = t - knots_[span + 1 - j];
      right[j] = knots_[span + j] - t;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        ndu[j][r] = right[r + 1] + left[j - r];
        const double temp = ndu[r][j - 1] / ndu[j][r];
        ndu[r][j] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      ndu[j][j] = saved;
    }
    if (deriv == 0) {
      for (int j = 0; j <= p; ++j) out[j] = ndu[j][p];
      return;
    }
    std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
    for (int r = 0; r <= p; ++r) {
      int s1 = 0;
      int s2 = 1;
      a[0][0] = 1.0;
      double value = 0.0;
      for (int k = 1; k <= deriv; ++k) {
        double dk = 0.0;
        const int rk = r - k;
        const int pk = p - k;
        if (r >= k) {
          a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
          dk = a[s2][0] * ndu[rk][pk];
        }
        const int j1 = rk >= -1 ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
          dk += a[s2][j] * ndu[rk + j][pk];
        }
        if (r <= pk) {
          a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
          dk += a[s2][k] * ndu[r][pk];
        }
        value = dk;
        std::swap(s1, s2);
      }
      out[r] = value;
    }
    double factor = p;
    for (int k = 1; k < deriv; ++k) factor *= (p - k);
    for (int j = 0; j <= p; ++j) out[j] *= factor;
  }

  double domain_end_;
  int interior_knots_;
  int degree_;
  std::vector<double> breakpoints_;
  std::vector<double> knots_;
  std::vector<double> gl_nodes_;
  std::vector<double> gl_weights_;
};

}  // namespace slfpca
