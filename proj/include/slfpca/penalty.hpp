#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "slfpca/bspline.hpp"
#include "slfpca/errors.hpp"

namespace slfpca {

/// Tuning parameters of the penalized likelihood.
///
/// kappa_mu and kappa_theta are on the working-surrogate scale, where the
/// factor 8 of the logistic majorizer has been absorbed into them.
struct PenaltyConfig {
  double kappa_mu = 1e-4;
  double kappa_theta = 1e-4;
  double lambda = 0.0;
  double scad_a = 3.7;

  void validate() const {
    if (!(kappa_mu >= 0.0) || !(kappa_theta >= 0.0) || !(lambda >= 0.0))
      throw InvalidArgument("penalty parameters must be non-negative");
    if (!(scad_a > 2.0)) throw InvalidArgument("SCAD parameter a must exceed 2");
  }
};

namespace detail {
inline void check_scad_args(double v, double lambda, double a) {
  if (!(v >= 0.0)) throw InvalidArgument("scad: argument must be non-negative, got " + std::to_string(v));
  if (!(lambda >= 0.0)) throw InvalidArgument("scad: lambda must be non-negative");
  if (!(a > 2.0)) throw InvalidArgument("scad: a must exceed 2");
}
}  // namespace detail

/// SCAD penalty p_lambda(v) for v >= 0.
inline double scad(double v, double lambda, double a = 3.7) {
  detail::check_scad_args(v, lambda, a);
  if (v <= lambda) return lambda * v;
  if (v < a * lambda) return -(v * v - 2.0 * a * lambda * v + lambda * lambda) / (2.0 * (a - 1.0));
  return 0.5 * (a + 1.0) * lambda * lambda;
}

/// p'_lambda(v); the kinks take the left-branch value.
inline double scad_deriv(double v, double lambda, double a = 3.7) {
  detail::check_scad_args(v, lambda, a);
  if (v <= lambda) return lambda;
  if (v <= a * lambda) return (a * lambda - v) / (a - 1.0);
  return 0.0;
}

/// theta^T V_m theta below this is treated as a dead segment in the LQA weights.
inline constexpr double kSegmentNormFloor = 1e-8;

/// Per-segment squared L2 mass theta^T V_m theta.
inline std::vector<double> segment_masses(const Eigen::Ref<const Vector>& theta, const std::vector<Matrix>& segment_grams) {
  std::vector<double> out;
  out.reserve(segment_grams.size());
  for (const auto& vm : segment_grams) {
    if (vm.rows() != theta.size()) throw InvalidArgument("segment Gram size does not match coefficient length");
    out.push_back(std::max(0.0, theta.dot(vm * theta)));
  }
  return out;
}

/// Local quadratic approximation of the discretized fSCAD penalty around theta_k0:
///   W = 1/2 sum_m p'(s_m) / r_m V_m,
///   s_m = sqrt((K+1)/T theta^T V_m theta),  r_m = sqrt(T/(K+1) theta^T V_m theta).
/// theta^T V_m theta is floored at kSegmentNormFloor.
inline Matrix lqa_weight_matrix(const Eigen::Ref<const Vector>& theta_k0, const BSplineBasis& basis, double lambda,
                                double a, const std::vector<Matrix>& segment_grams) {
  basis.check_coefficients(theta_k0);
  if (static_cast<int>(segment_grams.size()) != basis.segment_count())
    throw InvalidArgument("lqa_weight_matrix: expected one Gram matrix per knot segment");
  if (!(lambda >= 0.0) || !(a > 2.0)) throw InvalidArgument("lqa_weight_matrix: invalid lambda or a");
  const int L = basis.size();
  Matrix w = Matrix::Zero(L, L);
  if (lambda == 0.0) return w;
  const double ratio = basis.segment_count() / basis.domain_end();
  const auto masses = segment_masses(theta_k0, segment_grams);
  for (std::size_t m = 0; m < masses.size(); ++m) {
    const double mass = std::max(masses[m], kSegmentNormFloor);
    const double s = std::sqrt(ratio * mass);
    const double r = std::sqrt(mass / ratio);
    const double coef = scad_deriv(s, lambda, a) / r;
    if (coef != 0.0) w.noalias() += (0.5 * coef) * segment_grams[m];
  }
  return w;
}

/// (1/8) sum_m p_lambda(sqrt((K+1)/T theta^T V_m theta)), the discretized fSCAD value of one eigenfunction.
inline double fscad_penalty_value(const Eigen::Ref<const Vector>& theta_k, const BSplineBasis& basis, double lambda,
                                  double a, const std::vector<Matrix>& segment_grams) {
  basis.check_coefficients(theta_k);
  if (static_cast<int>(segment_grams.size()) != basis.segment_count())
    throw InvalidArgument("fscad_penalty_value: expected one Gram matrix per knot segment");
  if (lambda == 0.0) return 0.0;
  const double ratio = basis.segment_count() / basis.domain_end();
  double total = 0.0;
  for (double mass : segment_masses(theta_k, segment_grams)) total += scad(std::sqrt(ratio * mass), lambda, a);
  return total / 8.0;
}

inline double fscad_penalty_value(const Eigen::Ref<const Vector>& theta_k, const BSplineBasis& basis, double lambda,
                                  double a = 3.7) {
  return fscad_penalty_value(theta_k, basis, lambda, a, basis.segment_grams());
}

}  // namespace slfpca
