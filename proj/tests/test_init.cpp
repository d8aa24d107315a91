#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"

namespace slfpca {
namespace {

void expect_unit_rows(const SlfpcaModel& m, double tol) {
  const Matrix g0 = m.basis.gram(0);
  for (int k = 0; k < m.num_fpcs(); ++k) {
    const Vector th = m.theta.row(k).transpose();
    EXPECT_NEAR(th.dot(g0 * th), 1.0, tol);
  }
}

/// Largest principal angle (degrees) between the spans of two function sets sampled on a grid.
double largest_angle(const Matrix& a, const Matrix& b) {
  const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
  const Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
  const double c = std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

TEST(InitNaive, DeterministicAndNormalized) {
  SimScenario sc;
  sc.n = 60;
  const auto sim = generate(sc);
  const BSplineBasis basis(10.0, 9, 3);
  const auto a = init_from_naive_fpca(sim.data, basis, 2, 17);
  const auto b = init_from_naive_fpca(sim.data, basis, 2, 17);
  EXPECT_EQ(a.model.scores, b.model.scores);
  EXPECT_EQ(a.model.theta, b.model.theta);
  EXPECT_EQ(a.model.mu, b.model.mu);
  EXPECT_TRUE(a.model.normalized);
  EXPECT_FALSE(a.diagonal_excluded);
  expect_unit_rows(a.model, 1e-10);
  EXPECT_GE(a.eigenvalues[0], a.eigenvalues[1]);
  const auto c = init_from_naive_fpca(sim.data, basis, 2, 18);
  EXPECT_NE(a.model.scores, c.model.scores);
}

TEST(InitNaive, SparseDesignDropsDiagonal) {
  SimScenario sc;
  sc.n = 100;
  sc.design = SamplingDesign::kSparse;
  const auto sim = generate(sc);
  const auto init = init_from_naive_fpca(sim.data, BSplineBasis(10.0, 9, 3), 2, 1);
  EXPECT_TRUE(init.diagonal_excluded);
  expect_unit_rows(init.model, 1e-10);
}

TEST(InitNaive, ConstantOutcomesStayFinite) {
  std::vector<SubjectRecord> subjects;
  for (int i = 0; i < 20; ++i) {
    SubjectRecord s{"s" + std::to_string(i), {}, {}};
    for (int j = 0; j < 11; ++j) {
      s.times.push_back(j);
      s.outcomes.push_back(1);
    }
    subjects.push_back(std::move(s));
  }
  const BinaryFunctionalDataset data(10.0, std::move(subjects));
  const auto init = init_from_naive_fpca(data, BSplineBasis(10.0, 9, 3), 2, 4);
  EXPECT_TRUE(init.model.mu.allFinite());
  EXPECT_TRUE(init.model.theta.allFinite());
  EXPECT_TRUE(init.model.scores.allFinite());
  EXPECT_TRUE(init.rank_warning);
  EXPECT_LT(init.model.scores.cwiseAbs().maxCoeff(), 10.0 * std::sqrt(kInitialScoreVarianceFloor) * 5.0);
  expect_unit_rows(init.model, 1e-10);
}

TEST(InitNaive, RejectsBadArguments) {
  const auto data = testing::random_dataset(3, 2, 10.0, 5);
  const BSplineBasis basis(10.0, 9, 3);
  EXPECT_THROW(init_from_naive_fpca(data, basis, 0, 1), InvalidArgument);
  EXPECT_THROW(init_from_naive_fpca(data, basis, 2, 1), InvalidArgument);
}

TEST(InitNaive, RecoversCaseOneSubspace) {
  const BSplineBasis basis(10.0, 9, 3);
  const int g = 201;
  int good = 0;
  for (int rep = 1; rep <= 20; ++rep) {
    SimScenario sc;
    sc.seed = 1000 + rep;
    const auto sim = generate(sc);
    const auto init = init_from_naive_fpca(sim.data, basis, 2, sc.seed);
    Matrix est(g, 2);
    Matrix tru(g, 2);
    for (int a = 0; a < g; ++a) {
      const double t = 10.0 * a / (g - 1);
      for (int k = 0; k < 2; ++k) {
        est(a, k) = init.model.eigenfunction_at(k, t);
        tru(a, k) = sim.truth.phi[k](t);
      }
    }
    good += largest_angle(est, tru) < 45.0;
  }
  EXPECT_GE(good, 18);
}

TEST(InitRandom, Contracts) {
  const BSplineBasis basis(10.0, 9, 3);
  const auto a = init_random(basis, 15, 3, 9);
  const auto b = init_random(basis, 15, 3, 9);
  const auto c = init_random(basis, 15, 3, 10);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_GT((a.theta - c.theta).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.mu.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.scores.rows(), 15);
  EXPECT_EQ(a.scores.cols(), 3);
  EXPECT_NO_THROW(a.check_shapes());
  expect_unit_rows(a, 1e-10);
}

}  // namespace
}  // namespace slfpca
