#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

namespace slfpca {
namespace {

double dense_gcv(const Matrix& b, const Vector& z, const Matrix& v, double kappa) {
  const double n = static_cast<double>(b.rows());
  const Matrix s = b * (b.transpose() * b + n * kappa * v).fullPivLu().inverse() * b.transpose();
  const double rss = (z - s * z).squaredNorm();
  const double denom = 1.0 - s.trace() / n;
  return (rss / n) / (denom * denom);
}

TEST(Gcv, ProjectionTraceAtZeroPenalty) {
  const auto data = testing::random_dataset(15, 6, 10.0, 51);
  const BSplineBasis basis(10.0, 4, 3);
  const DesignCache design(data, basis);
  std::mt19937_64 rng(52);
  const Vector z = testing::random_vector(static_cast<int>(design.rows()), rng);
  const Matrix b = testing::dense_design(data, basis);
  const Vector fitted = b * b.colPivHouseholderQr().solve(z);
  const double n = static_cast<double>(b.rows());
  const double expected = ((z - fitted).squaredNorm() / n) / std::pow(1.0 - basis.size() / n, 2);
  EXPECT_NEAR(gcv_score(design, z, basis.gram(2), 0.0), expected, 1e-8 * expected);
}

TEST(Gcv, MatchesDenseSmoother) {
  const BSplineBasis basis(10.0, 4, 3);
  std::mt19937_64 rng(53);
  for (int rep = 0; rep < 5; ++rep) {
    const auto data = testing::random_dataset(6, 5, 10.0, 60 + rep);
    const DesignCache design(data, basis);
    const Vector z = testing::random_vector(static_cast<int>(design.rows()), rng);
    const Matrix b = testing::dense_design(data, basis);
    for (double kappa : {1e-6, 1e-3, 1e-1}) {
      const double oracle = dense_gcv(b, z, basis.gram(2), kappa);
      EXPECT_NEAR(gcv_score(design, z, basis.gram(2), kappa), oracle, 1e-10 * oracle);
    }
  }
}

TEST(Gcv, SelectsSmallestScore) {
  const auto data = testing::random_dataset(30, 8, 10.0, 54);
  const BSplineBasis basis(10.0, 9, 3);
  const DesignCache design(data, basis);
  const Vector z = data.signed_outcomes();
  const auto candidates = default_smoothing_candidates();
  const auto res = gcv_kappa_mu(design, z, basis.gram(2), candidates);
  ASSERT_EQ(res.scores.size(), candidates.size());
  for (double s : res.scores) EXPECT_GE(s, res.scores[res.best_index]);
  EXPECT_EQ(res.best_kappa, candidates[res.best_index]);
  EXPECT_THROW(gcv_kappa_mu(design, z, basis.gram(2), {}), InvalidArgument);
}

TEST(Gcv, AllSingularThrows) {
  const BinaryFunctionalDataset data(10.0, {SubjectRecord{"a", {1.0, 2.0}, {1, 0}}});
  const BSplineBasis basis(10.0, 9, 3);
  const DesignCache design(data, basis);
  EXPECT_THROW(gcv_kappa_mu(design, Vector::Ones(2), basis.gram(2), {0.0}), NumericalError);
}

TEST(Gcv, LogSpacedEndpoints) {
  const auto v = default_smoothing_candidates();
  ASSERT_EQ(v.size(), 8u);
  EXPECT_DOUBLE_EQ(v.front(), 1e-8);
  EXPECT_DOUBLE_EQ(v.back(), 1e-1);
  EXPECT_NEAR(v[3], 1e-5, 1e-18);
  const auto lam = TuningGrid::default_lambda_candidates();
  ASSERT_EQ(lam.size(), 7u);
  EXPECT_EQ(lam[0], 0.0);
  EXPECT_DOUBLE_EQ(lam[1], 0.01);
  EXPECT_NEAR(lam[6], 0.3, 1e-15);
}

// df and BIC ----------------------------------------------------------------

struct DfInstance {
  BinaryFunctionalDataset data;
  BSplineBasis basis;
  Vector scores;
};

DfInstance df_instance(std::uint64_t seed) {
  DfInstance inst{testing::random_dataset(12, 9, 10.0, seed), BSplineBasis(10.0, 4, 3), {}};
  std::mt19937_64 rng(seed);
  inst.scores = testing::random_vector(12, rng);
  return inst;
}

TEST(Df, EqualsActiveCountAtZeroPenalty) {
  const auto inst = df_instance(55);
  const DesignCache design(inst.data, inst.basis);
  Vector theta = Vector::Zero(inst.basis.size());
  theta.segment(1, 4) << 0.5, -1.0, 0.2, 0.7;
  EXPECT_NEAR(component_df(design, inst.scores, theta, 0.0, inst.basis.gram(2)), 4.0, 1e-8);
  EXPECT_EQ(component_df(design, inst.scores, Vector::Zero(inst.basis.size()), 1e-3, inst.basis.gram(2)), 0.0);
}

TEST(Df, MatchesDenseHatMatrix) {
  for (std::uint64_t seed : {56u, 57u, 58u}) {
    const auto inst = df_instance(seed);
    const DesignCache design(inst.data, inst.basis);
    const Matrix u = testing::dense_score_design(inst.data, inst.basis, inst.scores);
    const Matrix v = inst.basis.gram(2);
    Vector theta = Vector::Zero(inst.basis.size());
    theta.segment(2, 5).setOnes();
    const std::vector<int> active{2, 3, 4, 5, 6};
    Matrix ua(u.rows(), 5);
    Matrix va(5, 5);
    for (int a = 0; a < 5; ++a) {
      ua.col(a) = u.col(active[a]);
      for (int b = 0; b < 5; ++b) va(a, b) = v(active[a], active[b]);
    }
    for (double kappa : {1e-5, 1e-3, 1e-1}) {
      const double n = static_cast<double>(u.rows());
      const Matrix hat = ua * (ua.transpose() * ua + n * kappa * va).fullPivLu().inverse() * ua.transpose();
      const double df = component_df(design, inst.scores, theta, kappa, v);
      EXPECT_NEAR(df, hat.trace(), 1e-10);
      EXPECT_LE(df, 5.0 + 1e-12);
    }
  }
}

TEST(Bic, LikelihoodPlusDfPenalty) {
  SimScenario sc;
  sc.n = 20;
  const auto sim = generate(sc);
  const BSplineBasis basis(10.0, 9, 3);
  const FitContext ctx(sim.data, basis);
  const auto model = init_from_naive_fpca(sim.data, basis, 2, 1).model;
  const auto res = bic_score(ctx, model, 1e-4);
  const double log_n = std::log(static_cast<double>(ctx.total_count()));
  EXPECT_NEAR(res.bic, 2.0 * negative_log_likelihood(ctx, model) + res.df_total() * log_n, 1e-9);
  ASSERT_EQ(res.df.size(), 2u);
  // More degrees of freedom at the same likelihood cost more.
  EXPECT_GT(2.0 * res.neg_log_likelihood + (res.df_total() + 1.0) * log_n, res.bic);
}

TEST(Bic, SaturatedFitLeavesPenaltyOnly) {
  const BinaryFunctionalDataset data(10.0, {SubjectRecord{"a", {1.0, 4.0, 9.0}, {1, 1, 1}},
                                            SubjectRecord{"b", {2.0, 5.0}, {1, 1}}});
  const BSplineBasis basis(10.0, 2, 3);
  const FitContext ctx(data, basis);
  SlfpcaModel model;
  model.basis = basis;
  model.mu = Vector::Constant(basis.size(), 60.0);
  model.theta = Matrix::Ones(1, basis.size());
  model.scores = Matrix::Zero(2, 1);
  const auto res = bic_score(ctx, model, 1e-3);
  EXPECT_LT(res.neg_log_likelihood, 1e-20);
  EXPECT_NEAR(res.bic, res.df_total() * std::log(5.0), 1e-12);
}

// select_tuning ---------------------------------------------------------------

struct TuningFixture : ::testing::Test {
  static void SetUpTestSuite() {
    SimScenario sc;
    sc.n = 40;
    sc.seed = 3;
    sim = new SimData(generate(sc));
  }
  static void TearDownTestSuite() { delete sim; }
  static SimData* sim;
  const BSplineBasis basis{10.0, 9, 3};
};
SimData* TuningFixture::sim = nullptr;

TEST_F(TuningFixture, SingleCellIsReturned) {
  TuningGrid grid;
  grid.kappa_mu_candidates = {1e-4};
  grid.kappa_theta_candidates = {1e-3};
  grid.lambda_candidates = {0.0};
  const auto res = select_tuning(sim->data, basis, grid, FitConfig{});
  ASSERT_EQ(res.table.size(), 1u);
  EXPECT_EQ(res.best_index, 0u);
  EXPECT_EQ(res.best.kappa_theta, 1e-3);
  EXPECT_EQ(res.best.lambda, 0.0);
  EXPECT_EQ(res.best.kappa_mu, 1e-4);
  ASSERT_TRUE(res.best_fit.has_value());
}

TEST_F(TuningFixture, TableCoversGridAndBestIsMinimum) {
  TuningGrid grid;
  grid.kappa_theta_candidates = {1e-4, 1e-2};
  grid.lambda_candidates = {0.0, 0.05, 0.1};
  const auto res = select_tuning(sim->data, basis, grid, FitConfig{});
  ASSERT_EQ(res.table.size(), 6u);
  for (std::size_t c = 0; c < 6; ++c) {
    EXPECT_EQ(res.table[c].kappa_theta, grid.kappa_theta_candidates[c / 3]);
    EXPECT_EQ(res.table[c].lambda, grid.lambda_candidates[c % 3]);
    EXPECT_GE(res.table[c].bic, res.table[res.best_index].bic);
  }
  EXPECT_EQ(res.best.lambda, res.table[res.best_index].lambda);
  EXPECT_EQ(res.best.kappa_theta, res.table[res.best_index].kappa_theta);
  const auto bic = bic_score(FitContext(sim->data, basis), res.best_fit->model, res.best.kappa_theta);
  EXPECT_NEAR(bic.bic, res.table[res.best_index].bic, 1e-9 * std::abs(bic.bic));
}

TEST_F(TuningFixture, DuplicateCellsScoreIdentically) {
  TuningGrid grid;
  grid.kappa_theta_candidates = {1e-3, 1e-3};
  grid.lambda_candidates = {0.0, 0.1, 0.1};
  const auto res = select_tuning(sim->data, basis, grid, FitConfig{});
  ASSERT_EQ(res.table.size(), 6u);
  EXPECT_EQ(res.table[1].bic, res.table[2].bic);
  EXPECT_EQ(res.table[0].bic, res.table[3].bic);
  EXPECT_EQ(res.table[1].bic, res.table[4].bic);
}

TEST(TuningGrid, Validation) {
  TuningGrid grid;
  EXPECT_NO_THROW(grid.validate());
  grid.lambda_candidates = {0.1};
  EXPECT_THROW(grid.validate(), InvalidArgument);
  grid.lambda_candidates = {0.0};
  grid.kappa_theta_candidates = {};
  EXPECT_THROW(grid.validate(), InvalidArgument);
  grid.kappa_theta_candidates = {-1.0};
  EXPECT_THROW(grid.validate(), InvalidArgument);
}

}  // namespace
}  // namespace slfpca
