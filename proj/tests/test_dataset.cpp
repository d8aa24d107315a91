#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

namespace slfpca {
namespace {

BinaryFunctionalDataset parse(const std::string& text, double domain_end = 10.0) {
  std::istringstream in(text);
  return read_csv(in, domain_end);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const DataError& e) {
    return e.line();
  }
  return 0;
}

TEST(Dataset, ParsesSubjectsInFirstAppearanceOrder) {
  const auto data = parse("subject,time,y\ns1,0.0,1\ns1,5.0,0\ns2,2.5,1\n");
  EXPECT_EQ(data.subject_count(), 2u);
  EXPECT_EQ(data.count(0), 2u);
  EXPECT_EQ(data.count(1), 1u);
  EXPECT_EQ(data.total_count(), 3u);
  EXPECT_EQ(data.subject(1).id, "s2");
  EXPECT_EQ(data.signed_outcome(0, 1), -1);
  const Vector q = data.signed_outcomes();
  EXPECT_EQ(q, (Vector(3) << 1.0, -1.0, 1.0).finished());
}

TEST(Dataset, InterleavedRowsGroupBySubject) {
  const auto data = parse("subject,time,y\na,1,1\nb,2,0\na,3,0\n");
  EXPECT_EQ(data.subject(0).times, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(data.offset(1), 2u);
}

TEST(Dataset, ErrorsNameTheLine) {
  EXPECT_EQ(error_line("subject,time,y\ns1,11.0,1\n"), 2u);
  EXPECT_EQ(error_line("subject,time,y\ns1,1.0,1\ns1,3.0,2\n"), 3u);
  EXPECT_EQ(error_line("subject,time,y\ns1,abc,1\n"), 2u);
  EXPECT_EQ(error_line("subject,time,y\ns1,1.0\n"), 2u);
  EXPECT_EQ(error_line("id,t,y\ns1,1.0,1\n"), 1u);
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("subject,time,y\n"), DataError);
  EXPECT_THROW(parse("subject,time,y\ns1,-0.5,1\n"), DataError);
}

TEST(Dataset, InvalidOutcomeMessage) {
  try {
    parse("subject,time,y\ns1,3.0,2\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("outcome"), std::string::npos);
  }
}

TEST(Dataset, CsvRoundTrip) {
  const auto data = testing::random_dataset(7, 5, 10.0, 11);
  std::ostringstream out;
  write_csv(out, data);
  const auto back = parse(out.str());
  ASSERT_EQ(back.subject_count(), data.subject_count());
  for (std::size_t i = 0; i < data.subject_count(); ++i) {
    EXPECT_EQ(back.subject(i).id, data.subject(i).id);
    EXPECT_EQ(back.subject(i).times, data.subject(i).times);
    EXPECT_EQ(back.subject(i).outcomes, data.subject(i).outcomes);
  }
}

TEST(Dataset, ConstructorValidates) {
  EXPECT_THROW(BinaryFunctionalDataset(10.0, {SubjectRecord{"a", {}, {}}}), DataError);
  EXPECT_THROW(BinaryFunctionalDataset(10.0, {SubjectRecord{"a", {1.0}, {1, 0}}}), DataError);
  EXPECT_THROW(BinaryFunctionalDataset(10.0, {SubjectRecord{"a", {12.0}, {1}}}), DataError);
  EXPECT_THROW(BinaryFunctionalDataset(0.0, {}), InvalidArgument);
}

TEST(Design, EndpointRowIsFirstUnitVector) {
  const BinaryFunctionalDataset data(10.0, {SubjectRecord{"a", {0.0}, {1}}});
  const BSplineBasis basis(10.0, 9, 3);
  const DesignCache design(data, basis);
  for (int l = 0; l < basis.size(); ++l) {
    const Vector e = Vector::Unit(basis.size(), l);
    EXPECT_DOUBLE_EQ(design.dot(0, e), l == 0 ? 1.0 : 0.0);
  }
}

TEST(Design, RowsMatchBasisEvaluation) {
  const auto data = testing::random_dataset(6, 9, 10.0, 12);
  const BSplineBasis basis(10.0, 9, 3);
  const DesignCache design(data, basis);
  const Matrix dense = testing::dense_design(data, basis);
  ASSERT_EQ(design.rows(), data.total_count());
  std::mt19937_64 rng(1);
  const Vector c = testing::random_vector(basis.size(), rng);
  const Vector dense_fit = dense * c;
  for (std::size_t r = 0; r < design.rows(); ++r) {
    EXPECT_NEAR(design.dot(r, c), dense_fit[r], 1e-12);
    EXPECT_NEAR(design.dot(r, Vector::Ones(basis.size())), 1.0, 1e-12);
  }
  EXPECT_LT((design.cross_product() - dense.transpose() * dense).cwiseAbs().maxCoeff(), 1e-12);
  const Vector z = testing::random_vector(static_cast<int>(design.rows()), rng);
  EXPECT_LT((design.transpose_times(z) - dense.transpose() * z).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t i = 0; i < data.subject_count(); ++i) {
    const Matrix bi = dense.middleRows(static_cast<Eigen::Index>(design.begin(i)), static_cast<Eigen::Index>(data.count(i)));
    EXPECT_LT((design.subject_gram(i) - bi.transpose() * bi).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Design, AtMostDegreePlusOneNonzerosPerRow) {
  const auto data = testing::random_dataset(4, 20, 10.0, 13);
  const BSplineBasis basis(10.0, 9, 3);
  const Matrix dense = testing::dense_design(data, basis);
  for (Eigen::Index r = 0; r < dense.rows(); ++r) EXPECT_LE((dense.row(r).array() != 0.0).count(), 4);
}

}  // namespace
}  // namespace slfpca
