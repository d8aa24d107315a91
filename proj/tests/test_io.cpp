#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

namespace slfpca {
namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "slfpca_io_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23})
    EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Io, ModelRoundTripIsExact) {
  const BSplineBasis basis(7.5, 5, 2);
  auto model = init_random(basis, 6, 2, 3);
  model.mu = Vector::LinSpaced(basis.size(), -1.0 / 3.0, 2.0 / 7.0);
  FitConfig config;
  config.penalties.lambda = 0.05;
  FitReport report;
  report.objective_trace = {3.0, 2.0};
  report.df = {1.5, 2.5};
  report.dead = {false, true};
  const auto path = scratch("model.json").string();
  save_model(path, model, &config, &report);
  const auto back = load_model(path);
  EXPECT_EQ(back.basis.domain_end(), 7.5);
  EXPECT_EQ(back.basis.size(), basis.size());
  EXPECT_EQ(back.mu, model.mu);
  EXPECT_EQ(back.theta, model.theta);
  EXPECT_EQ(back.scores, model.scores);
  EXPECT_EQ(back.normalized, model.normalized);
  const auto j = model_to_json(model, &config, &report);
  EXPECT_EQ(j.at("config").at("lambda").get<double>(), 0.05);
  EXPECT_EQ(j.at("report").at("dead")[1].get<bool>(), true);
  EXPECT_EQ(j.at("basis").at("knots").size(), basis.knot_vector().size());
}

TEST(Io, MalformedModelIsDataError) {
  EXPECT_THROW(model_from_json(Json::parse(R"({"mu":[1]})")), DataError);
  EXPECT_THROW(model_from_json(Json::parse(R"({"basis":{"T":1,"K":0,"d":1},"mu":[1],"theta":[]})")), DataError);
  EXPECT_THROW(model_from_json(Json::parse(R"({"basis":{"T":1,"K":0,"d":1},"mu":[1,2],"theta":[[1]]})")), DataError);
  EXPECT_THROW(load_model(scratch("does_not_exist.json").string()), DataError);
  const auto bad = scratch("bad.json");
  std::ofstream(bad) << "{ not json";
  EXPECT_THROW(load_model(bad.string()), DataError);
}

TEST(Io, GridCsvLayout) {
  const BSplineBasis basis(10.0, 9, 3);
  auto model = init_random(basis, 3, 2, 4);
  model.mu = Vector::Constant(basis.size(), 0.25);
  std::ostringstream out;
  write_grid_csv(out, model, 11);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,mu_hat,phi_1,phi_2");
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(fields, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 4u);
    EXPECT_DOUBLE_EQ(v[0], rows * 1.0);
    EXPECT_NEAR(v[1], 0.25, 1e-12);
    EXPECT_NEAR(v[2], model.eigenfunction_at(0, v[0]), 1e-12);
    ++rows;
  }
  EXPECT_EQ(rows, 11);
}

TEST(Io, TruthRoundTripAndInterpolation) {
  SimScenario sc;
  sc.case_id = 3;
  sc.n = 4;
  const auto sim = generate(sc);
  const auto path = scratch("truth.json").string();
  save_truth(path, sim.truth);
  const auto t = load_truth(path);
  EXPECT_EQ(t.case_id, 3);
  EXPECT_EQ(t.grid.size(), static_cast<std::size_t>(kExportGridSize));
  EXPECT_EQ(t.grid.back(), 10.0);
  EXPECT_EQ(t.scores, sim.truth.scores);
  EXPECT_EQ(t.eigenvalues[0], 9.0);
  const auto phi = t.interpolant(t.phi[0]);
  EXPECT_NEAR(phi(2.0), sim.truth.phi[0](2.0), 1e-12);
  EXPECT_NEAR(phi(2.01), sim.truth.phi[0](2.01), 1e-4);
  EXPECT_NEAR(ise(phi, sim.truth.phi[0], true), 0.0, 1e-8);
  EXPECT_THROW(truth_from_json(Json::parse(R"({"T":10,"grid":[0,1],"mu":[0],"phi":[]})")), DataError);
}

TEST(Io, TuningAndMonteCarloTables) {
  TuningResult r;
  r.table.push_back(TuningRow{1e-3, 0.0, 10.5, 4.0, true, false, ""});
  r.table.push_back(TuningRow{1e-3, 0.1, std::numeric_limits<double>::infinity(), 0.0, false, true, "boom"});
  std::ostringstream tuning;
  write_tuning_csv(tuning, r);
  EXPECT_EQ(tuning.str(), "kappa_theta,lambda,bic,df_total,converged\n0.001,0,10.5,4,true\n0.001,0.1,inf,0,failed\n");

  McSummary s;
  McRow row;
  row.run = 1;
  row.ise_1 = 0.5;
  row.converged = true;
  s.rows.push_back(row);
  McRow failed;
  failed.run = 2;
  failed.failed = true;
  s.rows.push_back(failed);
  s.failures = 1;
  s.ise_1 = {0.5, 0.0};
  std::ostringstream runs;
  write_mc_runs_csv(runs, s);
  EXPECT_EQ(runs.str(),
            "run,ise_mu,ise_1,ise_2,zero_acc_1,zero_acc_2,lambda_selected,kappa_theta_selected,converged\n"
            "1,0,0.5,0,0,0,0,0,true\n2,,,,,,,,failed\n");
  std::ostringstream summary;
  write_mc_summary_csv(summary, s);
  EXPECT_NE(summary.str().find("\nmean,0,0.5,"), std::string::npos);
  EXPECT_NE(summary.str().find(",1\nsd,"), std::string::npos);
}

}  // namespace
}  // namespace slfpca
