#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mage/io.hpp"

using namespace mage;

TEST(Json, SolveReportRoundTrip) {
  SolveReport r;
  r.converged = true;
  r.iterations = 4;
  r.inner_iterations = 17;
  r.history = {1e-1, 3.5e-4, 2e-9};
  r.residual = 2e-9;
  r.res_ma = 1e-12;
  r.has_det = true;
  r.det = {0.5, 2.25};
  r.relaxation = 0.5;
  r.message = "ok";
  const json j = r;
  EXPECT_TRUE(j.at("res_div").is_null());  // NaN
  const SolveReport back = json::parse(j.dump()).get<SolveReport>();
  EXPECT_EQ(back.iterations, 4);
  EXPECT_EQ(back.inner_iterations, 17);
  EXPECT_EQ(back.history, r.history);
  EXPECT_EQ(back.residual, r.residual);
  EXPECT_TRUE(std::isnan(back.res_div));
  EXPECT_TRUE(back.has_det);
  EXPECT_EQ(back.det.Lambda, 2.25);
  EXPECT_EQ(back.message, "ok");
  EXPECT_EQ(json(back).dump(), j.dump());
}

TEST(Json, EstimateReportRoundTrip) {
  EstimateReport r;
  r.name = "moser";
  r.digest = "0123456789abcdef";
  r.lhs = 1.25;
  r.rhs = 0.1;
  r.c_emp = 12.5;
  r.pass = true;
  r.trace = {{0.1, 1.0, 2.0, 0.5}, {0.05, 1.1, 2.0, kNaN}};
  r.quantities = {{"z", 3.0}, {"a", -std::numeric_limits<double>::infinity()}};
  const json j = r;
  const EstimateReport back = json::parse(j.dump()).get<EstimateReport>();
  EXPECT_EQ(back.name, "moser");
  EXPECT_TRUE(std::isnan(back.slope));
  EXPECT_TRUE(std::isnan(back.trace[1].c_emp));
  ASSERT_EQ(back.quantities.size(), 2u);
  EXPECT_EQ(back.quantities[0].first, "z");  // insertion order is kept
  EXPECT_TRUE(std::isnan(back.quantities[1].second));
  EXPECT_EQ(json(back).dump(), j.dump());
}

TEST(Json, SolverConfigDefaultsAndValidation) {
  const SolverConfig c = json::parse(R"({"relaxation": 0.25})").get<SolverConfig>();
  EXPECT_EQ(c.relaxation, 0.25);
  EXPECT_EQ(c.max_newton, SolverConfig{}.max_newton);
  EXPECT_EQ(json(c).get<SolverConfig>().relaxation, 0.25);
  EXPECT_THROW(json::parse(R"({"relaxation": 0})").get<SolverConfig>(), DomainError);
}

TEST(Json, GridRoundTrip) {
  const Grid g = Grid::over(-1, 2, 0, 1, 13, 7);
  const Grid back = json(g).get<Grid>();
  EXPECT_EQ(back.nx, 13);
  EXPECT_EQ(back.hx, g.hx);
  EXPECT_THROW(json::parse(R"({"x0":0,"y0":0,"hx":0.1,"hy":0.1,"nx":3,"ny":9})").get<Grid>(), GridError);
}

TEST(Csv, SummaryRoundTrip) {
  EstimateReport a, b;
  a.name = "first";
  a.lhs = 0.1;
  a.rhs = 1.0 / 3.0;
  a.c_emp = 0.3;
  a.pass = true;
  b.name = "second";
  b.lhs = std::numeric_limits<double>::infinity();
  std::ostringstream os;
  write_summary_csv(os, {a, b});
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "name,lhs,rhs,C_emp,slope,pass");
  std::istringstream is(text);
  const auto rows = read_summary_csv(is);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].rhs, 1.0 / 3.0);
  EXPECT_TRUE(std::isnan(rows[0].slope));
  EXPECT_TRUE(std::isinf(rows[1].lhs));
  EXPECT_FALSE(rows[1].pass);
  std::ostringstream again;
  write_summary_csv(again, rows);
  EXPECT_EQ(again.str(), text);

  EstimateReport bad;
  bad.name = "a,b";
  std::ostringstream sink;
  EXPECT_THROW(write_summary_csv(sink, {bad}), Error);
  std::istringstream junk("name,lhs\n");
  EXPECT_THROW(read_summary_csv(junk), Error);
}

TEST(Csv, HistoryRoundTrip) {
  const std::vector<double> h = {0.5, 1e-3, 2.5e-7};
  std::ostringstream os;
  write_history_csv(os, h);
  std::istringstream is(os.str());
  EXPECT_EQ(read_history_csv(is), h);
}

TEST(Files, GridAndJson) {
  const auto dir = std::filesystem::temp_directory_path() / "mage_test_io";
  std::filesystem::remove_all(dir);
  const GridFunction f = GridFunction::sample(Grid::over(0, 1, 0, 2, 9, 17), [](double x, double y) { return x * y - 0.1; });
  save_grid(dir / "sub" / "f.grid", f);
  const GridFunction back = load_grid(dir / "sub" / "f.grid");
  EXPECT_EQ(back.grid().ny, 17);
  for (std::size_t k = 0; k < f.values().size(); ++k) EXPECT_EQ(back.values()[k], f.values()[k]);
  save_json(dir / "r.json", json{{"a", 1}});
  EXPECT_EQ(load_json(dir / "r.json").at("a"), 1);
  EXPECT_THROW(load_grid(dir / "missing.grid"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Json, TransformSidecar) {
  const GridFunction u = GridFunction::sample(Grid::over(1, 2, -1, 1, 17, 33),
                                              [](double x, double y) { return x * std::log(x) - x + 0.5 * y * y; });
  const TransformResult t = forward(u);
  const json s = transform_sidecar(t, identity_report(u, t), 1e-6);
  EXPECT_EQ(s.at("star").get<Grid>().nx, t.star().nx);
  EXPECT_EQ(s.at("row_range").size(), t.row_range.size());
  EXPECT_EQ(s.at("identities").size(), 5u);
  EXPECT_DOUBLE_EQ(s.at("xi_lo").get<double>(), t.xi_lo);
}
