#include <gtest/gtest.h>

#include <cmath>

#include "mage/solvers.hpp"

using namespace mage;

namespace {

double quad(double x, double y) { return 0.5 * (x * x + y * y); }
double expx(double x, double y) { return std::exp(x) + 0.5 * y * y; }
double xlogx(double x, double y) { return x * std::log(x) - x + 0.5 * y * y; }
double shifted(double x, double y) { return (x + 2) * std::log(x + 2) - (x + 2) + 0.5 * y * y; }

double max_err(const GridFunction& a, const GridFunction& b) {
  return combine(a, b, [](double p, double q) { return p - q; }).max_abs();
}

double order(double coarse, double fine) { return std::log2(coarse / fine); }

}  // namespace

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.relaxation = 0.0;
  EXPECT_THROW(c.validate(), DomainError);
  c.relaxation = 1.5;
  EXPECT_THROW(c.validate(), DomainError);
  c = SolverConfig{};
  c.tol_residual = -1;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Quasilinear, ConstantDataIsImmediate) {
  const Grid g = Grid::over(0, 1, 0, 1, 17, 17);
  const auto [v, rep] = solve_quasilinear(ThetaFamily(0.3), GridFunction(g, 2.5));
  EXPECT_LE(rep.iterations, 1);
  EXPECT_LE(max_err(v, GridFunction(g, 2.5)), 1e-14);
}

TEST(Quasilinear, LogBranchSymbolicSolution) {
  // θ=0: e^{-ξ} solves v v_ξξ + v_ηη = v_ξ² + 2 v_η²/v.
  auto exact = [](double xi, double) { return std::exp(-xi); };
  double prev = 0.0;
  for (int n : {33, 65, 129}) {
    const Grid g = Grid::over(0, std::log(2.0), -1, 1, n, 2 * n - 1);
    const GridFunction ref = GridFunction::sample(g, exact);
    const auto [v, rep] = solve_quasilinear(ThetaFamily(0.0), ref);
    const double e = max_err(v, ref);
    EXPECT_LE(rep.iterations, 8);
    EXPECT_TRUE(rep.converged);
    if (n == 65) EXPECT_LE(e, 1e-3);
    if (prev > 0.0) EXPECT_GE(order(prev, e), 1.8) << n;
    prev = e;
    for (std::size_t k = 1; k < rep.history.size(); ++k) EXPECT_LT(rep.history[k], rep.history[k - 1]);
  }
}

TEST(Quasilinear, AffineBranchSymbolicSolution) {
  const Grid g = Grid::over(1, 2, -1, 1, 65, 129);
  const GridFunction ref = GridFunction::sample(g, [](double xi, double) { return xi; });
  const auto [v, rep] = solve_quasilinear(ThetaFamily(1.0), ref);
  EXPECT_LE(max_err(v, ref), 1e-10);
  EXPECT_LE(rep.iterations, 8);
}

TEST(Quasilinear, RejectsNonPositiveData) {
  const Grid g = Grid::over(0, 1, 0, 1, 9, 9);
  EXPECT_THROW(solve_quasilinear(ThetaFamily(0.0), GridFunction(g, -1.0)), DomainError);
}

TEST(MongeAmpere, QuadraticIsExact) {
  const Grid g = Grid::over(-1, 1, -1, 1, 33, 33);
  const GridFunction u = GridFunction::sample(g, quad);
  const auto [s, rep] = solve_monge_ampere(GridFunction(g, 1.0), u);
  EXPECT_LE(max_err(s, u), 1e-10);
  EXPECT_NEAR(rep.det.lambda, 1.0, 1e-10);
  EXPECT_NEAR(rep.det.Lambda, 1.0, 1e-10);
}

TEST(MongeAmpere, ManufacturedConvergence) {
  struct Case {
    double (*u)(double, double);
    double (*rho)(double, double);
    double xa, xb;
  };
  const Case cases[] = {{xlogx, [](double x, double) { return 1.0 / x; }, 1, 2},
                        {expx, [](double x, double) { return std::exp(x); }, 0, 1}};
  for (const Case& c : cases) {
    double prev = 0.0;
    for (int n : {33, 65, 129}) {
      const Grid g = Grid::over(c.xa, c.xb, -1, 1, n, 2 * n - 1);
      const GridFunction u = GridFunction::sample(g, c.u);
      const auto [s, rep] = solve_monge_ampere(GridFunction::sample(g, c.rho), u);
      const double e = max_err(s, u);
      if (prev > 0.0) EXPECT_GE(order(prev, e), 1.8) << n;
      prev = e;
      EXPECT_LE(rep.res_ma, SolverConfig{}.tol_residual);
      // Newton is quadratically convergent: above the roundoff floor the
      // contraction ratio keeps shrinking over the last three steps.
      std::vector<double> h = rep.history;
      while (!h.empty() && h.back() < 1e-10) h.pop_back();
      ASSERT_GE(h.size(), 4u);
      const std::size_t k = h.size() - 1;
      EXPECT_LT(h[k] / h[k - 1], h[k - 1] / h[k - 2]);
      EXPECT_LT(h[k - 1] / h[k - 2], h[k - 2] / h[k - 3]);
    }
  }
}

TEST(MongeAmpere, ConvexitySafeguard) {
  const Grid g = Grid::over(-1, 1, -1, 1, 17, 17);
  const GridFunction saddle = GridFunction::sample(g, [](double x, double y) { return x * x - y * y; });
  EXPECT_THROW(solve_monge_ampere(GridFunction(g, 1.0), saddle, saddle, SolverConfig{}), SolverError);
  EXPECT_THROW(solve_monge_ampere(GridFunction(g, -1.0), saddle), DomainError);
}

TEST(LinearizedMa, Examples) {
  const Grid g = Grid::over(-1, 1, -1, 1, 33, 33);
  const GridFunction u = GridFunction::sample(g, quad);
  const auto [w1, r1] = solve_linearized_ma(u, RhsZero{}, GridFunction(g, 1.0));
  EXPECT_LE(max_err(w1, GridFunction(g, 1.0)), 1e-13);

  // The operator is the Laplacian here, and Δ(x²+y²) = 4.
  const GridFunction r2 = GridFunction::sample(g, [](double x, double y) { return x * x + y * y; });
  const RhsDivForm four{Expression("0"), Expression("0"), Expression("4")};
  const auto [w2, rep2] = solve_linearized_ma(u, four, r2);
  EXPECT_LE(max_err(w2, r2), 1e-12);
  EXPECT_LE(rep2.res_div, 1e-10);

  double prev = 0.0;
  for (int n : {33, 65}) {
    const Grid gn = Grid::over(0, 1, 0, 1, n, n);
    const GridFunction ue = GridFunction::sample(gn, expx);
    const GridFunction we = GridFunction::sample(gn, [](double x, double) { return std::exp(-x); });
    const RhsDivForm spec{Expression("-exp(-x)"), Expression("0"), Expression("0")};
    const auto [w, rep] = solve_linearized_ma(ue, spec, we);
    const double e = max_err(w, we);
    EXPECT_LE(e, 1e-3);
    if (prev > 0.0) EXPECT_GE(order(prev, e), 0.9);
    prev = e;
  }
}

TEST(LinearizedMa, RejectsNonConvexU) {
  const Grid g = Grid::over(-1, 1, -1, 1, 17, 17);
  const GridFunction saddle = GridFunction::sample(g, [](double x, double y) { return x * x - y * y; });
  EXPECT_THROW(solve_linearized_ma(saddle, RhsZero{}, GridFunction(g, 1.0)), ConvexityError);
}

TEST(FourthOrder, QuadraticInOneIteration) {
  const Grid g = Grid::over(-1, 1, -1, 1, 33, 33);
  const GridFunction u = GridFunction::sample(g, quad);
  for (double th : {0.0, 0.5, 1.0}) {
    const FourthOrderSolution s = solve_fourth_order(ThetaFamily(th), RhsZero{}, u, GridFunction(g, ThetaFamily(th).w(1.0)));
    EXPECT_EQ(s.report.iterations, 1) << th;
    EXPECT_LE(max_err(s.u, u), 1e-10);
  }
}

TEST(FourthOrder, ManufacturedAbreuCase) {
  const RhsAnalytic f{Expression("exp(-x)")};
  SolverConfig cfg;
  cfg.tol_residual = 1e-9;
  double prev = 0.0;
  for (int n : {33, 65, 129}) {
    const Grid g = Grid::over(0, 1, 0, 1, n, n);
    const GridFunction u = GridFunction::sample(g, expx);
    const GridFunction w = GridFunction::sample(g, [](double x, double) { return std::exp(-x); });
    const FourthOrderSolution s = solve_fourth_order(ThetaFamily(0.0), f, u, w, cfg);
    const double e = max_err(s.u, u);
    if (prev > 0.0) EXPECT_GE(order(prev, e), 1.8) << n;
    prev = e;
    EXPECT_LE(s.report.res_div, 1e-8);
    EXPECT_LE(s.report.res_ma, 1e-8);
    for (std::size_t k = 1; k < s.report.history.size(); ++k) EXPECT_LE(s.report.history[k], s.report.history[k - 1]);
    // The nondivergence residual of the pair is truncation-level, not solver-level.
    EXPECT_LE(s.report.res_nondiv, 1e-3);
    const DetBounds exact{std::exp(g.x(1)), std::exp(g.x(n - 2))};
    EXPECT_NEAR(s.report.det.lambda / exact.lambda, 1.0, 2e-2);
    EXPECT_NEAR(s.report.det.Lambda / exact.Lambda, 1.0, 2e-2);
  }
}

TEST(FourthOrder, HomogeneousFamily) {
  const Grid g = Grid::over(-1, 1, -1, 1, 257, 257);  // h = 1/128
  const GridFunction u = GridFunction::sample(g, shifted);
  const GridFunction w = GridFunction::sample(g, [](double x, double) { return x + 2; });
  const FourthOrderSolution s = solve_fourth_order(ThetaFamily(0.0), RhsZero{}, u, w);
  EXPECT_LE(max_err(s.u, u), 1e-3);
  EXPECT_LE(max_err(s.w, w), 1e-3);
}

TEST(FourthOrder, NonConvexBoundaryFails) {
  const Grid g = Grid::over(-1, 1, -1, 1, 17, 17);
  const GridFunction saddle = GridFunction::sample(g, [](double x, double y) { return x * x - y * y; });
  EXPECT_THROW(solve_fourth_order(ThetaFamily(0.5), RhsZero{}, saddle, GridFunction(g, 1.0)), SolverError);
}

TEST(TransformRoute, Examples) {
  const TransformRouteResult q = solve_via_transform(ThetaFamily(0.5), GridFunction::sample(Grid::over(-1, 1, -1, 1, 33, 33), quad));
  EXPECT_LE(q.discrepancy, 1e-8);

  double prev = 0.0;
  for (int n : {33, 65, 129}) {
    const TransformRouteResult t = solve_via_transform(ThetaFamily(0.0), GridFunction::sample(Grid::over(1, 2, -1, 1, n, 2 * n - 1), xlogx));
    // The reference itself is O(h²) from e^{-ξ}; compare both against the closed form.
    const GridFunction exact = GridFunction::sample(t.v.grid(), [](double xi, double) { return std::exp(-xi); });
    EXPECT_LE(t.discrepancy, 1e-3);
    const double e = max_err(t.v, exact);
    if (prev > 0.0) EXPECT_GE(order(prev, e), 1.8) << n;
    prev = e;
  }
}

TEST(TransformRoute, PullBackRecoversW) {
  // θ=0: w = 1/det D²u = x on [1,2].
  const GridFunction u = GridFunction::sample(Grid::over(1, 2, -1, 1, 65, 129), xlogx);
  const TransformRouteResult t = solve_via_transform(ThetaFamily(0.0), u);
  const PulledBack pb = pull_back_w(t, ThetaFamily(0.0));
  const Grid& g = u.grid();
  double e = 0.0;
  std::size_t n = 0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (pb.covered(i, j)) {
        e = std::max(e, std::abs(pb.w(i, j) - g.x(i)));
        ++n;
      }
  EXPECT_GT(n, static_cast<std::size_t>(g.nx * g.ny / 2));
  EXPECT_LE(e, 1e-3);
}

TEST(RouteAgreement, HomogeneousCases) {
  const RouteAgreementReport a = route_agreement(ThetaFamily(0.0), xlogx, Grid::over(1, 2, -1, 1, 33, 65));
  EXPECT_TRUE(a.pass) << a.discrepancy << " vs " << a.err_coupled << " + " << a.err_transform;
  const RouteAgreementReport b = route_agreement(ThetaFamily(0.0), shifted, Grid::over(-1, 1, -1, 1, 33, 33));
  EXPECT_TRUE(b.pass) << b.discrepancy << " vs " << b.err_coupled << " + " << b.err_transform;
  // θ=1: log det = x is linear.
  const RouteAgreementReport c = route_agreement(ThetaFamily(1.0), expx, Grid::over(0, 1, -1, 1, 33, 65));
  EXPECT_TRUE(c.pass) << c.discrepancy << " vs " << c.err_coupled << " + " << c.err_transform;
  EXPECT_GT(c.nodes, 0u);
}
