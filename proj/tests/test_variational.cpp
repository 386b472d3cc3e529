#include <gtest/gtest.h>

#include <cmath>

#include "mage/variational.hpp"

using namespace mage;

namespace {

double xlogx(double x, double y) { return x * std::log(x) - x + 0.5 * y * y; }
double expx(double x, double y) { return std::exp(x) + 0.5 * y * y; }
double quad(double x, double y) { return 0.5 * (x * x + y * y); }

Grid xlogx_grid(int n) { return Grid::over(1, 2, -1, 1, n, 2 * n - 1); }

// [0,1]² padded by one ring so derivatives exist on the whole square.
Grid padded_unit(int cells) {
  const double h = 1.0 / cells;
  return Grid::over(-h, 1 + h, -h, 1 + h, cells + 3, cells + 3);
}

// Smooth bump supported well inside the grid (zero within three rings of the boundary).
GridFunction bump(const Grid& g, double cx, double cy, double r) {
  GridFunction phi(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double s2 = (std::pow(g.x(i) - cx, 2) + std::pow(g.y(j) - cy, 2)) / (r * r);
      if (s2 < 1.0 && g.ring(i, j) >= 3) phi(i, j) = std::pow(1.0 - s2, 4);
    }
  return phi;
}

GridFunction star_field(const Grid& g, double (*f)(double, double)) { return GridFunction::sample(g, f); }

}  // namespace

TEST(Functional, Examples) {
  const Grid g = padded_unit(32);
  const Mask square = Mask::rect(g, 0, 1, 0, 1);
  EXPECT_NEAR(functional_value(GridFunction::sample(g, quad), ThetaFamily(0.5), square).value, 1.0, 1e-12);
  // det = e^x: ∫ log det = ∫ x = 1/2 (plus log of the second-difference factor, O(h²)).
  const FunctionalValue a0 = functional_value(GridFunction::sample(g, expx), ThetaFamily(0.0), square);
  EXPECT_NEAR(a0.value, 0.5, 1e-3);
  EXPECT_EQ(a0.branch, Branch::kLog);
  const FunctionalValue a1 = functional_value(GridFunction::sample(g, quad), ThetaFamily(1.0), square);
  EXPECT_EQ(a1.value, 0.0);
  EXPECT_THROW(functional_value(GridFunction::sample(g, quad), ThetaFamily(0.5), Mask::full(g)), GridError);
  EXPECT_THROW(functional_value(GridFunction::sample(g, [](double x, double y) { return x * x - y * y; }), ThetaFamily(0.5), square),
               ConvexityError);
}

TEST(Functional, StarQuadraticMatches) {
  const Grid g = Grid::over(-1, 1, -1, 1, 33, 33);
  const GridFunction u = GridFunction::sample(g, quad);
  const TransformResult t = forward(u);
  for (double th : {0.0, 0.5, 1.0}) {
    const double a = functional_value_preimage(u, t, ThetaFamily(th)).value;
    const double s = functional_value_star(t, ThetaFamily(th)).value;
    EXPECT_NEAR(a, s, 1e-9) << th;
  }
  // det ≡ 1; the ξ nodes span [-1+h, 1-h], the η nodes are the y nodes, and
  // the integral runs between the first and last interior nodes of each.
  const int m = t.star().nx;
  const double xi_side = (2.0 - 2.0 * g.hx) * (m - 3) / (m - 1.0);
  const double eta_side = 2.0 - 2.0 * g.hy;
  EXPECT_NEAR(functional_value_star(t, ThetaFamily(0.5)).value, xi_side * eta_side, 1e-9);
}

TEST(Functional, ChangeOfVariablesLogBranch) {
  const GridFunction u = GridFunction::sample(xlogx_grid(129), xlogx);
  const TransformResult t = forward(u);
  const Grid& g = u.grid();
  // Analytic oracle over the same region: ∫∫ log(1/x) = -(η-extent)·[x ln x - x]_a^b.
  const double a = t.x_of_xi(1, 0), b = t.x_of_xi(t.star().nx - 2, 0);
  const double eta = g.y(g.ny - 2) - g.y(1);
  const double oracle = -eta * ((b * std::log(b) - b) - (a * std::log(a) - a));
  const double A = functional_value_preimage(u, t, ThetaFamily(0.0)).value;
  const double As = functional_value_star(t, ThetaFamily(0.0)).value;
  EXPECT_NEAR(A / oracle, 1.0, 1e-3);
  EXPECT_NEAR(As / oracle, 1.0, 1e-3);
  EXPECT_NEAR(As / A, 1.0, 1e-3);
}

TEST(Functional, ChangeOfVariablesAllBranches) {
  const GridFunction fields[2] = {GridFunction::sample(xlogx_grid(65), xlogx),
                                  GridFunction::sample(Grid::over(0, 1, 0, 1, 65, 65), expx)};
  for (const GridFunction& u : fields) {
    const TransformResult t = forward(u);
    for (double th : {0.0, 0.5, 1.0}) {
      const double a = functional_value_preimage(u, t, ThetaFamily(th)).value;
      const double s = functional_value_star(t, ThetaFamily(th)).value;
      EXPECT_LE(std::abs(a - s) / std::abs(a), 1e-2) << th;
    }
  }
}

TEST(Functional, StarSignViolation) {
  const Grid g = Grid::over(-1, 1, -1, 1, 17, 17);
  EXPECT_THROW(functional_value_star(GridFunction::sample(g, quad), ThetaFamily(0.5)), ConvexityError);
}

TEST(ElResidual, SymbolicSolutions) {
  const Grid g = Grid::over(0.0, std::log(2.0), -1, 1, 65, 129);
  EXPECT_LE(el_residual_star(GridFunction(g, 2.5), ThetaFamily(0.3)).max_abs(), 1e-12);
  // θ=0, w = e^{-ξ}: e^{-ξ}e^{-ξ} + 0 - e^{-2ξ} + 0 = 0.
  const GridFunction w0 = star_field(g, [](double xi, double) { return std::exp(-xi); });
  EXPECT_LE(el_residual_star(w0, ThetaFamily(0.0)).max_abs(), 1e-4);
  // θ=1, w = ξ on ξ > 0: exact for the linear field.
  const Grid g1 = Grid::over(1, 2, -1, 1, 33, 65);
  const GridFunction w1 = star_field(g1, [](double xi, double) { return xi; });
  EXPECT_LE(el_residual_star(w1, ThetaFamily(1.0)).max_abs(), 1e-9);
  EXPECT_LE(el_raw_star(w1, ThetaFamily(1.0)).max_abs(), 1e-9);
  EXPECT_LE(el_raw_star(w0, ThetaFamily(0.0)).max_abs(), 1e-3);
  for (double th : {0.0, 0.5, 1.0}) EXPECT_LE(el_raw_star(GridFunction(g, 0.7), ThetaFamily(th)).max_abs(), 1e-12);
  EXPECT_THROW(el_raw_star(GridFunction(g, -1.0), ThetaFamily(0.5)), ConvexityError);
}

TEST(ElRaw, ProportionalToSimplifiedForm) {
  // Non-solution w: E and k(w)·Q both nonzero, agreeing at O(h²).
  auto wf = [](double x, double y) { return 1.0 + 0.3 * x + 0.5 * std::sin(2 * x) * std::cos(y); };
  for (double th : {0.25, 0.5, 0.75, 0.0, 1.0}) {
    const ThetaFamily fam(th);
    double prev = 0.0;
    for (int n : {33, 65, 129}) {
      const GridFunction w = GridFunction::sample(Grid::over(0, 1, 0, 1, n, n), wf);
      const GridFunction E = el_raw_star(w, fam);
      const GridFunction Q = el_residual_star(w, fam);
      double num = 0.0, den = 0.0;
      E.for_each_valid([&](int i, int j) {
        num = std::max(num, std::abs(E(i, j) - el_factor(w(i, j), fam) * Q(i, j)));
        den = std::max(den, std::abs(E(i, j)));
      });
      const double rel = num / den;
      if (n == 129) EXPECT_LE(rel, 1e-2) << th;
      if (prev > 0.0) EXPECT_GE(std::log2(prev / rel), 1.8) << th << " n=" << n;
      prev = rel;
    }
  }
}

TEST(FirstVariation, QuadraticIsCritical) {
  const Grid g = Grid::over(-1, 1, -1, 1, 33, 33);
  const TransformResult t = forward(GridFunction::sample(g, quad));
  const GridFunction phi = bump(t.star(), 0.1, 0.0, 0.5);
  for (double th : {0.0, 0.5, 1.0}) {
    const FirstVariationReport r = first_variation_check(t, ThetaFamily(th), phi);
    EXPECT_NEAR(r.lhs, 0.0, 1e-8) << th;
    EXPECT_NEAR(r.rhs, 0.0, 1e-8) << th;
    EXPECT_TRUE(r.pass);
  }
}

TEST(FirstVariation, HomogeneousSolution) {
  const TransformResult t = forward(GridFunction::sample(xlogx_grid(65), xlogx));
  const Grid& s = t.star();
  const GridFunction phi = bump(s, 0.5 * (s.x0 + s.x_end()), 0.0, 0.25);
  const FirstVariationReport r = first_variation_check(t, ThetaFamily(0.0), phi);
  EXPECT_TRUE(r.pass) << r.lhs << " vs " << r.rhs;
  EXPECT_LE(std::abs(r.lhs), 1e-4);  // both sides vanish up to discretisation error
  EXPECT_LE(r.abs_err, 1e-8 + 1e-3 * std::abs(r.lhs));
}

TEST(FirstVariation, NonSolutionBothSidesNonzero) {
  // e^x + y²/2 solves the θ=1 equation, not θ=1/2: E(w*) ≠ 0.
  const TransformResult t = forward(GridFunction::sample(Grid::over(0, 1, 0, 1, 65, 65), expx));
  const Grid& s = t.star();
  const GridFunction phi = bump(s, 0.5 * (s.x0 + s.x_end()), 0.5, 0.4);
  const FirstVariationReport r = first_variation_check(t, ThetaFamily(0.5), phi);
  EXPECT_GT(std::abs(r.rhs), 1e-3);
  EXPECT_LE(r.rel_err, 1e-3);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.eps_scan.size(), 4u);
}

TEST(FirstVariation, RejectsPhiNearBoundary) {
  const TransformResult t = forward(GridFunction::sample(Grid::over(-1, 1, -1, 1, 17, 17), quad));
  GridFunction phi(t.star());
  phi(2, 8) = 1.0;
  EXPECT_THROW(first_variation_check(t, ThetaFamily(0.5), phi), DomainError);
}
