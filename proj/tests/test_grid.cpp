#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "mage/grid.hpp"

using namespace mage;

namespace {

Grid unit_square(int n) { return Grid::over(0.0, 1.0, 0.0, 1.0, n, n); }

// Nodewise max error of a derivative field against an analytic derivative.
template <class F>
double max_err(const GridFunction& d, F&& exact) {
  double e = 0.0;
  const Grid& g = d.grid();
  d.for_each_valid([&](int i, int j) { e = std::max(e, std::abs(d(i, j) - exact(g.x(i), g.y(j)))); });
  return e;
}

}  // namespace

TEST(Grid, RejectsTooSmall) {
  EXPECT_THROW(Grid::over(0, 1, 0, 1, 4, 9), GridError);
  EXPECT_THROW((GridFunction(Grid{0, 0, 0.1, 0.1, 9, 3})), GridError);
  EXPECT_THROW((Grid{0, 0, -0.1, 0.1, 9, 9}.validate()), GridError);
  EXPECT_NO_THROW(Grid::over(0, 1, 0, 1, 5, 5));
}

TEST(Grid, RejectsNonFiniteValues) {
  const Grid g = unit_square(5);
  std::vector<double> v(g.size(), 1.0);
  v[7] = std::nan("");
  EXPECT_THROW(GridFunction(g, v), DomainError);
  EXPECT_THROW(GridFunction(g, std::vector<double>(3, 1.0)), GridError);
}

TEST(Hessian, QuadraticIsExact) {
  const Grid g = Grid::over(-1.0, 1.0, -0.5, 1.5, 17, 13);
  const auto u = GridFunction::sample(g, [](double x, double y) { return 0.5 * (x * x + y * y); });
  const HessianField h = hessian(u);
  EXPECT_EQ(h.margin(), 1);
  h.xx.for_each_valid([&](int i, int j) {
    EXPECT_NEAR(h.xx(i, j), 1.0, 1e-11);
    EXPECT_NEAR(h.xy(i, j), 0.0, 1e-11);
    EXPECT_NEAR(h.yy(i, j), 1.0, 1e-11);
  });
}

TEST(Hessian, BilinearIsExact) {
  const Grid g = unit_square(9);
  const auto u = GridFunction::sample(g, [](double x, double y) { return x * y; });
  const HessianField h = hessian(u);
  h.xx.for_each_valid([&](int i, int j) {
    EXPECT_NEAR(h.xx(i, j), 0.0, 1e-12);
    EXPECT_NEAR(h.xy(i, j), 1.0, 1e-12);
    EXPECT_NEAR(h.yy(i, j), 0.0, 1e-12);
  });
}

TEST(Hessian, QuarticTaylorTerm) {
  // Second difference of x^4 at x=1: ((1+h)^4 - 2 + (1-h)^4)/h^2, expanded in long double.
  const double h = 0.01;
  const long double hl = h;
  const long double oracle = (std::pow(1.0L + hl, 4) - 2.0L + std::pow(1.0L - hl, 4)) / (hl * hl);
  EXPECT_NEAR(static_cast<double>(oracle), 12.0002, 1e-9);
  const Grid g{0.95, 0.0, h, h, 11, 7};  // node i=5 sits at x = 1
  const auto u = GridFunction::sample(g, [](double x, double) { return x * x * x * x; });
  const HessianField hf = hessian(u);
  EXPECT_NEAR(hf.xx(5, 3), static_cast<double>(oracle), 1e-7);
  EXPECT_NEAR(hf.xx(5, 3), 12.0002, 1e-7);
}

TEST(Gradient, LinearAndQuadraticExact) {
  const Grid g = unit_square(11);
  const auto ux = GridFunction::sample(g, [](double x, double) { return x; });
  auto [gx, gy] = gradient(ux);
  EXPECT_LT(max_err(gx, [](double, double) { return 1.0; }), 1e-12);
  EXPECT_LT(max_err(gy, [](double, double) { return 0.0; }), 1e-12);

  const auto q = GridFunction::sample(g, [](double x, double y) { return x * x + 3.0 * y; });
  auto [qx, qy] = gradient(q);
  EXPECT_LT(max_err(qx, [](double x, double) { return 2.0 * x; }), 1e-12);
  EXPECT_LT(max_err(qy, [](double, double) { return 3.0; }), 1e-12);
}

TEST(Gradient, SineCentredDifference) {
  const double h = 0.1;
  const Grid g{-0.2, 0.0, h, h, 5, 5};  // node i=2 sits at x = 0
  const auto u = GridFunction::sample(g, [](double x, double) { return std::sin(x); });
  const double oracle = std::sin(h) / h;
  EXPECT_NEAR(oracle, 0.99833, 1e-5);
  EXPECT_NEAR(dx(u)(2, 2), oracle, 1e-14);
}

TEST(Derivatives, ObservedOrderAtLeastTwo) {
  auto f = [](double x, double y) { return std::sin(1.3 * x) * std::exp(0.7 * y) + x * x * y; };
  auto fxx = [](double x, double y) { return -1.69 * std::sin(1.3 * x) * std::exp(0.7 * y) + 2.0 * y; };
  auto fxy = [](double x, double y) { return 0.91 * std::cos(1.3 * x) * std::exp(0.7 * y) + 2.0 * x; };
  auto fyy = [](double x, double y) { return 0.49 * std::sin(1.3 * x) * std::exp(0.7 * y); };
  auto fx = [](double x, double y) { return 1.3 * std::cos(1.3 * x) * std::exp(0.7 * y) + 2.0 * x * y; };
  double prev[4] = {0, 0, 0, 0};
  for (int n : {17, 33, 65}) {
    const auto u = GridFunction::sample(Grid::over(0.0, 1.0, 0.0, 1.0, n, n), f);
    const HessianField h = hessian(u);
    const double e[4] = {max_err(h.xx, fxx), max_err(h.xy, fxy), max_err(h.yy, fyy), max_err(dx(u), fx)};
    if (n > 17)
      for (int k = 0; k < 4; ++k) EXPECT_GE(std::log2(prev[k] / e[k]), 1.9) << "component " << k << " n=" << n;
    std::copy(e, e + 4, prev);
  }
}

TEST(Derivatives, MixedDifferencesCommute) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const Grid g = unit_square(13);
  GridFunction f(g);
  for (auto& v : f.values()) v = U(rng);
  const GridFunction a = dx(dy(f)), b = dy(dx(f));
  a.for_each_valid([&](int i, int j) { EXPECT_NEAR(a(i, j), b(i, j), 1e-12); });
  const GridFunction c = dxy(f);
  a.for_each_valid([&](int i, int j) { EXPECT_NEAR(c(i, j), a(i, j), 1e-11); });
}

TEST(Quadrature, UnitSquare) {
  const Grid g = unit_square(33);
  const GridFunction one(g, 1.0);
  EXPECT_NEAR(integral(one, Mask::full(g)), 1.0, 1e-12);
  const auto x = GridFunction::sample(g, [](double xx, double) { return xx; });
  EXPECT_NEAR(integral(x, Mask::full(g)), 0.5, 1e-12);  // trapezoid is exact on bilinear integrands
}

TEST(Quadrature, RadialWeightOnDisk) {
  // Polar oracle: 2π ∫_0^1 (1-r²)^3 r dr = π/4.
  const double exact = std::numbers::pi / 4.0;
  double prev = 0.0;
  for (int n : {65, 129, 257}) {
    const Grid g = Grid::over(-1.1, 1.1, -1.1, 1.1, n, n);
    const GridFunction one(g, 1.0);
    const auto w = GridFunction::sample(g, [](double x, double y) {
      return std::pow(std::max(0.0, 1.0 - x * x - y * y), 3.0);
    });
    const double v = weighted_integral(one, w, Mask::ball(g, 0.0, 0.0, 1.0));
    EXPECT_NEAR(v, exact, 4.0 * g.hx) << n;
    if (prev > 0.0) EXPECT_LT(std::abs(v - exact), std::abs(prev - exact) + 1e-12);
    prev = v;
  }
}

TEST(Quadrature, LinearAndMonotone) {
  const Grid g = unit_square(17);
  const auto a = GridFunction::sample(g, [](double x, double y) { return std::sin(3 * x) + y; });
  const auto b = GridFunction::sample(g, [](double x, double y) { return x * y * y; });
  const Mask m = Mask::ball(g, 0.5, 0.5, 0.4);
  const auto lin = combine(a, b, [](double p, double q) { return 2.0 * p - 3.0 * q; });
  EXPECT_NEAR(integral(lin, m), 2.0 * integral(a, m) - 3.0 * integral(b, m), 1e-13);
  const auto big = transform(b, [](double v) { return std::abs(v) + 0.1; });
  EXPECT_GE(integral(big, m), integral(transform(b, [](double v) { return std::abs(v); }), m));
}

TEST(Quadrature, EmptyMaskThrows) {
  const Grid g = unit_square(9);
  EXPECT_THROW(integral(GridFunction(g, 1.0), Mask(g, false)), GridError);
  // Mask reaching into the undefined ring of a derivative field.
  EXPECT_THROW(integral(dx(GridFunction(g, 1.0)), Mask::full(g)), GridError);
}

TEST(Norms, Examples) {
  const Grid g = unit_square(65);
  const Mask all = Mask::full(g);
  for (double p : {1.0, 2.0, 3.5, kInfNorm}) EXPECT_NEAR(lp_norm(GridFunction(g, 1.0), p, all), 1.0, 1e-12);
  const auto x = GridFunction::sample(g, [](double xx, double) { return xx; });
  // Trapezoid on x²: 1/3 + h²/6.
  const double h = g.hx;
  EXPECT_NEAR(lp_norm(x, 2.0, all), std::sqrt(1.0 / 3.0 + h * h / 6.0), 1e-12);
  EXPECT_NEAR(lp_norm(x, 2.0, all), 0.57735, 1e-4);
  EXPECT_DOUBLE_EQ(lp_norm(GridFunction(g, -2.0), kInfNorm, all), 2.0);
  EXPECT_THROW(lp_norm(x, 0.5, all), DomainError);
}

TEST(Formats, GridAndCsvRoundTrip) {
  const Grid g{0.125, -1.0, 1.0 / 3.0, 0.1, 7, 6};
  const auto f = GridFunction::sample(g, [](double x, double y) { return std::exp(x) * std::cos(7 * y) / 3.0; });
  std::stringstream s1;
  write_grid(s1, f);
  const GridFunction back = read_grid(s1);
  EXPECT_TRUE(back.grid() == g);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(back[k], f[k]);

  std::stringstream s2;
  write_csv(s2, f);
  const GridFunction back2 = read_csv(s2);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(back2[k], f[k]);
}

TEST(Formats, MalformedGridFile) {
  std::stringstream s("5 5 0 0 0.1 0.1\n1 2 3\n");
  EXPECT_THROW(read_grid(s), Error);
}
