#pragma once

// Empirical checks of the a priori estimates: each computes both sides of an
// inequality on a grid and reports the constant it would need. Constants are
// reported, never compared against the (non-explicit) constants of the
// theory; acceptance looks at finiteness and stability under refinement.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mage/grid.hpp"
#include "mage/theta.hpp"

namespace mage {

// ---------------------------------------------------------------------------
// Reports.

/// FNV-1a over the bytes of the inputs; cheap identity for report rows.
class Digest {
 public:
  Digest& add(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h_ ^= b[k];
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Digest& add(double v) { return add(&v, sizeof v); }
  Digest& add(int v) { return add(&v, sizeof v); }
  Digest& add(const std::string& s) { return add(s.data(), s.size()); }
  Digest& add(const Grid& g) { return add(g.x0).add(g.y0).add(g.hx).add(g.hy).add(g.nx).add(g.ny); }
  Digest& add(const GridFunction& f) {
    add(f.grid()).add(f.margin());
    return add(f.values().data(), f.values().size() * sizeof(double));
  }
  std::string hex() const {
    static const char* d = "0123456789abcdef";
    std::string s(16, '0');
    for (int k = 0; k < 16; ++k) s[static_cast<std::size_t>(15 - k)] = d[(h_ >> (4 * k)) & 0xf];
    return s;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

struct TraceEntry {
  double h = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double c_emp = 0.0;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct EstimateReport {
  std::string name;
  std::string digest;
  double lhs = kNaN;
  double rhs = kNaN;
  double c_emp = kNaN;
  double slope = kNaN;  ///< log-log slope where one is measured
  bool pass = false;
  double drift = kNaN;  ///< relative change of c_emp between the last two trace levels
  std::vector<TraceEntry> trace;
  std::vector<std::pair<std::string, double>> quantities;  ///< named extras (hypothesis integrals, norms)
  std::string message;

  double quantity(const std::string& key) const {
    for (const auto& [k, v] : quantities)
      if (k == key) return v;
    return kNaN;
  }
};

/// Relative change, with 0 when both values vanish.
inline double relative_drift(double a, double b) {
  const double m = std::max(std::abs(a), std::abs(b));
  return m == 0.0 ? 0.0 : std::abs(a - b) / m;
}

/// Recomputes `at` on every grid and folds the levels into one report: the
/// finest level supplies lhs/rhs/c_emp, pass requires every level to pass
/// and the drift of c_emp over the last two levels to stay within `tol`.
inline EstimateReport refinement_audit(const std::string& name, const std::vector<Grid>& grids,
                                       const std::function<EstimateReport(const Grid&)>& at, double tol) {
  if (grids.size() < 2) throw DomainError("refinement_audit: need at least two levels");
  EstimateReport out;
  Digest dg;
  dg.add(name);
  bool all = true;
  for (const Grid& g : grids) {
    EstimateReport r = at(g);
    dg.add(r.digest);
    all = all && r.pass;
    out.trace.push_back({g.hx, r.lhs, r.rhs, r.c_emp});
    out.lhs = r.lhs;
    out.rhs = r.rhs;
    out.c_emp = r.c_emp;
    out.slope = r.slope;
    out.quantities = r.quantities;
    if (!r.message.empty()) out.message = r.message;
  }
  out.name = name;
  out.digest = dg.hex();
  const std::size_t n = out.trace.size();
  out.drift = 0.0;
  for (std::size_t k = 1; k < n; ++k)
    out.drift = std::max(out.drift, relative_drift(out.trace[k - 1].c_emp, out.trace[k].c_emp));
  out.pass = all && std::isfinite(out.c_emp) && out.drift <= tol;
  if (out.drift > tol) out.message = "refinement drift " + detail::fmt_double(out.drift) + " exceeds " + detail::fmt_double(tol);
  return out;
}

// ---------------------------------------------------------------------------
// Ball quadrature.

/// Fraction of each node's dual cell inside the disk, by midpoint
/// subsampling of the cells the circle crosses.
inline GridFunction ball_weights(const Grid& g, double cx, double cy, double r, int sub = 16) {
  GridFunction w(g);
  const double r2 = r * r;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double xa = g.x(i) - 0.5 * g.hx, xb = g.x(i) + 0.5 * g.hx;
      const double ya = g.y(j) - 0.5 * g.hy, yb = g.y(j) + 0.5 * g.hy;
      const double nx = std::clamp(cx, xa, xb) - cx, ny = std::clamp(cy, ya, yb) - cy;
      if (nx * nx + ny * ny >= r2) continue;
      const double fx = std::max(std::abs(xa - cx), std::abs(xb - cx)), fy = std::max(std::abs(ya - cy), std::abs(yb - cy));
      if (fx * fx + fy * fy <= r2) {
        w(i, j) = 1.0;
        continue;
      }
      int in = 0;
      for (int b = 0; b < sub; ++b)
        for (int a = 0; a < sub; ++a) {
          const double px = xa + (a + 0.5) * g.hx / sub - cx, py = ya + (b + 0.5) * g.hy / sub - cy;
          if (px * px + py * py < r2) ++in;
        }
      w(i, j) = static_cast<double>(in) / (sub * sub);
    }
  return w;
}

namespace detail {

inline void require_ball_within(const GridFunction& f, const GridFunction& w, const char* what) {
  const Grid& g = f.grid();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (w(i, j) > 0.0 && !(f.valid(i, j) && g.ring(i, j) >= 1))
        throw GridError(std::string(what) + ": ball exits the grid region where the integrand is defined");
}

}  // namespace detail

/// ∫_{B_r} f, with partial cells weighted by coverage.
inline double ball_integral(const GridFunction& f, double cx, double cy, double r) {
  const GridFunction w = ball_weights(f.grid(), cx, cy, r);
  detail::require_ball_within(f, w, "ball_integral");
  const Grid& g = f.grid();
  double s = 0.0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (w(i, j) > 0.0) s += w(i, j) * f(i, j);
  return s * g.hx * g.hy;
}

/// ‖f‖_{L^p(B_r)}; the max over nodes touching the ball for p = ∞.
inline double ball_lp_norm(const GridFunction& f, double p, double cx, double cy, double r) {
  if (!(p >= 1.0)) throw DomainError("ball_lp_norm: p must be >= 1");
  if (std::isinf(p)) {
    const GridFunction w = ball_weights(f.grid(), cx, cy, r);
    detail::require_ball_within(f, w, "ball_lp_norm");
    double m = 0.0;
    const Grid& g = f.grid();
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (w(i, j) > 0.0) m = std::max(m, std::abs(f(i, j)));
    return m;
  }
  return std::pow(ball_integral(transform(f, [p](double v) { return std::pow(std::abs(v), p); }), cx, cy, r), 1.0 / p);
}

// ---------------------------------------------------------------------------
// Determinant bounds, gradient energy, ‖Δu‖_{L^p}.

inline DetBounds det_bounds(const GridFunction& u, const Mask& mask) {
  const HessianField h = hessian(u);
  require_mask_within(mask, h.xx, "det_bounds");
  DetBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  const Grid& g = u.grid();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (!mask(i, j)) continue;
      if (!(h.xx(i, j) > 0.0) || !(h.det(i, j) > 0.0)) throw ConvexityError("det_bounds: Hessian not positive definite", i, j);
      b.lambda = std::min(b.lambda, h.det(i, j));
      b.Lambda = std::max(b.Lambda, h.det(i, j));
    }
  if (b.lambda > b.Lambda) throw GridError("det_bounds: empty mask");
  return b;
}

/// ∫_{B_R} |∇v|³ (R² - |x-c|²)^α; the weight vanishes to order α on the
/// sphere, so a plain nodal sum is already second order.
inline double gradient_energy(const GridFunction& v, double R, double alpha, double cx = 0.0, double cy = 0.0) {
  if (!(alpha > 3.0)) throw DomainError("gradient_energy: alpha must exceed 3");
  if (!(R > 0.0)) throw DomainError("gradient_energy: R must be positive");
  const auto [vx, vy] = gradient(v);
  const Grid& g = v.grid();
  if (cx - R < g.x(vx.margin()) || cx + R > g.x(g.nx - 1 - vx.margin()) || cy - R < g.y(vx.margin()) ||
      cy + R > g.y(g.ny - 1 - vx.margin()))
    throw GridError("gradient_energy: ball exits grid");
  double s = 0.0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double d2 = std::pow(g.x(i) - cx, 2) + std::pow(g.y(j) - cy, 2);
      if (d2 >= R * R) continue;
      s += std::pow(std::hypot(vx(i, j), vy(i, j)), 3) * std::pow(R * R - d2, alpha);
    }
  return s * g.hx * g.hy;
}

inline double laplacian_lp(const GridFunction& u, double p, double r, double cx = 0.0, double cy = 0.0) {
  if (!(p >= 1.0)) throw DomainError("laplacian_lp: p must be >= 1");
  return ball_lp_norm(laplacian(u), p, cx, cy, r);
}

// ---------------------------------------------------------------------------
// Monge-Ampère Sobolev ratio ‖v‖_{L^χ} / (∫ U^{ij} v_i v_j)^{1/2}.

/// The energy is -Σ v·(A v) h², the exact discrete Dirichlet form of the
/// flux operator; v must vanish on rings 0-1 so no boundary term survives.
inline double ma_sobolev_ratio(const FluxOperator& op, const GridFunction& v, double chi) {
  if (!(chi > 2.0)) throw DomainError("ma_sobolev_ratio: chi must exceed 2");
  const Grid& g = v.grid();
  require_same_grid(v, op.cofactor().u11, "ma_sobolev_ratio");
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.ring(i, j) < op.margin() && v(i, j) != 0.0)
        throw DomainError("ma_sobolev_ratio: v must vanish near the boundary");
  const GridFunction av = op.apply(v);
  double energy = 0.0, lchi = 0.0;
  av.for_each_valid([&](int i, int j) { energy -= v(i, j) * av(i, j); });
  for (double x : v.values()) lchi += std::pow(std::abs(x), chi);
  energy *= g.hx * g.hy;
  lchi *= g.hx * g.hy;
  if (!(energy > 0.0)) throw DomainError("ma_sobolev_ratio: zero Dirichlet energy");
  return std::pow(lchi, 1.0 / chi) / std::sqrt(energy);
}

inline double ma_sobolev_ratio(const GridFunction& u, const GridFunction& v, double chi) {
  const HessianField h = hessian(u);
  require_convex(h);
  return ma_sobolev_ratio(FluxOperator(cofactor(h)), v, chi);
}

struct Bump {
  double cx = 0.0;
  double cy = 0.0;
  double r = 1.0;
};

/// (1 - |x-c|²/r²)³ on the disk, zero outside.
inline GridFunction sample_bump(const Grid& g, const Bump& b) {
  return GridFunction::sample(g, [&](double x, double y) {
    const double s2 = ((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (b.r * b.r);
    return s2 < 1.0 ? std::pow(1.0 - s2, 3) : 0.0;
  });
}

/// Seeded bumps with radius in [rmin, rmax], disks inside the box shrunk by `pad`.
/// Draws go through mt19937_64 with an explicit 53-bit mapping so the
/// sequence is the same on every standard library.
inline std::vector<Bump> random_bumps(std::uint64_t seed, int count, double xa, double xb, double ya, double yb,
                                      double rmin, double rmax, double pad) {
  std::mt19937_64 gen(seed);
  auto unit = [&gen] { return static_cast<double>(gen() >> 11) * 0x1.0p-53; };
  std::vector<Bump> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Bump b;
    b.r = rmin + (rmax - rmin) * unit();
    const double lo_x = xa + pad + b.r, hi_x = xb - pad - b.r, lo_y = ya + pad + b.r, hi_y = yb - pad - b.r;
    if (!(hi_x > lo_x) || !(hi_y > lo_y)) throw DomainError("random_bumps: box too small for the radius range");
    b.cx = lo_x + (hi_x - lo_x) * unit();
    b.cy = lo_y + (hi_y - lo_y) * unit();
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Degenerate Moser sup bound.

struct DegenerateCoefficients {
  GridFunction a11, a12, a22;
  GridFunction lambda;  ///< upper envelope λ(x)
  GridFunction d;       ///< lower quantity d(x)
  double p = 0.0, q = 0.0, p0 = 0.0;
};

/// n/p + 1/q < 2/n and p0 >= p/(n-1), with n = 2.
inline void require_moser_exponents(double p, double q, double p0) {
  if (!(p > 0.0) || !(q > 0.0) || !(p0 >= 1.0))
    throw DomainError("moser exponents must be positive (p0 >= 1)");
  if (!(2.0 / p + 1.0 / q < 1.0))
    throw DomainError("moser exponents violate 2/p + 1/q < 1 (p=" + detail::fmt_double(p) + ", q=" + detail::fmt_double(q) + ")");
  if (!(p0 >= p)) throw DomainError("moser exponents violate p0 >= p");
}

struct MoserOptions {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 1.0;
  double subsolution_tol = 1e-8;  ///< relative slack allowed in the tent inequalities
};

/// sup_{B_{1/2}} u ≤ C (‖u⁺‖_{L¹(B₁)} + ‖f‖_{L^{p₀}(B₁)}) for a discrete
/// subsolution: with the tent φ_k at node k the weak inequality
/// ∫ a∇u·∇φ_k + cuφ_k ≤ ∫ fφ_k reads -(A u)_k + c_k u_k ≤ f_k, A the flux
/// operator of a (mass lumped).
inline EstimateReport moser_supbound_ratio(const DegenerateCoefficients& coef, const GridFunction& c,
                                           const GridFunction& f, const GridFunction& u,
                                           const MoserOptions& opt = {}) {
  require_moser_exponents(coef.p, coef.q, coef.p0);
  for (const GridFunction* x : {&coef.a12, &coef.a22, &coef.lambda, &coef.d, &c, &f, &u})
    require_same_grid(coef.a11, *x, "moser_supbound_ratio");
  const Grid& g = u.grid();
  const double R = opt.radius;
  const GridFunction w1 = ball_weights(g, opt.cx, opt.cy, R);

  EstimateReport rep;
  rep.name = "moser";
  Digest dg;
  dg.add(coef.a11).add(coef.a12).add(coef.a22).add(c).add(f).add(u).add(coef.p).add(coef.q).add(coef.p0);

  // Structure conditions d/λ ≤ a ≤ λ on the ball, and the integrability of λ and 1/d.
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (w1(i, j) == 0.0) continue;
      const double a = coef.a11(i, j), b = coef.a12(i, j), e = coef.a22(i, j);
      const double mid = 0.5 * (a + e), rad = std::hypot(0.5 * (a - e), b);
      const double lam = coef.lambda(i, j), dd = coef.d(i, j);
      if (!(dd > 0.0) || !(lam > 0.0)) throw DomainError("moser: lambda and d must be positive on the ball at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      const double tol = 1e-12 * std::max(1.0, lam);
      if (mid - rad < dd / lam - tol || mid + rad > lam + tol)
        throw DomainError("moser: coefficients violate d/lambda <= a <= lambda at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
  const double lam_p = ball_lp_norm(coef.lambda, coef.p, opt.cx, opt.cy, R);
  const double dinv_q = ball_lp_norm(transform(coef.d, [](double v) { return 1.0 / v; }), coef.q, opt.cx, opt.cy, R);
  if (!std::isfinite(lam_p) || !std::isfinite(dinv_q)) throw DomainError("moser: lambda or 1/d not integrable on the grid");

  // Tent-function subsolution check at nodes whose stencil lies in the ball.
  const FluxOperator op(CofactorField{coef.a11, coef.a12, coef.a22});
  const GridFunction au = op.apply(u);
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t tents = 0;
  const double inner = R - std::hypot(g.hx, g.hy);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (!au.valid(i, j) || std::hypot(g.x(i) - opt.cx, g.y(j) - opt.cy) > inner) continue;
      ++tents;
      const double excess = -au(i, j) + c(i, j) * u(i, j) - f(i, j);
      const double scale = 1.0 + std::abs(f(i, j)) + std::abs(c(i, j) * u(i, j));
      worst = std::max(worst, excess / scale);
      if (excess > opt.subsolution_tol * scale)
        throw DomainError("moser: subsolution verification failed at node (" + std::to_string(i) + "," +
                          std::to_string(j) + "), excess " + detail::fmt_double(excess));
    }
  if (tents == 0) throw GridError("moser: no tent function fits inside the ball");

  double sup = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (std::hypot(g.x(i) - opt.cx, g.y(j) - opt.cy) <= 0.5 * R * (1.0 + 1e-12)) sup = std::max(sup, u(i, j));
  const double l1 = ball_integral(transform(u, [](double v) { return std::max(v, 0.0); }), opt.cx, opt.cy, R);
  const double fp0 = ball_lp_norm(f, coef.p0, opt.cx, opt.cy, R);
  rep.lhs = sup;
  rep.rhs = l1 + fp0;
  if (rep.lhs <= 0.0) {
    rep.c_emp = 0.0;
    rep.message = "sup <= 0: bound holds trivially";
  } else {
    rep.c_emp = rep.rhs > 0.0 ? rep.lhs / rep.rhs : std::numeric_limits<double>::infinity();
  }
  rep.pass = std::isfinite(rep.c_emp);
  rep.quantities = {{"u_plus_L1", l1}, {"f_Lp0", fp0}, {"lambda_Lp", lam_p},
                    {"dinv_Lq", dinv_q}, {"tents", static_cast<double>(tents)}, {"max_tent_excess", worst}};
  rep.digest = dg.hex();
  rep.trace.push_back({g.hx, rep.lhs, rep.rhs, rep.c_emp});
  return rep;
}

// ---------------------------------------------------------------------------
// C² quantity z = e^{w/2} u^{kl} w_k w_l + Δu, θ = 1.

/// Evaluates L z = D_j(U^{ij} D_i z) and reports, per node, the smallest C
/// with L z >= -C (|f| + |∇f| + Δu) z. The stencil is applied to differences
/// z_nb - z_c so constants map to zero exactly.
inline EstimateReport c2_quantity_check(const GridFunction& u, const GridFunction& f) {
  require_same_grid(u, f, "c2_quantity_check");
  const HessianField h = hessian(u);
  require_convex(h);
  const CofactorField U = cofactor(h);
  const GridFunction det = h.determinant();
  const GridFunction w = transform(det, [](double d) { return std::log(d); });
  const auto [wx, wy] = gradient(w);
  const auto [fx, fy] = gradient(f);
  const Grid& g = u.grid();
  GridFunction z(g, 0.0, wx.margin());
  z.for_each_valid([&](int i, int j) {
    // u^{kl} = U^{kl} / det.
    const double v = (U.u11(i, j) * wx(i, j) * wx(i, j) + 2.0 * U.u12(i, j) * wx(i, j) * wy(i, j) +
                      U.u22(i, j) * wy(i, j) * wy(i, j)) / det(i, j);
    z(i, j) = std::exp(0.5 * w(i, j)) * v + h.xx(i, j) + h.yy(i, j);
  });
  const FluxOperator op(U);
  const int m = std::max({z.margin() + 1, op.margin(), fx.margin()});

  EstimateReport rep;
  rep.name = "c2_quantity";
  rep.digest = Digest().add(u).add(f).hex();
  double cmax = 0.0, lhs_min = std::numeric_limits<double>::infinity(), rhs_at = 0.0;
  std::size_t nodes = 0;
  std::vector<std::array<double, 2>> lz;  // (L z, weight) per node, for the slack pass
  std::vector<std::array<int, 2>> at;
  for (int j = m; j < g.ny - m; ++j)
    for (int i = m; i < g.nx - m; ++i) {
      const FluxStencil s = op.stencil(i, j);
      double acc = 0.0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          if (di != 0 || dj != 0)
            acc += s.c[static_cast<std::size_t>(di + 1)][static_cast<std::size_t>(dj + 1)] * (z(i + di, j + dj) - z(i, j));
      const double weight = (std::abs(f(i, j)) + std::hypot(fx(i, j), fy(i, j)) + h.xx(i, j) + h.yy(i, j)) * z(i, j);
      if (!(weight > 0.0)) throw ConvexityError("c2_quantity_check: nonpositive weight", i, j);
      cmax = std::max(cmax, std::max(0.0, -acc / weight));
      if (acc < lhs_min) {
        lhs_min = acc;
        rhs_at = -weight;
      }
      lz.push_back({acc, weight});
      at.push_back({i, j});
      ++nodes;
    }
  if (nodes == 0) throw GridError("c2_quantity_check: grid too small");
  double slack = std::numeric_limits<double>::infinity();
  for (const auto& [a, wgt] : lz) slack = std::min(slack, a + cmax * wgt);
  rep.lhs = lhs_min;
  rep.rhs = cmax * rhs_at;
  rep.c_emp = cmax;
  rep.pass = std::isfinite(cmax) && slack >= -1e-12 * std::max(1.0, std::abs(lhs_min));
  rep.quantities = {{"min_slack", slack}, {"nodes", static_cast<double>(nodes)}, {"z_max", z.max_abs()}};
  rep.trace.push_back({g.hx, rep.lhs, rep.rhs, rep.c_emp});
  return rep;
}

// ---------------------------------------------------------------------------
// Bernstein / Liouville rescaling probe.

struct BernsteinOptions {
  double cx = 0.0;
  double cy = 0.0;
  double p = 2.0;  ///< exponent on |D²u| in the growth hypothesis
  double q = 1.0;  ///< exponent on (det D²u)^{-1}
  double flat_tol = 1e-9;
  double bounded_slope = 0.1;  ///< normalized hypothesis integrals count as bounded below this R-slope
};

/// Third derivatives of u as the Frobenius norm of centred differences of the Hessian.
inline GridFunction third_derivative_norm(const GridFunction& u) {
  const HessianField h = hessian(u);
  const GridFunction xxx = dx(h.xx), xxy = dy(h.xx), xyy = dx(h.yy), yyy = dy(h.yy);
  GridFunction out(u.grid(), 0.0, xxx.margin());
  out.for_each_valid([&](int i, int j) {
    out(i, j) = std::sqrt(xxx(i, j) * xxx(i, j) + 3 * xxy(i, j) * xxy(i, j) + 3 * xyy(i, j) * xyy(i, j) +
                          yyy(i, j) * yyy(i, j));
  });
  return out;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw DomainError("loglog_slope: need two or more points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double a = std::log(x[k]), b = std::log(y[k]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw DomainError("loglog_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / den;
}

/// For each R: ‖D³u_R‖_{L∞(B_{1/2})} = R·max_{B_{R/2}} |D³u| with u_R(x) = u(Rx)/R²,
/// and the growth hypothesis R^{-2} ∫_{B_R} |D²u|^p + (det D²u)^{-q}.
inline EstimateReport bernstein_probe(const GridFunction& u, const std::vector<double>& R_list,
                                      const BernsteinOptions& opt = {}) {
  if (R_list.size() < 2) throw DomainError("bernstein_probe: need at least two radii");
  for (std::size_t k = 0; k < R_list.size(); ++k)
    if (!(R_list[k] > 0.0) || (k > 0 && !(R_list[k] > R_list[k - 1])))
      throw DomainError("bernstein_probe: radii must be positive and increasing");
  const Grid& g = u.grid();
  const GridFunction d3 = third_derivative_norm(u);
  const HessianField h = hessian(u);
  GridFunction hyp(g, 0.0, h.margin());
  bool degenerate = false;
  hyp.for_each_valid([&](int i, int j) {
    const double fro = std::sqrt(h.xx(i, j) * h.xx(i, j) + 2 * h.xy(i, j) * h.xy(i, j) + h.yy(i, j) * h.yy(i, j));
    const double det = h.det(i, j);
    if (!(det > 0.0)) degenerate = true;
    hyp(i, j) = std::pow(fro, opt.p) + (det > 0.0 ? std::pow(det, -opt.q) : std::numeric_limits<double>::infinity());
  });

  EstimateReport rep;
  rep.name = "bernstein";
  Digest dg;
  dg.add(u);
  for (double r : R_list) dg.add(r);
  rep.digest = dg.hex();
  std::vector<double> norms, hyps;
  for (double R : R_list) {
    const GridFunction wd = ball_weights(g, opt.cx, opt.cy, 0.5 * R);
    detail::require_ball_within(d3, wd, "bernstein_probe");
    double m = 0.0;
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (std::hypot(g.x(i) - opt.cx, g.y(j) - opt.cy) <= 0.5 * R * (1.0 + 1e-12)) m = std::max(m, d3(i, j));
    norms.push_back(R * m);
    const double integral = ball_integral(hyp, opt.cx, opt.cy, R) / (R * R);
    hyps.push_back(integral);
    rep.quantities.push_back({"D3_R=" + detail::fmt_double(R), R * m});
    rep.quantities.push_back({"hyp_R=" + detail::fmt_double(R), integral});
  }
  const double umax = u.max_abs();
  bool flat = true;
  for (double n : norms) flat = flat && n <= opt.flat_tol * std::max(umax, 1.0);
  rep.quantities.push_back({"flat", flat ? 1.0 : 0.0});
  if (!flat) rep.slope = loglog_slope(R_list, norms);
  bool bounded = !degenerate;
  double hyp_slope = kNaN;
  if (bounded) {
    hyp_slope = loglog_slope(R_list, hyps);
    bounded = std::isfinite(hyp_slope) && hyp_slope <= opt.bounded_slope;
  }
  rep.quantities.push_back({"hyp_slope", hyp_slope});
  rep.quantities.push_back({"hyp_bounded", bounded ? 1.0 : 0.0});
  rep.lhs = norms.back();
  rep.rhs = 1.0 / R_list.back();  // the C/R decay the Liouville argument needs
  rep.c_emp = rep.lhs / rep.rhs;
  rep.pass = true;
  for (double n : norms) rep.pass = rep.pass && std::isfinite(n);
  rep.message = flat ? "flat: third differences vanish" : (bounded ? "" : "growth hypothesis unbounded");
  rep.trace.push_back({g.hx, rep.lhs, rep.rhs, rep.c_emp});
  return rep;
}

}  // namespace mage
