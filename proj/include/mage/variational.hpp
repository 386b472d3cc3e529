#pragma once

// The functionals A_θ(u) = ∫ F_θ(det D²u) and their starred counterparts on
// the partial-Legendre side, the Euler–Lagrange expressions of A*_θ, and a
// discrete first-variation check.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mage/error.hpp"
#include "mage/grid.hpp"
#include "mage/legendre.hpp"
#include "mage/theta.hpp"

namespace mage {

enum class Branch { kPower, kLog, kDetLogDet };

inline Branch branch_of(const ThetaFamily& f) {
  if (f.theta() == 0.0) return Branch::kLog;
  if (f.theta() == 1.0) return Branch::kDetLogDet;
  return Branch::kPower;
}

inline const char* branch_name(Branch b) {
  switch (b) {
    case Branch::kPower: return "power";
    case Branch::kLog: return "log";
    case Branch::kDetLogDet: return "det-log-det";
  }
  return "?";
}

struct FunctionalValue {
  double theta = 0.0;
  Branch branch = Branch::kPower;
  double value = 0.0;
  Grid grid;
};

namespace detail {

// θ-branch integrand as a function of d = det D²u.
inline double functional_density(double d, double theta, Branch b) {
  switch (b) {
    case Branch::kPower: return std::pow(d, theta);
    case Branch::kLog: return std::log(d);
    case Branch::kDetLogDet: return d * std::log(d);
  }
  return 0.0;
}

inline GridFunction functional_integrand(const GridFunction& u, const ThetaFamily& fam) {
  const HessianField h = hessian(u);
  require_convex(h);
  const Branch b = branch_of(fam);
  return transform(h.determinant(), [&](double d) { return functional_density(d, fam.theta(), b); });
}

// Starred integrand from a = u*_ξξ > 0 and c = u*_ηη < 0.
inline double star_density(double a, double c, double theta, Branch b) {
  const double w = -c / a;
  switch (b) {
    case Branch::kPower: return std::pow(-c, theta) * std::pow(a, 1.0 - theta);
    case Branch::kLog: return std::log(w) * a;
    case Branch::kDetLogDet: return w * std::log(w) * a;
  }
  return 0.0;
}

inline GridFunction star_integrand(const GridFunction& ustar, const ThetaFamily& fam) {
  const GridFunction a = dxx(ustar), c = dyy(ustar);
  const Branch b = branch_of(fam);
  GridFunction out(ustar.grid(), 0.0, a.margin());
  out.for_each_valid([&](int i, int j) {
    if (!(a(i, j) > 0.0) || !(c(i, j) < 0.0))
      throw ConvexityError("star functional: u* must be xi-convex and eta-concave (u*_xixi=" +
                               detail::fmt_double(a(i, j)) + ", u*_etaeta=" + detail::fmt_double(c(i, j)) + ")",
                           i, j);
    out(i, j) = star_density(a(i, j), c(i, j), fam.theta(), b);
  });
  return out;
}

// ∫_a^b of the piecewise-linear interpolant of a uniform row.
inline double row_integral(std::span<const double> row, double x0, double h, double a, double b, int lo, int hi) {
  auto value = [&](double x) {
    const double s = (x - x0) / h;
    const int k = std::clamp(static_cast<int>(std::floor(s)), lo, hi - 1);
    const double r = s - k;
    return (1 - r) * row[static_cast<std::size_t>(k)] + r * row[static_cast<std::size_t>(k + 1)];
  };
  const int ka = std::clamp(static_cast<int>(std::ceil((a - x0) / h)), lo, hi);
  const int kb = std::clamp(static_cast<int>(std::floor((b - x0) / h)), lo, hi);
  if (kb < ka) return 0.5 * (value(a) + value(b)) * (b - a);
  double sum = 0.5 * (value(a) + row[static_cast<std::size_t>(ka)]) * (x0 + ka * h - a);
  for (int k = ka; k < kb; ++k) sum += 0.5 * (row[static_cast<std::size_t>(k)] + row[static_cast<std::size_t>(k + 1)]) * h;
  sum += 0.5 * (row[static_cast<std::size_t>(kb)] + value(b)) * (b - (x0 + kb * h));
  return sum;
}

}  // namespace detail

/// A_θ(u) by trapezoid quadrature over the mask (which must avoid the boundary ring).
inline FunctionalValue functional_value(const GridFunction& u, const ThetaFamily& fam, const Mask& mask) {
  const GridFunction f = detail::functional_integrand(u, fam);
  return {fam.theta(), branch_of(fam), integral(f, mask), u.grid()};
}

/// A*_θ(u*) over the star nodes where the integrand is defined.
inline FunctionalValue functional_value_star(const GridFunction& ustar, const ThetaFamily& fam) {
  const GridFunction f = detail::star_integrand(ustar, fam);
  return {fam.theta(), branch_of(fam), integral(f, Mask::interior(ustar.grid(), f.margin())), ustar.grid()};
}

inline FunctionalValue functional_value_star(const TransformResult& t, const ThetaFamily& fam) {
  return functional_value_star(t.ustar, fam);
}

/// A_θ(u) over the preimage of the region integrated by functional_value_star:
/// rows η_1..η_{n-2}, each between x(ξ_1) and x(ξ_{n-2}).
inline FunctionalValue functional_value_preimage(const GridFunction& u, const TransformResult& t,
                                                 const ThetaFamily& fam) {
  const GridFunction f = detail::functional_integrand(u, fam);
  const Grid& g = u.grid();
  const Grid& s = t.star();
  std::vector<double> rows(static_cast<std::size_t>(g.ny), 0.0);
  for (int j = 1; j + 1 < g.ny; ++j)
    rows[static_cast<std::size_t>(j)] =
        detail::row_integral(detail::row_of(f, j), g.x0, g.hx, t.x_of_xi(1, j), t.x_of_xi(s.nx - 2, j), 1, g.nx - 2);
  double value = 0.0;
  for (int j = 1; j + 2 < g.ny; ++j)
    value += 0.5 * (rows[static_cast<std::size_t>(j)] + rows[static_cast<std::size_t>(j + 1)]) * g.hy;
  return {fam.theta(), branch_of(fam), value, g};
}

// ---------------------------------------------------------------------------
// Euler–Lagrange expressions on the star side.

namespace detail {
inline void require_positive(const GridFunction& w, const char* what) {
  w.for_each_valid([&](int i, int j) {
    if (!(w(i, j) > 0.0)) throw ConvexityError(std::string(what) + ": nonpositive w* " + fmt_double(w(i, j)), i, j);
  });
}
}  // namespace detail

/// Q(w) = w w_ξξ + w_ηη + (θ-1) w_ξ² + ((θ-2)/w) w_η².
inline GridFunction el_residual_star(const GridFunction& w, const ThetaFamily& fam) {
  detail::require_positive(w, "el_residual_star");
  const HessianField h = hessian(w);
  const auto [wx, wy] = gradient(w);
  const double th = fam.theta();
  GridFunction out(w.grid(), 0.0, h.margin());
  out.for_each_valid([&](int i, int j) {
    const double v = w(i, j);
    out(i, j) = v * h.xx(i, j) + h.yy(i, j) + (th - 1.0) * wx(i, j) * wx(i, j) + (th - 2.0) / v * wy(i, j) * wy(i, j);
  });
  return out;
}

/// The branch's Euler–Lagrange expression before simplification:
///   θ∈(0,1): -θ (w^{θ-1})_ηη + (1-θ)(w^θ)_ξξ
///   θ=0:     -(w^{-1})_ηη + (log w)_ξξ
///   θ=1:     -w_ξξ - (log w)_ηη
inline GridFunction el_raw_star(const GridFunction& w, const ThetaFamily& fam) {
  detail::require_positive(w, "el_raw_star");
  const double th = fam.theta();
  auto apply = [&](auto fa, double ca, auto fb, double cb) {
    const GridFunction a = dxx(transform(w, fa)), b = dyy(transform(w, fb));
    return combine(a, b, [=](double p, double q) { return ca * p + cb * q; });
  };
  switch (branch_of(fam)) {
    case Branch::kPower:
      return apply([th](double v) { return std::pow(v, th); }, 1.0 - th, [th](double v) { return std::pow(v, th - 1.0); }, -th);
    case Branch::kLog:
      return apply([](double v) { return std::log(v); }, 1.0, [](double v) { return 1.0 / v; }, -1.0);
    case Branch::kDetLogDet:
      return apply([](double v) { return v; }, -1.0, [](double v) { return std::log(v); }, -1.0);
  }
  return {};
}

/// The factor k(w) with E = k(w) Q: θ(1-θ)w^{θ-2}, w^{-2} (θ=0), -w^{-1} (θ=1).
inline double el_factor(double w, const ThetaFamily& fam) {
  switch (branch_of(fam)) {
    case Branch::kPower: return fam.theta() * (1.0 - fam.theta()) * std::pow(w, fam.theta() - 2.0);
    case Branch::kLog: return 1.0 / (w * w);
    case Branch::kDetLogDet: return -1.0 / w;
  }
  return 0.0;
}

struct FirstVariationReport {
  double theta = 0.0;
  Branch branch = Branch::kPower;
  double lhs = 0.0;  ///< centred difference quotient of A*_θ along φ
  double rhs = 0.0;  ///< ∫ E(w*) φ
  double rel_err = 0.0;
  double abs_err = 0.0;
  double eps = 0.0;  ///< step picked on the plateau
  std::vector<double> eps_scan;
  std::vector<double> quotient_scan;
  bool pass = false;
  Grid grid;
};

struct FirstVariationOptions {
  /// Step sizes as multiples of ‖D²u*‖∞ / ‖D²φ‖∞ (A*_θ sees u* only through second differences).
  std::vector<double> eps_factors = {1e-3, 1e-4, 1e-5, 1e-6};
  double rel_tol = 1e-3;
  double abs_tol = 1e-8;
  double plateau_tol = 1e-2;  ///< relative spread allowed between the two most stable quotients
};

/// φ must vanish within three rings of the star boundary (the integrand's
/// own margin plus two rings), so the discrete summation by parts is exact.
/// Each quotient is Richardson-extrapolated from steps ε and ε/2.
inline FirstVariationReport first_variation_check(const GridFunction& ustar, const ThetaFamily& fam,
                                                  const GridFunction& phi, const FirstVariationOptions& opt = {}) {
  require_same_grid(ustar, phi, "first_variation_check");
  const Grid& g = ustar.grid();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.ring(i, j) < 3 && phi(i, j) != 0.0)
        throw DomainError("first_variation_check: phi must vanish within three rings of the boundary");
  if (opt.eps_factors.size() < 2) throw DomainError("first_variation_check: need at least two eps values");
  const HessianField hp = hessian(phi), hu = hessian(ustar);
  const double phi_scale = std::max(hp.xx.max_abs(), hp.yy.max_abs());
  if (!(phi_scale > 0.0)) throw DomainError("first_variation_check: phi has no curvature");
  const double scale = std::max({hu.xx.max_abs(), hu.yy.max_abs(), 1e-300}) / phi_scale;

  FirstVariationReport rep;
  rep.theta = fam.theta();
  rep.branch = branch_of(fam);
  rep.grid = g;
  auto quotient = [&](double eps) {
    const GridFunction up = combine(ustar, phi, [eps](double a, double b) { return a + eps * b; });
    const GridFunction dn = combine(ustar, phi, [eps](double a, double b) { return a - eps * b; });
    return (functional_value_star(up, fam).value - functional_value_star(dn, fam).value) / (2.0 * eps);
  };
  for (double c : opt.eps_factors) {
    const double eps = c * scale;
    rep.eps_scan.push_back(eps);
    rep.quotient_scan.push_back((4.0 * quotient(0.5 * eps) - quotient(eps)) / 3.0);
  }
  std::size_t best = 0;
  double spread = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < rep.quotient_scan.size(); ++k) {
    const double d = std::abs(rep.quotient_scan[k] - rep.quotient_scan[k + 1]);
    if (d < spread) {
      spread = d;
      best = k;
    }
  }
  rep.lhs = rep.quotient_scan[best];
  rep.eps = rep.eps_scan[best];
  const double mag = std::max(std::abs(rep.quotient_scan[best + 1]), std::abs(rep.lhs));
  if (spread > opt.plateau_tol * mag && spread > opt.abs_tol)
    throw Error("first_variation_check: no eps plateau (best spread " + detail::fmt_double(spread) + ")");

  const GridFunction w = wstar(ustar);
  const GridFunction E = el_raw_star(w, fam);
  rep.rhs = weighted_integral(E, phi, Mask::interior(g, E.margin()));
  rep.abs_err = std::abs(rep.lhs - rep.rhs);
  const double denom = std::max(std::abs(rep.lhs), std::abs(rep.rhs));
  rep.rel_err = denom > 0.0 ? rep.abs_err / denom : 0.0;
  rep.pass = rep.rel_err <= opt.rel_tol || rep.abs_err <= opt.abs_tol;
  return rep;
}

inline FirstVariationReport first_variation_check(const TransformResult& t, const ThetaFamily& fam,
                                                  const GridFunction& phi, const FirstVariationOptions& opt = {}) {
  return first_variation_check(t.ustar, fam, phi, opt);
}

}  // namespace mage
