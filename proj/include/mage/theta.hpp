#pragma once

// The theta family of fourth-order equations U^{ij} w_{ij} = f with
// w = det^{-(1-theta)} (theta < 1) or w = log det (theta = 1): cofactor
// algebra, right-hand-side models, and the nondivergence and flux-form
// residuals.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <variant>

#include "mage/error.hpp"
#include "mage/expr.hpp"
#include "mage/grid.hpp"

namespace mage {

class ThetaFamily {
 public:
  explicit ThetaFamily(double theta) : theta_(theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw DomainError("theta must lie in [0, 1]");
  }

  double theta() const noexcept { return theta_; }
  bool logarithmic() const noexcept { return theta_ == 1.0; }

  double w(double det) const { return logarithmic() ? std::log(det) : std::pow(det, -(1.0 - theta_)); }
  double det(double w) const { return logarithmic() ? std::exp(w) : std::pow(w, -1.0 / (1.0 - theta_)); }

 private:
  double theta_;
};

inline GridFunction w_of_det(const GridFunction& det, const ThetaFamily& family) {
  GridFunction out(det.grid(), 0.0, det.margin());
  out.for_each_valid([&](int i, int j) {
    const double d = det(i, j);
    if (!(d > 0.0)) throw ConvexityError("nonpositive determinant " + detail::fmt_double(d), i, j);
    out(i, j) = family.w(d);
  });
  return out;
}

inline GridFunction det_of_w(const GridFunction& w, const ThetaFamily& family) {
  GridFunction out(w.grid(), 0.0, w.margin());
  out.for_each_valid([&](int i, int j) {
    const double v = w(i, j);
    if (!family.logarithmic() && !(v > 0.0)) throw ConvexityError("nonpositive w " + detail::fmt_double(v), i, j);
    out(i, j) = family.det(v);
  });
  return out;
}

/// Cofactor matrix of D^2 u: U^{11} = u_yy, U^{12} = -u_xy, U^{22} = u_xx.
struct CofactorField {
  GridFunction u11;
  GridFunction u12;
  GridFunction u22;

  const Grid& grid() const noexcept { return u11.grid(); }
  int margin() const noexcept { return u11.margin(); }
  double det(int i, int j) const noexcept { return u11(i, j) * u22(i, j) - u12(i, j) * u12(i, j); }
  std::pair<double, double> eigenvalues(int i, int j) const noexcept {
    const double a = u11(i, j), b = u12(i, j), c = u22(i, j);
    const double mean = 0.5 * (a + c);
    const double rad = std::hypot(0.5 * (a - c), b);
    return {mean - rad, mean + rad};
  }
  double max_abs() const { return std::max({u11.max_abs(), u12.max_abs(), u22.max_abs()}); }
};

inline CofactorField cofactor(const HessianField& h) {
  return CofactorField{h.yy, transform(h.xy, [](double v) { return -v; }), h.xx};
}

/// Throws ConvexityError at the first valid node where D^2 u is not positive definite.
inline void require_convex(const HessianField& h) {
  h.xx.for_each_valid([&](int i, int j) {
    const double d = h.det(i, j);
    if (!(h.xx(i, j) > 0.0) || !(d > 0.0))
      throw ConvexityError("convexity failure (u_xx=" + detail::fmt_double(h.xx(i, j)) +
                               ", det=" + detail::fmt_double(d) + ")",
                           i, j);
  });
}

/// Discrete row divergence sum_i D_i U^{ij}, j = 1, 2, built from centred
/// first differences only (U^{11} = D_y D_y u, U^{12} = -D_x D_y u,
/// U^{22} = D_x D_x u). The differences are taken undivided and scaled once,
/// so both terms of each component are sums of the same nodal values and
/// cancel to roundoff.
inline std::pair<GridFunction, GridFunction> cofactor_divergence(const GridFunction& u) {
  const Grid& g = u.grid();
  g.validate();
  const int m = u.margin();
  GridFunction ay(g, 0.0, m + 1), ax(g, 0.0, m + 1);
  ay.for_each_valid([&](int i, int j) {
    ay(i, j) = u(i, j + 1) - u(i, j - 1);
    ax(i, j) = u(i + 1, j) - u(i - 1, j);
  });
  GridFunction byy(g, 0.0, m + 2), cxy(g, 0.0, m + 2), bxx(g, 0.0, m + 2), cyx(g, 0.0, m + 2);
  byy.for_each_valid([&](int i, int j) {
    byy(i, j) = ay(i, j + 1) - ay(i, j - 1);
    cxy(i, j) = ay(i + 1, j) - ay(i - 1, j);
    bxx(i, j) = ax(i + 1, j) - ax(i - 1, j);
    cyx(i, j) = ax(i, j + 1) - ax(i, j - 1);
  });
  GridFunction d1(g, 0.0, m + 3), d2(g, 0.0, m + 3);
  const double s1 = 1.0 / (8.0 * g.hx * g.hy * g.hy);
  const double s2 = 1.0 / (8.0 * g.hx * g.hx * g.hy);
  d1.for_each_valid([&](int i, int j) {
    d1(i, j) = ((byy(i + 1, j) - byy(i - 1, j)) - (cxy(i, j + 1) - cxy(i, j - 1))) * s1;
    d2(i, j) = ((bxx(i, j + 1) - bxx(i, j - 1)) - (cyx(i + 1, j) - cyx(i - 1, j))) * s2;
  });
  return {std::move(d1), std::move(d2)};
}

// ---------------------------------------------------------------------------
// Right-hand sides.

/// A field given either in closed form (of x, y, u) or as samples.
using FieldSource = std::variant<Expression, GridFunction>;

struct RhsZero {};
struct RhsAnalytic {
  Expression f;
};
/// f = div(g) + h.
struct RhsDivForm {
  FieldSource g1;
  FieldSource g2;
  FieldSource h;
};
/// f = div(|grad u|^{p-2} grad u) + f0(x, u).
struct RhsPLaplacian {
  double p = 2.0;
  Expression f0;
};

using RhsSpec = std::variant<RhsZero, RhsAnalytic, RhsDivForm, RhsPLaplacian>;

inline constexpr double kFluxFloor = 1e-10;

struct RhsValue {
  GridFunction f;
  std::size_t floored_faces = 0;  ///< p-Laplacian faces where |grad u| hit the floor
};

inline GridFunction resolve(const FieldSource& src, const GridFunction& u) {
  if (const auto* e = std::get_if<Expression>(&src)) {
    GridFunction out(u.grid(), 0.0, u.margin());
    const Grid& g = u.grid();
    out.for_each_valid([&](int i, int j) { out(i, j) = (*e)(g.x(i), g.y(j), u(i, j)); });
    return out;
  }
  const auto& field = std::get<GridFunction>(src);
  require_same_grid(field, u, "right-hand side");
  return field;
}

namespace detail {

inline RhsValue plaplacian(const RhsPLaplacian& spec, const GridFunction& u, double floor) {
  if (!(spec.p > 1.0)) throw DomainError("p-Laplacian source needs p > 1");
  const Grid& g = u.grid();
  const int m = u.margin();
  RhsValue out{GridFunction(g, 0.0, m + 1), 0};
  const double e = spec.p - 2.0;
  auto flux_scale = [&](double gx, double gy) {
    double mag = std::hypot(gx, gy);
    if (e < 0.0 && mag < floor) {
      mag = floor;
      ++out.floored_faces;
    }
    return std::pow(mag, e);
  };
  // Flux through the east face of (i, j) and the north face of (i, j).
  auto fx = [&](int i, int j) {
    const double gx = (u(i + 1, j) - u(i, j)) / g.hx;
    const double gy = ((u(i, j + 1) - u(i, j - 1)) + (u(i + 1, j + 1) - u(i + 1, j - 1))) / (4.0 * g.hy);
    return flux_scale(gx, gy) * gx;
  };
  auto fy = [&](int i, int j) {
    const double gy = (u(i, j + 1) - u(i, j)) / g.hy;
    const double gx = ((u(i + 1, j) - u(i - 1, j)) + (u(i + 1, j + 1) - u(i - 1, j + 1))) / (4.0 * g.hx);
    return flux_scale(gx, gy) * gy;
  };
  out.f.for_each_valid([&](int i, int j) {
    const double div = (fx(i, j) - fx(i - 1, j)) / g.hx + (fy(i, j) - fy(i, j - 1)) / g.hy;
    out.f(i, j) = div + spec.f0(g.x(i), g.y(j), u(i, j));
  });
  return out;
}

}  // namespace detail

/// Nodal values of the right-hand side f for the current iterate u.
inline RhsValue rhs_eval(const RhsSpec& spec, const GridFunction& u, double flux_floor = kFluxFloor) {
  u.grid().validate();
  return std::visit(
      [&](const auto& s) -> RhsValue {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, RhsZero>) {
          return {GridFunction(u.grid(), 0.0, u.margin()), 0};
        } else if constexpr (std::is_same_v<T, RhsAnalytic>) {
          return {resolve(FieldSource{s.f}, u), 0};
        } else if constexpr (std::is_same_v<T, RhsDivForm>) {
          const GridFunction g1 = resolve(s.g1, u), g2 = resolve(s.g2, u), h = resolve(s.h, u);
          const GridFunction div = combine(dx(g1), dy(g2), [](double a, double b) { return a + b; });
          return {combine(div, h, [](double a, double b) { return a + b; }), 0};
        } else {
          return detail::plaplacian(s, u, flux_floor);
        }
      },
      spec);
}

// ---------------------------------------------------------------------------
// Flux-form operator w -> D_j(U^{ij} D_i w).

/// Nine-point weights of the flux-form operator at one node, indexed [di+1][dj+1].
struct FluxStencil {
  std::array<std::array<double, 3>, 3> c{};
};

/// The operator is the nodal derivative of the discrete energy
///   sum_faces a11 (D+x v)(D+x w) + sum_faces a22 (D+y v)(D+y w)
///   + sum_cells a12 [(Dx v)(Dy w) + (Dy v)(Dx w)],
/// with U^{11}, U^{22} averaged onto faces and U^{12} onto cell centres, so
/// the assembled matrix is exactly symmetric.
class FluxOperator {
 public:
  explicit FluxOperator(CofactorField U) : U_(std::move(U)) {}

  const CofactorField& cofactor() const noexcept { return U_; }
  /// Ring from which stencils are defined.
  int margin() const noexcept { return U_.margin() + 1; }

  FluxStencil stencil(int i, int j) const noexcept {
    const Grid& g = U_.grid();
    const double ihx2 = 1.0 / (g.hx * g.hx), ihy2 = 1.0 / (g.hy * g.hy);
    FluxStencil s;
    auto& c = s.c;
    const double a11e = 0.5 * (U_.u11(i, j) + U_.u11(i + 1, j));
    const double a11w = 0.5 * (U_.u11(i - 1, j) + U_.u11(i, j));
    const double a22n = 0.5 * (U_.u22(i, j) + U_.u22(i, j + 1));
    const double a22s = 0.5 * (U_.u22(i, j - 1) + U_.u22(i, j));
    c[2][1] += a11e * ihx2;
    c[0][1] += a11w * ihx2;
    c[1][2] += a22n * ihy2;
    c[1][0] += a22s * ihy2;
    c[1][1] -= (a11e + a11w) * ihx2 + (a22n + a22s) * ihy2;
    for (int ci = -1; ci <= 0; ++ci)
      for (int cj = -1; cj <= 0; ++cj) {
        const int i0 = i + ci, j0 = j + cj;
        const double a12 =
            0.25 * (U_.u12(i0, j0) + U_.u12(i0 + 1, j0) + U_.u12(i0, j0 + 1) + U_.u12(i0 + 1, j0 + 1));
        const double sx = ci == -1 ? 1.0 : -1.0;
        const double sy = cj == -1 ? 1.0 : -1.0;
        // -a12 [ sx/(2hx) (Dy w)_c + sy/(2hy) (Dx w)_c ], corners relative to (i, j).
        const double kx = -a12 * sx / (4.0 * g.hx * g.hy);
        const double ky = -a12 * sy / (4.0 * g.hx * g.hy);
        const int li = ci + 1, lj = cj + 1;  // lower-left corner index in the 3x3 patch
        // (Dy w)_c * 2hy = w(i0,j0+1) - w(i0,j0) + w(i0+1,j0+1) - w(i0+1,j0)
        c[li][lj + 1] += kx;
        c[li][lj] -= kx;
        c[li + 1][lj + 1] += kx;
        c[li + 1][lj] -= kx;
        // (Dx w)_c * 2hx = w(i0+1,j0) - w(i0,j0) + w(i0+1,j0+1) - w(i0,j0+1)
        c[li + 1][lj] += ky;
        c[li][lj] -= ky;
        c[li + 1][lj + 1] += ky;
        c[li][lj + 1] -= ky;
      }
    return s;
  }

  GridFunction apply(const GridFunction& w) const {
    require_same_grid(w, U_.u11, "FluxOperator::apply");
    GridFunction out(w.grid(), 0.0, std::max(margin(), w.margin() + 1));
    out.for_each_valid([&](int i, int j) {
      const FluxStencil s = stencil(i, j);
      double acc = 0.0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) acc += s.c[di + 1][dj + 1] * w(i + di, j + dj);
      out(i, j) = acc;
    });
    return out;
  }

 private:
  CofactorField U_;
};

/// Nodal U^{ij} w_{ij} - f with w computed from det D^2 u.
inline GridFunction fourth_order_residual(const GridFunction& u, const ThetaFamily& family, const RhsSpec& spec) {
  const HessianField h = hessian(u);
  require_convex(h);
  const GridFunction w = w_of_det(h.determinant(), family);
  const HessianField hw = hessian(w);
  const CofactorField U = cofactor(h);
  const GridFunction f = rhs_eval(spec, u).f;
  GridFunction out(u.grid(), 0.0, std::max(hw.margin(), f.margin()));
  out.for_each_valid([&](int i, int j) {
    out(i, j) = U.u11(i, j) * hw.xx(i, j) + 2.0 * U.u12(i, j) * hw.xy(i, j) + U.u22(i, j) * hw.yy(i, j) - f(i, j);
  });
  return out;
}

/// Flux-form residual D_j(U^{ij} D_i w) - (D_i g^i + h).
inline GridFunction divergence_form_residual(const GridFunction& u, const GridFunction& w, const RhsSpec& spec) {
  require_same_grid(u, w, "divergence_form_residual");
  const HessianField h = hessian(u);
  require_convex(h);
  const FluxOperator op(cofactor(h));
  const GridFunction lw = op.apply(w);
  const GridFunction f = rhs_eval(spec, u).f;
  return combine(lw, f, [](double a, double b) { return a - b; });
}

struct DetBounds {
  double lambda = 0.0;
  double Lambda = 0.0;
};

/// Nodewise check of det/(c Δu) I <= U <= c (Δu)^{n-1} I with n = 2, c = 1.
struct EllipticBoundsReport {
  bool holds = true;
  double min_lower_slack = 0.0;  ///< min over nodes of eig_min(U) - det/Δu
  double min_upper_slack = 0.0;  ///< min over nodes of Δu - eig_max(U)
  int worst_i = -1;
  int worst_j = -1;
  double c = 1.0;
};

inline EllipticBoundsReport elliptic_bounds_check(const GridFunction& u) {
  const HessianField h = hessian(u);
  require_convex(h);
  const CofactorField U = cofactor(h);
  EllipticBoundsReport rep;
  rep.min_lower_slack = rep.min_upper_slack = std::numeric_limits<double>::infinity();
  double worst = std::numeric_limits<double>::infinity();
  h.xx.for_each_valid([&](int i, int j) {
    const double lap = h.xx(i, j) + h.yy(i, j);
    const auto [lo, hi] = U.eigenvalues(i, j);
    const double lower = lo - U.det(i, j) / (rep.c * lap);
    const double upper = rep.c * lap - hi;
    rep.min_lower_slack = std::min(rep.min_lower_slack, lower);
    rep.min_upper_slack = std::min(rep.min_upper_slack, upper);
    const double tol = 1e-12 * std::max(1.0, lap);
    if (std::min(lower, upper) < worst) {
      worst = std::min(lower, upper);
      rep.worst_i = i;
      rep.worst_j = j;
    }
    if (lower < -tol || upper < -tol) rep.holds = false;
  });
  return rep;
}

}  // namespace mage
