#pragma once

// Partial Legendre transform in x: (ξ, η) = (u_x, y), u*(ξ, η) = x u_x - u.
// Star fields live on a uniform (ξ, η) grid whose ξ-extent is the
// intersection of the row ranges and whose η-nodes are the original y-nodes.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mage/error.hpp"
#include "mage/grid.hpp"
#include "mage/interp.hpp"

namespace mage {

struct TransformOptions {
  double convexity_floor = 1e-8;  ///< minimum admissible u_xx
  int nxi = 0;                    ///< star ξ-nodes; 0 keeps the source nx
};

struct TransformResult {
  Grid source;
  GridFunction ustar;     ///< u* on the star grid
  GridFunction x_of_xi;   ///< x(ξ, η) at star nodes
  std::vector<std::vector<double>> row_xi;  ///< ξ_i = centred u_x at i = 1..nx-2, per row
  std::vector<std::array<double, 2>> row_range;
  double xi_lo = 0.0;
  double xi_hi = 0.0;

  const Grid& star() const noexcept { return ustar.grid(); }
};

namespace detail {

inline std::span<const double> row_of(const GridFunction& f, int j) {
  const Grid& g = f.grid();
  return f.values().subspan(static_cast<std::size_t>(j) * static_cast<std::size_t>(g.nx), static_cast<std::size_t>(g.nx));
}

}  // namespace detail

inline TransformResult forward(const GridFunction& u, const TransformOptions& opt = {}) {
  const Grid& g = u.grid();
  g.validate();
  if (u.margin() != 0) throw GridError("forward: u must be defined on the full grid");
  TransformResult t;
  t.source = g;
  t.row_xi.resize(static_cast<std::size_t>(g.ny));
  t.row_range.resize(static_cast<std::size_t>(g.ny));
  t.xi_lo = -std::numeric_limits<double>::infinity();
  t.xi_hi = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.ny; ++j) {
    auto& xi = t.row_xi[static_cast<std::size_t>(j)];
    for (int i = 1; i + 1 < g.nx; ++i) {
      const double uxx = (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j)) / (g.hx * g.hx);
      if (!(uxx >= opt.convexity_floor))
        throw ConvexityError("forward: u_xx = " + detail::fmt_double(uxx) + " below the convexity floor", i, j);
      xi.push_back((u(i + 1, j) - u(i - 1, j)) / (2.0 * g.hx));
      if (xi.size() > 1 && !(xi.back() > xi[xi.size() - 2]))
        throw ConvexityError("forward: u_x not strictly increasing along the row", i, j);
    }
    t.row_range[static_cast<std::size_t>(j)] = {xi.front(), xi.back()};
    t.xi_lo = std::max(t.xi_lo, xi.front());
    t.xi_hi = std::min(t.xi_hi, xi.back());
  }
  if (!(t.xi_hi > t.xi_lo)) throw DomainError("forward: rows have an empty common xi-range");

  const int nxi = opt.nxi > 0 ? opt.nxi : g.nx;
  const Grid star{t.xi_lo, g.y0, (t.xi_hi - t.xi_lo) / (nxi - 1), g.hy, nxi, g.ny};
  star.validate();
  t.ustar = GridFunction(star);
  t.x_of_xi = GridFunction(star);
  std::vector<double> xs;
  for (int i = 1; i + 1 < g.nx; ++i) xs.push_back(g.x(i));
  for (int j = 0; j < g.ny; ++j) {
    const Pchip inverse(t.row_xi[static_cast<std::size_t>(j)], xs);
    const auto row = detail::row_of(u, j);
    for (int k = 0; k < nxi; ++k) {
      // Pin the end nodes so roundoff in the grid spacing cannot leave the row range.
      const double xi = k == nxi - 1 ? t.xi_hi : star.x(k);
      const double x = inverse(xi);
      t.x_of_xi(k, j) = x;
      // Sixth-order row interpolation keeps its error out of second differences of u*.
      t.ustar(k, j) = x * xi - lagrange(row, g.x0, g.hx, x, 0, g.nx - 1, 6);
    }
  }
  return t;
}

/// Samples f along the row maps: value at star node (k, j) is the row-j cubic
/// interpolant of f at x(ξ_k). The result keeps f's margin on the star grid.
inline GridFunction pull_to_star(const GridFunction& f, const TransformResult& t) {
  if (!(f.grid() == t.source)) throw GridError("pull_to_star: field is not on the transform's source grid");
  const Grid& g = t.source;
  const int m = f.margin();
  GridFunction out(t.star(), 0.0, m);
  out.for_each_valid([&](int k, int j) {
    out(k, j) = lagrange4(detail::row_of(f, j), g.x0, g.hx, t.x_of_xi(k, j), m, g.nx - 1 - m);
  });
  return out;
}

/// w* = -u*_ηη / u*_ξξ on star nodes.
inline GridFunction wstar(const GridFunction& ustar) {
  const GridFunction a = dxx(ustar), b = dyy(ustar);
  GridFunction out(ustar.grid(), 0.0, a.margin());
  out.for_each_valid([&](int k, int j) {
    if (!(a(k, j) > 0.0)) throw ConvexityError("wstar: degenerate u*_xixi = " + detail::fmt_double(a(k, j)), k, j);
    out(k, j) = -b(k, j) / a(k, j);
  });
  return out;
}

inline GridFunction wstar(const TransformResult& t) { return wstar(t.ustar); }

/// Max nodal residual of each transform identity, star derivatives against
/// source quantities pulled through the row maps.
struct IdentityReport {
  static constexpr std::array<const char*, 5> kNames = {"ustar_xi=x", "ustar_xixi=1/u_xx", "ustar_eta=-u_y",
                                                        "ustar_etaeta=-det/u_xx", "ustar_xieta=-u_xy/u_xx"};
  std::array<double, 5> residual{};
  double max() const { return *std::max_element(residual.begin(), residual.end()); }
};

inline IdentityReport identity_report(const GridFunction& u, const TransformResult& t) {
  const HessianField h = hessian(u);
  const GridFunction uy = dy(u);
  const GridFunction inv_uxx = transform(h.xx, [](double v) { return 1.0 / v; });
  const GridFunction det_ratio = combine(h.determinant(), h.xx, [](double d, double a) { return -d / a; });
  const GridFunction cross = combine(h.xy, h.xx, [](double b, double a) { return -b / a; });
  const GridFunction neg_uy = transform(uy, [](double v) { return -v; });

  const HessianField hs = hessian(t.ustar);
  const GridFunction lhs[5] = {dx(t.ustar), hs.xx, dy(t.ustar), hs.yy, hs.xy};
  const GridFunction rhs[5] = {t.x_of_xi, pull_to_star(inv_uxx, t), pull_to_star(neg_uy, t),
                               pull_to_star(det_ratio, t), pull_to_star(cross, t)};
  IdentityReport rep;
  for (int q = 0; q < 5; ++q) {
    const GridFunction d = combine(lhs[q], rhs[q], [](double a, double b) { return a - b; });
    rep.residual[static_cast<std::size_t>(q)] = d.max_abs();
  }
  return rep;
}

struct InvolutionReport {
  double max_error = 0.0;
  Grid grid;  ///< the (x, y) grid on which u** was compared with u
};

/// Transforms u twice and compares u** with u sampled along the rows.
inline InvolutionReport involution_check(const GridFunction& u, const TransformOptions& opt = {}) {
  const TransformResult once = forward(u, opt);
  const TransformResult twice = forward(once.ustar, opt);
  const GridFunction back = twice.ustar;
  const Grid& g = u.grid();
  InvolutionReport rep;
  rep.grid = back.grid();
  back.for_each_valid([&](int k, int j) {
    const double x = back.grid().x(k);
    const double ref = lagrange4(detail::row_of(u, j), g.x0, g.hx, x, 0, g.nx - 1);
    rep.max_error = std::max(rep.max_error, std::abs(back(k, j) - ref));
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Convexity modulus and image ball.

struct ConvexityModulus {
  std::vector<double> t;
  std::vector<double> m;  ///< +inf where no node pair is farther apart than t
};

/// m_u(t) = min over nodes z (interior) and x with |x - z| > t of u(x) - ℓ_z(x),
/// ℓ_z the tangent plane from the centred gradient at z. Brute force over pairs.
inline ConvexityModulus modulus_of_convexity(const GridFunction& u, std::vector<double> t_list) {
  std::sort(t_list.begin(), t_list.end());
  const Grid& g = u.grid();
  const auto [gx, gy] = gradient(u);
  ConvexityModulus out{t_list, std::vector<double>(t_list.size(), std::numeric_limits<double>::infinity())};
  const std::size_t nt = t_list.size();
  gx.for_each_valid([&](int zi, int zj) {
    const double zx = g.x(zi), zy = g.y(zj), uz = u(zi, zj), px = gx(zi, zj), py = gy(zi, zj);
    for (int j = u.margin(); j < g.ny - u.margin(); ++j)
      for (int i = u.margin(); i < g.nx - u.margin(); ++i) {
        const double ddx = g.x(i) - zx, ddy = g.y(j) - zy;
        const double dist = std::hypot(ddx, ddy);
        const double gap = u(i, j) - (uz + px * ddx + py * ddy);
        // t sorted ascending: every t below dist sees this pair.
        for (std::size_t q = 0; q < nt && t_list[q] < dist; ++q) out.m[q] = std::min(out.m[q], gap);
      }
  });
  return out;
}

namespace detail {

inline double bilinear(const GridFunction& f, double x, double y) {
  const Grid& g = f.grid();
  const int m = f.margin();
  const double s = (x - g.x0) / g.hx, r = (y - g.y0) / g.hy;
  const int i = std::clamp(static_cast<int>(std::floor(s)), m, g.nx - 2 - m);
  const int j = std::clamp(static_cast<int>(std::floor(r)), m, g.ny - 2 - m);
  const double a = s - i, b = r - j;
  return (1 - a) * (1 - b) * f(i, j) + a * (1 - b) * f(i + 1, j) + (1 - a) * b * f(i, j + 1) + a * b * f(i + 1, j + 1);
}

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double s = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return std::hypot(px - (ax + s * vx), py - (ay + s * vy));
}

inline bool inside_polygon(double px, double py, const std::vector<std::array<double, 2>>& poly) {
  bool in = false;
  for (std::size_t a = 0, b = poly.size() - 1; a < poly.size(); b = a++) {
    const auto& p = poly[a];
    const auto& q = poly[b];
    if ((p[1] > py) != (q[1] > py) && px < (q[0] - p[0]) * (py - p[1]) / (q[1] - p[1]) + p[0]) in = !in;
  }
  return in;
}

}  // namespace detail

/// Image of the circle ∂B_R(center) under P = (u_x, y), as a closed polygon.
inline std::vector<std::array<double, 2>> image_polygon(const GridFunction& u, double cx, double cy, double R,
                                                        int samples = 0) {
  const Grid& g = u.grid();
  const double x_lo = g.x(1), x_hi = g.x(g.nx - 2), y_lo = g.y(1), y_hi = g.y(g.ny - 2);
  const double tol = 1e-12 * std::max(1.0, R);
  if (cx - R < x_lo - tol || cx + R > x_hi + tol || cy - R < y_lo - tol || cy + R > y_hi + tol)
    throw GridError("image_ball_radius: ball exits the grid interior");
  const GridFunction ux = dx(u);
  if (samples <= 0) samples = std::max(256, 8 * std::max(g.nx, g.ny));
  std::vector<std::array<double, 2>> poly;
  poly.reserve(static_cast<std::size_t>(samples));
  for (int k = 0; k < samples; ++k) {
    const double a = 2.0 * std::numbers::pi * k / samples;
    const double x = cx + R * std::cos(a), y = cy + R * std::sin(a);
    poly.push_back({detail::bilinear(ux, x, y), y});
  }
  return poly;
}

/// Radius of the largest disk about P(center) inside the polygonal image P(B_R(center)).
inline double image_ball_radius(const GridFunction& u, double cx, double cy, double R) {
  if (!(R > 0.0)) throw DomainError("image_ball_radius: R must be positive");
  const auto poly = image_polygon(u, cx, cy, R);
  const double px = detail::bilinear(dx(u), cx, cy), py = cy;
  if (!detail::inside_polygon(px, py, poly)) throw Error("image_ball_radius: degenerate image (center not enclosed)");
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0, b = poly.size() - 1; a < poly.size(); b = a++)
    d = std::min(d, detail::segment_distance(px, py, poly[b][0], poly[b][1], poly[a][0], poly[a][1]));
  if (!(d > 0.0)) throw Error("image_ball_radius: degenerate image");
  return d;
}

}  // namespace mage
