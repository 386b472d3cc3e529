#pragma once

// Uniform tensor grids, sampled scalar fields, centred finite differences,
// masked trapezoid quadrature and the plain-text grid file format.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mage/error.hpp"

namespace mage {

/// Uniform rectangular lattice. Node (i, j) sits at (x0 + i*hx, y0 + j*hy);
/// storage is row-major with y outermost.
struct Grid {
  double x0 = 0.0;
  double y0 = 0.0;
  double hx = 1.0;
  double hy = 1.0;
  int nx = 0;
  int ny = 0;

  /// Grid spanning [xa, xb] x [ya, yb] with the given node counts.
  static Grid over(double xa, double xb, double ya, double yb, int nx, int ny) {
    if (nx < 2 || ny < 2) throw GridError("grid needs at least two nodes per axis");
    Grid g{xa, ya, (xb - xa) / (nx - 1), (yb - ya) / (ny - 1), nx, ny};
    g.validate();
    return g;
  }

  void validate() const {
    if (!(hx > 0.0) || !(hy > 0.0)) throw GridError("grid spacings must be positive");
    if (nx < 5 || ny < 5)
      throw GridError("grid too small: " + std::to_string(nx) + "x" + std::to_string(ny) +
                      " (need at least 5x5)");
  }

  double x(int i) const noexcept { return x0 + i * hx; }
  double y(int j) const noexcept { return y0 + j * hy; }
  double x_end() const noexcept { return x(nx - 1); }
  double y_end() const noexcept { return y(ny - 1); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i);
  }
  /// Distance, in rings, from node (i, j) to the grid boundary.
  int ring(int i, int j) const noexcept { return std::min({i, j, nx - 1 - i, ny - 1 - j}); }

  /// Same lattice with spacing halved (node counts 2n-1).
  Grid refined() const {
    return Grid{x0, y0, hx / 2.0, hy / 2.0, 2 * nx - 1, 2 * ny - 1};
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Scalar samples on a Grid. Values within `margin` rings of the boundary are
/// undefined (stored as 0); derivative operators grow the margin by one ring.
class GridFunction {
 public:
  GridFunction() = default;

  explicit GridFunction(Grid grid, double fill = 0.0, int margin = 0)
      : grid_(grid), values_(grid.size(), fill), margin_(margin) {
    grid_.validate();
  }

  GridFunction(Grid grid, std::vector<double> values, int margin = 0)
      : grid_(grid), values_(std::move(values)), margin_(margin) {
    grid_.validate();
    if (values_.size() != grid_.size())
      throw GridError("value count " + std::to_string(values_.size()) + " does not match grid size " +
                      std::to_string(grid_.size()));
    for (std::size_t k = 0; k < values_.size(); ++k)
      if (!std::isfinite(values_[k])) throw DomainError("non-finite value at flat index " + std::to_string(k));
  }

  template <class F>
  static GridFunction sample(const Grid& grid, F&& f) {
    GridFunction out(grid);
    for (int j = 0; j < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i) out(i, j) = f(grid.x(i), grid.y(j));
    return out;
  }

  const Grid& grid() const noexcept { return grid_; }
  int margin() const noexcept { return margin_; }
  bool valid(int i, int j) const noexcept { return grid_.ring(i, j) >= margin_; }

  double operator()(int i, int j) const noexcept { return values_[grid_.index(i, j)]; }
  double& operator()(int i, int j) noexcept { return values_[grid_.index(i, j)]; }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  double& operator[](std::size_t k) noexcept { return values_[k]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  /// Visits every node outside the undefined margin, y outermost.
  template <class F>
  void for_each_valid(F&& f) const {
    for (int j = margin_; j < grid_.ny - margin_; ++j)
      for (int i = margin_; i < grid_.nx - margin_; ++i) f(i, j);
  }

  /// Largest |value| over the valid region.
  double max_abs() const {
    double m = 0.0;
    for_each_valid([&](int i, int j) { m = std::max(m, std::abs((*this)(i, j))); });
    return m;
  }

 private:
  Grid grid_{};
  std::vector<double> values_;
  int margin_ = 0;
};

inline void require_same_grid(const GridFunction& a, const GridFunction& b, const char* what) {
  if (!(a.grid() == b.grid())) throw GridError(std::string(what) + ": fields live on different grids");
}

/// Applies `op` nodewise on the common valid region; the result inherits the larger margin.
template <class Op>
GridFunction combine(const GridFunction& a, const GridFunction& b, Op&& op) {
  require_same_grid(a, b, "combine");
  GridFunction out(a.grid(), 0.0, std::max(a.margin(), b.margin()));
  out.for_each_valid([&](int i, int j) { out(i, j) = op(a(i, j), b(i, j)); });
  return out;
}

template <class Op>
GridFunction transform(const GridFunction& a, Op&& op) {
  GridFunction out(a.grid(), 0.0, a.margin());
  out.for_each_valid([&](int i, int j) { out(i, j) = op(a(i, j)); });
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences. All stencils are centred and act on valid nodes only.

inline GridFunction dx(const GridFunction& u) {
  GridFunction out(u.grid(), 0.0, u.margin() + 1);
  const double s = 1.0 / (2.0 * u.grid().hx);
  out.for_each_valid([&](int i, int j) { out(i, j) = (u(i + 1, j) - u(i - 1, j)) * s; });
  return out;
}

inline GridFunction dy(const GridFunction& u) {
  GridFunction out(u.grid(), 0.0, u.margin() + 1);
  const double s = 1.0 / (2.0 * u.grid().hy);
  out.for_each_valid([&](int i, int j) { out(i, j) = (u(i, j + 1) - u(i, j - 1)) * s; });
  return out;
}

inline GridFunction dxx(const GridFunction& u) {
  GridFunction out(u.grid(), 0.0, u.margin() + 1);
  const double s = 1.0 / (u.grid().hx * u.grid().hx);
  out.for_each_valid([&](int i, int j) { out(i, j) = (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j)) * s; });
  return out;
}

inline GridFunction dyy(const GridFunction& u) {
  GridFunction out(u.grid(), 0.0, u.margin() + 1);
  const double s = 1.0 / (u.grid().hy * u.grid().hy);
  out.for_each_valid([&](int i, int j) { out(i, j) = (u(i, j + 1) - 2.0 * u(i, j) + u(i, j - 1)) * s; });
  return out;
}

/// Four-point cross stencil; algebraically dx(dy(u)).
inline GridFunction dxy(const GridFunction& u) {
  GridFunction out(u.grid(), 0.0, u.margin() + 1);
  const double s = 1.0 / (4.0 * u.grid().hx * u.grid().hy);
  out.for_each_valid([&](int i, int j) {
    out(i, j) = (u(i + 1, j + 1) - u(i + 1, j - 1) - u(i - 1, j + 1) + u(i - 1, j - 1)) * s;
  });
  return out;
}

inline std::pair<GridFunction, GridFunction> gradient(const GridFunction& u) {
  u.grid().validate();
  return {dx(u), dy(u)};
}

/// D^2 u at nodes one ring further in than u's margin; u_xy is stored once.
struct HessianField {
  GridFunction xx;
  GridFunction xy;
  GridFunction yy;

  const Grid& grid() const noexcept { return xx.grid(); }
  int margin() const noexcept { return xx.margin(); }

  double det(int i, int j) const noexcept { return xx(i, j) * yy(i, j) - xy(i, j) * xy(i, j); }

  GridFunction determinant() const {
    GridFunction out(grid(), 0.0, margin());
    out.for_each_valid([&](int i, int j) { out(i, j) = det(i, j); });
    return out;
  }

  GridFunction trace() const { return combine(xx, yy, [](double a, double b) { return a + b; }); }

  /// Eigenvalues (smaller, larger) of the symmetric 2x2 matrix at node (i, j).
  std::pair<double, double> eigenvalues(int i, int j) const noexcept {
    const double a = xx(i, j), b = xy(i, j), c = yy(i, j);
    const double mean = 0.5 * (a + c);
    const double rad = std::hypot(0.5 * (a - c), b);
    return {mean - rad, mean + rad};
  }
};

inline HessianField hessian(const GridFunction& u) {
  u.grid().validate();
  return HessianField{dxx(u), dxy(u), dyy(u)};
}

inline GridFunction laplacian(const GridFunction& u) { return hessian(u).trace(); }

// ---------------------------------------------------------------------------
// Masks and quadrature.

/// Membership flag per node of a grid (balls, rectangles, inner rings).
class Mask {
 public:
  Mask() = default;
  Mask(Grid grid, bool fill) : grid_(grid), in_(grid.size(), fill ? 1 : 0) {}

  static Mask full(const Grid& g) { return Mask(g, true); }

  /// Nodes at least `rings` rings away from the grid boundary.
  static Mask interior(const Grid& g, int rings) {
    Mask m(g, false);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) m.set(i, j, g.ring(i, j) >= rings);
    return m;
  }

  /// Closed disk of radius r about (cx, cy).
  static Mask ball(const Grid& g, double cx, double cy, double r) {
    Mask m(g, false);
    const double r2 = r * r * (1.0 + 1e-12);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const double ddx = g.x(i) - cx, ddy = g.y(j) - cy;
        m.set(i, j, ddx * ddx + ddy * ddy <= r2);
      }
    return m;
  }

  /// Closed rectangle [xa, xb] x [ya, yb].
  static Mask rect(const Grid& g, double xa, double xb, double ya, double yb) {
    Mask m(g, false);
    const double tx = 1e-9 * g.hx, ty = 1e-9 * g.hy;
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        m.set(i, j, g.x(i) >= xa - tx && g.x(i) <= xb + tx && g.y(j) >= ya - ty && g.y(j) <= yb + ty);
    return m;
  }

  const Grid& grid() const noexcept { return grid_; }
  bool operator()(int i, int j) const noexcept { return in_[grid_.index(i, j)] != 0; }
  void set(int i, int j, bool v) noexcept { in_[grid_.index(i, j)] = v ? 1 : 0; }

  std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(in_.begin(), in_.end(), 1)); }

  Mask operator&(const Mask& o) const {
    if (!(grid_ == o.grid_)) throw GridError("mask intersection on different grids");
    Mask out(grid_, false);
    for (std::size_t k = 0; k < in_.size(); ++k) out.in_[k] = in_[k] & o.in_[k];
    return out;
  }

  /// Smallest ring index of any member node (grid size if empty).
  int min_ring() const noexcept {
    int r = std::max(grid_.nx, grid_.ny);
    for (int j = 0; j < grid_.ny; ++j)
      for (int i = 0; i < grid_.nx; ++i)
        if ((*this)(i, j)) r = std::min(r, grid_.ring(i, j));
    return r;
  }

 private:
  Grid grid_{};
  std::vector<std::uint8_t> in_;
};

inline void require_mask_within(const Mask& mask, const GridFunction& f, const char* what) {
  if (!(mask.grid() == f.grid())) throw GridError(std::string(what) + ": mask and field live on different grids");
  if (mask.count() == 0) throw GridError(std::string(what) + ": empty mask");
  if (mask.min_ring() < f.margin())
    throw GridError(std::string(what) + ": mask reaches ring " + std::to_string(mask.min_ring()) +
                    " but the field is only defined from ring " + std::to_string(f.margin()));
}

/// Composite trapezoid rule over the cells whose four corners all lie in the
/// mask. Exact for bilinear integrands on rectangular masks; O(h) along
/// curved mask boundaries.
inline double weighted_integral(const GridFunction& f, const GridFunction& weight, const Mask& mask) {
  require_same_grid(f, weight, "weighted_integral");
  require_mask_within(mask, f, "weighted_integral");
  require_mask_within(mask, weight, "weighted_integral");
  const Grid& g = f.grid();
  const double quarter_cell = 0.25 * g.hx * g.hy;
  double sum = 0.0;
  std::size_t cells = 0;
  for (int j = 0; j + 1 < g.ny; ++j)
    for (int i = 0; i + 1 < g.nx; ++i) {
      if (!(mask(i, j) && mask(i + 1, j) && mask(i, j + 1) && mask(i + 1, j + 1))) continue;
      ++cells;
      sum += quarter_cell * (f(i, j) * weight(i, j) + f(i + 1, j) * weight(i + 1, j) +
                             f(i, j + 1) * weight(i, j + 1) + f(i + 1, j + 1) * weight(i + 1, j + 1));
    }
  if (cells == 0) throw GridError("weighted_integral: mask contains no complete cell");
  return sum;
}

inline double integral(const GridFunction& f, const Mask& mask) {
  return weighted_integral(f, GridFunction(f.grid(), 1.0), mask);
}

inline constexpr double kInfNorm = std::numeric_limits<double>::infinity();

/// (integral |f|^p)^(1/p); max |f| over mask nodes for p = infinity.
inline double lp_norm(const GridFunction& f, double p, const Mask& mask) {
  if (!(p >= 1.0)) throw DomainError("lp_norm: p must be >= 1");
  require_mask_within(mask, f, "lp_norm");
  if (std::isinf(p)) {
    double m = 0.0;
    for (int j = 0; j < f.grid().ny; ++j)
      for (int i = 0; i < f.grid().nx; ++i)
        if (mask(i, j)) m = std::max(m, std::abs(f(i, j)));
    return m;
  }
  const GridFunction powered = transform(f, [p](double v) { return std::pow(std::abs(v), p); });
  return std::pow(integral(powered, mask), 1.0 / p);
}

/// Max |f| over the valid region of f.
inline double sup_norm(const GridFunction& f) { return f.max_abs(); }

// ---------------------------------------------------------------------------
// Text formats.

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Header "nx ny x0 y0 hx hy" followed by one line of nx values per row, y outermost.
inline void write_grid(std::ostream& os, const GridFunction& f) {
  const Grid& g = f.grid();
  os << g.nx << ' ' << g.ny << ' ' << detail::fmt_double(g.x0) << ' ' << detail::fmt_double(g.y0) << ' '
     << detail::fmt_double(g.hx) << ' ' << detail::fmt_double(g.hy) << '\n';
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (i) os << ' ';
      os << detail::fmt_double(f(i, j));
    }
    os << '\n';
  }
}

inline GridFunction read_grid(std::istream& is) {
  Grid g;
  if (!(is >> g.nx >> g.ny >> g.x0 >> g.y0 >> g.hx >> g.hy)) throw GridError("grid file: malformed header");
  g.validate();
  std::vector<double> values(g.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    if (!(is >> values[k]))
      throw GridError("grid file: expected " + std::to_string(values.size()) + " values, got " + std::to_string(k));
  return GridFunction(g, std::move(values));
}

/// CSV with header "x,y,value", one row per node, y outermost.
inline void write_csv(std::ostream& os, const GridFunction& f) {
  const Grid& g = f.grid();
  os << "x,y,value\n";
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      os << detail::fmt_double(g.x(i)) << ',' << detail::fmt_double(g.y(j)) << ',' << detail::fmt_double(f(i, j))
         << '\n';
}

/// Inverse of write_csv; the lattice is recovered from the coordinate columns.
inline GridFunction read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,y,value", 0) != 0) throw GridError("csv: missing header");
  std::vector<double> xs, ys, vs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    double x, y, v;
    char c1, c2;
    if (!(row >> x >> c1 >> y >> c2 >> v) || c1 != ',' || c2 != ',') throw GridError("csv: malformed row '" + line + "'");
    xs.push_back(x);
    ys.push_back(y);
    vs.push_back(v);
  }
  if (xs.size() < 2) throw GridError("csv: too few rows");
  int nx = 1;
  while (nx < static_cast<int>(ys.size()) && ys[nx] == ys[0]) ++nx;
  if (vs.size() % nx != 0) throw GridError("csv: row count is not a multiple of nx");
  const int ny = static_cast<int>(vs.size() / nx);
  if (nx < 2 || ny < 2) throw GridError("csv: degenerate lattice");
  Grid g{xs[0], ys[0], xs[1] - xs[0], ys[static_cast<std::size_t>(nx)] - ys[0], nx, ny};
  return GridFunction(g, std::move(vs));
}

}  // namespace mage
