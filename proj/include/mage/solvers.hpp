#pragma once

// Newton solves for the pieces of the fourth-order problem and the two
// end-to-end routes: the coupled (Monge-Ampère + linearized Monge-Ampère)
// driver on the physical grid, and the quasilinear solve after the partial
// Legendre transform.
//
// Boundary data is passed as a GridFunction on the solve grid; only the
// rings below the unknowns are read (ring 0 for u and v, ring 1 for w).

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mage/grid.hpp"
#include "mage/interp.hpp"
#include "mage/legendre.hpp"
#include "mage/theta.hpp"

namespace mage {

struct SolverConfig {
  int max_outer = 200;
  int max_newton = 30;
  double tol_residual = 1e-9;   ///< L∞ over nodal residuals
  double relaxation = 0.5;      ///< ω for the outer w update
  double eps_pos = 1e-8;        ///< positivity floor for w*
  double eps_cvx = 1e-8;        ///< floor on the smallest Hessian eigenvalue
  double linear_tol = 1e-10;    ///< relative residual accepted from a linear solve

  void validate() const {
    if (max_outer < 1 || max_newton < 1) throw DomainError("solver config: iteration limits must be positive");
    if (!(tol_residual > 0.0) || !(eps_pos > 0.0) || !(eps_cvx > 0.0) || !(linear_tol > 0.0))
      throw DomainError("solver config: tolerances must be positive");
    if (!(relaxation > 0.0 && relaxation <= 1.0)) throw DomainError("solver config: relaxation must lie in (0, 1]");
  }
};

inline constexpr double kDampingFloor = 1.0 / 1024.0;
inline constexpr double kRelaxationFloor = 1.0 / 64.0;

struct SolveReport {
  bool converged = false;
  int iterations = 0;        ///< Newton steps, or outer iterations for the coupled driver
  int inner_iterations = 0;  ///< Newton steps summed over sub-solves
  std::vector<double> history;
  double residual = std::numeric_limits<double>::quiet_NaN();  ///< the solve's own equation
  double res_div = std::numeric_limits<double>::quiet_NaN();    ///< flux-form linearized MA
  double res_ma = std::numeric_limits<double>::quiet_NaN();     ///< det D²u against det(w)
  double res_nondiv = std::numeric_limits<double>::quiet_NaN(); ///< U^{ij} w_{ij} - f of the final pair
  bool has_det = false;
  DetBounds det;
  double relaxation = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  std::string message;
};

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Numbering of the nodes at ring >= r.
class Unknowns {
 public:
  Unknowns(const Grid& g, int r) : g_(g), id_(g.size(), -1) {
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (g.ring(i, j) >= r) {
          id_[g.index(i, j)] = n_++;
          nodes_.push_back({i, j});
        }
    if (n_ == 0) throw GridError("solver: grid has no interior unknowns");
  }
  int operator()(int i, int j) const noexcept { return id_[g_.index(i, j)]; }
  int size() const noexcept { return n_; }
  const std::vector<std::array<int, 2>>& nodes() const noexcept { return nodes_; }

 private:
  Grid g_;
  std::vector<int> id_;
  std::vector<std::array<int, 2>> nodes_;
  int n_ = 0;
};

inline double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline void check_linear(const SpMat& A, const Eigen::VectorXd& x, const Eigen::VectorXd& b, double tol,
                         const char* what) {
  const double nb = b.norm();
  const double r = (A * x - b).norm();
  if (!x.allFinite() || (nb > 0.0 && r > tol * nb) || (nb == 0.0 && r > tol))
    throw SolverError(std::string(what) + ": linear solver nonconvergence (relative residual " +
                      detail::fmt_double(nb > 0.0 ? r / nb : r) + ")");
}

inline Eigen::VectorXd lu_solve(const SpMat& A, const Eigen::VectorXd& b, double tol, const char* what) {
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw SolverError(std::string(what) + ": singular Jacobian");
  Eigen::VectorXd x = lu.solve(b);
  // One step of iterative refinement is cheap and usually buys two digits.
  x += lu.solve(b - A * x);
  check_linear(A, x, b, tol, what);
  return x;
}

/// Transfinite interpolation of the values on ring r into the nodes inside it.
inline GridFunction coons_fill(const GridFunction& d, int r) {
  const Grid& g = d.grid();
  GridFunction out(g, 0.0, r);
  const int ie = g.nx - 1 - r, je = g.ny - 1 - r;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (g.ring(i, j) <= r) {
        out(i, j) = d(i, j);
        continue;
      }
      const double s = static_cast<double>(i - r) / (ie - r), t = static_cast<double>(j - r) / (je - r);
      out(i, j) = (1 - s) * d(r, j) + s * d(ie, j) + (1 - t) * d(i, r) + t * d(i, je) -
                  ((1 - s) * (1 - t) * d(r, r) + s * (1 - t) * d(ie, r) + (1 - s) * t * d(r, je) + s * t * d(ie, je));
    }
  return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double min_eigenvalue(const HessianField& h) {
  double m = std::numeric_limits<double>::infinity();
  h.xx.for_each_valid([&](int i, int j) { m = std::min(m, h.eigenvalues(i, j).first); });
  return m;
}

}  // namespace detail

inline DetBounds det_bounds_of(const GridFunction& u) {
  const HessianField h = hessian(u);
  require_convex(h);
  DetBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  h.xx.for_each_valid([&](int i, int j) {
    b.lambda = std::min(b.lambda, h.det(i, j));
    b.Lambda = std::max(b.Lambda, h.det(i, j));
  });
  return b;
}

// ---------------------------------------------------------------------------
// Quasilinear equation for v = w* on the star grid:
//   v v_ξξ + v_ηη = (1-θ) v_ξ² + ((2-θ)/v) v_η².

namespace detail {

inline GridFunction quasilinear_residual(const GridFunction& v, double theta) {
  const Grid& g = v.grid();
  GridFunction r(g, 0.0, 1);
  const double ihx2 = 1.0 / (g.hx * g.hx), ihy2 = 1.0 / (g.hy * g.hy);
  r.for_each_valid([&](int i, int j) {
    const double c = v(i, j);
    const double vxx = (v(i + 1, j) - 2 * c + v(i - 1, j)) * ihx2;
    const double vyy = (v(i, j + 1) - 2 * c + v(i, j - 1)) * ihy2;
    const double vx = (v(i + 1, j) - v(i - 1, j)) / (2 * g.hx);
    const double vy = (v(i, j + 1) - v(i, j - 1)) / (2 * g.hy);
    r(i, j) = c * vxx + vyy - (1 - theta) * vx * vx - (2 - theta) * vy * vy / c;
  });
  return r;
}

}  // namespace detail

inline std::pair<GridFunction, SolveReport> solve_quasilinear(const ThetaFamily& family, const GridFunction& boundary,
                                                              const SolverConfig& cfg = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Grid& g = boundary.grid();
  g.validate();
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.ring(i, j) == 0 && !(boundary(i, j) > 0.0))
        throw DomainError("solve_quasilinear: boundary data must be strictly positive");
  const double th = family.theta();
  const detail::Unknowns idx(g, 1);
  GridFunction v = detail::coons_fill(boundary, 0);
  v.for_each_valid([&](int i, int j) { v(i, j) = std::max(v(i, j), cfg.eps_pos); });

  SolveReport rep;
  auto norm = [](const GridFunction& r) { return r.max_abs(); };
  GridFunction r = detail::quasilinear_residual(v, th);
  double res = norm(r);
  rep.history.push_back(res);
  const double ihx2 = 1.0 / (g.hx * g.hx), ihy2 = 1.0 / (g.hy * g.hy);
  while (res > cfg.tol_residual) {
    if (rep.iterations >= cfg.max_newton)
      throw SolverError("solve_quasilinear: Newton did not converge in " + std::to_string(cfg.max_newton) +
                        " steps (residual " + detail::fmt_double(res) + ")");
    detail::Triplets trip;
    trip.reserve(static_cast<std::size_t>(idx.size()) * 5);
    Eigen::VectorXd rhs(idx.size());
    for (const auto& [i, j] : idx.nodes()) {
      const int k = idx(i, j);
      const double c = v(i, j);
      const double vxx = (v(i + 1, j) - 2 * c + v(i - 1, j)) * ihx2;
      const double vx = (v(i + 1, j) - v(i - 1, j)) / (2 * g.hx);
      const double vy = (v(i, j + 1) - v(i, j - 1)) / (2 * g.hy);
      rhs[k] = -r(i, j);
      const double diag = vxx - 2 * c * ihx2 - 2 * ihy2 + (2 - th) * vy * vy / (c * c);
      trip.emplace_back(k, k, diag);
      const std::array<std::array<int, 2>, 4> nb = {{{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}}};
      const std::array<double, 4> coef = {c * ihx2 - (1 - th) * vx / g.hx, c * ihx2 + (1 - th) * vx / g.hx,
                                          ihy2 - (2 - th) * vy / (g.hy * c), ihy2 + (2 - th) * vy / (g.hy * c)};
      for (int q = 0; q < 4; ++q) {
        const int kn = idx(nb[q][0], nb[q][1]);
        if (kn >= 0) trip.emplace_back(k, kn, coef[q]);
      }
    }
    detail::SpMat J(idx.size(), idx.size());
    J.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd d = detail::lu_solve(J, rhs, cfg.linear_tol, "solve_quasilinear");

    double step = 1.0;
    bool positivity = false;
    for (;; step *= 0.5) {
      if (step < kDampingFloor)
        throw SolverError(positivity ? "solve_quasilinear: positivity loss (damping floor hit)"
                                     : "solve_quasilinear: Newton stagnation (damping floor hit)");
      GridFunction trial = v;
      bool ok = true;
      for (const auto& [i, j] : idx.nodes()) {
        trial(i, j) += step * d[idx(i, j)];
        if (!(trial(i, j) >= cfg.eps_pos)) ok = false;
      }
      if (!ok) {
        positivity = true;
        continue;
      }
      GridFunction rt = detail::quasilinear_residual(trial, th);
      const double nt = norm(rt);
      if (nt < res) {
        v = std::move(trial);
        r = std::move(rt);
        res = nt;
        break;
      }
    }
    ++rep.iterations;
    rep.history.push_back(res);
  }
  rep.converged = true;
  rep.residual = res;
  rep.wall_seconds = detail::seconds_since(t0);
  return {std::move(v), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Monge-Ampère: det D²u = ρ with u given on ring 0.

namespace detail {

inline double ma_residual(const GridFunction& u, const GridFunction& rho) {
  const HessianField h = hessian(u);
  double m = 0.0;
  h.xx.for_each_valid([&](int i, int j) { m = std::max(m, std::abs(h.det(i, j) - rho(i, j))); });
  return m;
}

/// Solves the five-point Δu = s with u fixed on ring 0.
inline GridFunction poisson(const GridFunction& s, const GridFunction& boundary, double tol) {
  const Grid& g = boundary.grid();
  const Unknowns idx(g, 1);
  const double ihx2 = 1.0 / (g.hx * g.hx), ihy2 = 1.0 / (g.hy * g.hy);
  Triplets trip;
  Eigen::VectorXd b(idx.size());
  for (const auto& [i, j] : idx.nodes()) {
    const int k = idx(i, j);
    b[k] = -s(i, j);
    trip.emplace_back(k, k, 2 * ihx2 + 2 * ihy2);
    const std::array<std::array<int, 2>, 4> nb = {{{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}}};
    for (int q = 0; q < 4; ++q) {
      const double c = q < 2 ? ihx2 : ihy2;
      const int kn = idx(nb[q][0], nb[q][1]);
      if (kn >= 0)
        trip.emplace_back(k, kn, -c);
      else
        b[k] += c * boundary(nb[q][0], nb[q][1]);
    }
  }
  SpMat A(idx.size(), idx.size());
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<SpMat> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw SolverError("poisson: factorization failed");
  const Eigen::VectorXd x = ldlt.solve(b);
  check_linear(A, x, b, tol, "poisson");
  GridFunction u(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) u(i, j) = idx(i, j) >= 0 ? x[idx(i, j)] : boundary(i, j);
  return u;
}

}  // namespace detail

/// Newton from `initial` (ring 0 is overwritten by the boundary data).
inline std::pair<GridFunction, SolveReport> solve_monge_ampere(const GridFunction& rho, const GridFunction& boundary,
                                                               const GridFunction& initial, const SolverConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  require_same_grid(rho, boundary, "solve_monge_ampere");
  require_same_grid(initial, boundary, "solve_monge_ampere");
  const Grid& g = boundary.grid();
  g.validate();
  if (rho.margin() > 1) throw GridError("solve_monge_ampere: rho must be defined from ring 1 inward");
  for (int j = 1; j + 1 < g.ny; ++j)
    for (int i = 1; i + 1 < g.nx; ++i)
      if (!(rho(i, j) > 0.0)) throw DomainError("solve_monge_ampere: rho must be positive at (" + std::to_string(i) + "," + std::to_string(j) + ")");

  GridFunction u(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) u(i, j) = g.ring(i, j) == 0 ? boundary(i, j) : initial(i, j);
  if (const HessianField h0 = hessian(u); detail::min_eigenvalue(h0) < cfg.eps_cvx)
    throw SolverError("solve_monge_ampere: initial guess is not convex");

  const detail::Unknowns idx(g, 1);
  SolveReport rep;
  double res = detail::ma_residual(u, rho);
  rep.history.push_back(res);
  const double ihx2 = 1.0 / (g.hx * g.hx), ihy2 = 1.0 / (g.hy * g.hy), ihxy = 1.0 / (4.0 * g.hx * g.hy);
  while (res > cfg.tol_residual) {
    if (rep.iterations >= cfg.max_newton)
      throw SolverError("solve_monge_ampere: Newton did not converge in " + std::to_string(cfg.max_newton) +
                        " steps (residual " + detail::fmt_double(res) + ")");
    const HessianField h = hessian(u);
    const CofactorField U = cofactor(h);
    detail::Triplets trip;
    trip.reserve(static_cast<std::size_t>(idx.size()) * 9);
    Eigen::VectorXd rhs(idx.size());
    for (const auto& [i, j] : idx.nodes()) {
      const int k = idx(i, j);
      rhs[k] = rho(i, j) - h.det(i, j);
      const double a = U.u11(i, j) * ihx2, b = U.u22(i, j) * ihy2, c = 2.0 * U.u12(i, j) * ihxy;
      const std::array<std::array<int, 3>, 9> st = {{{0, 0, 0}, {1, 0, 1}, {-1, 0, 1}, {0, 1, 2}, {0, -1, 2},
                                                     {1, 1, 3}, {-1, -1, 3}, {1, -1, 4}, {-1, 1, 4}}};
      const std::array<double, 5> w = {-2 * a - 2 * b, a, b, c, -c};
      for (const auto& [di, dj, q] : st) {
        const int kn = idx(i + di, j + dj);
        if (kn >= 0 && w[static_cast<std::size_t>(q)] != 0.0) trip.emplace_back(k, kn, w[static_cast<std::size_t>(q)]);
      }
    }
    detail::SpMat J(idx.size(), idx.size());
    J.setFromTriplets(trip.begin(), trip.end());
    const Eigen::VectorXd d = detail::lu_solve(J, rhs, cfg.linear_tol, "solve_monge_ampere");

    double step = 1.0;
    bool convexity = false;
    for (;; step *= 0.5) {
      if (step < kDampingFloor)
        throw SolverError(convexity ? "solve_monge_ampere: convexity-preserving line search failed"
                                    : "solve_monge_ampere: Newton stagnation (damping floor hit)");
      GridFunction trial = u;
      for (const auto& [i, j] : idx.nodes()) trial(i, j) += step * d[idx(i, j)];
      if (detail::min_eigenvalue(hessian(trial)) < cfg.eps_cvx) {
        convexity = true;
        continue;
      }
      const double nt = detail::ma_residual(trial, rho);
      if (nt < res) {
        u = std::move(trial);
        res = nt;
        break;
      }
    }
    ++rep.iterations;
    rep.history.push_back(res);
  }
  rep.converged = true;
  rep.residual = rep.res_ma = res;
  rep.det = det_bounds_of(u);
  rep.has_det = true;
  rep.wall_seconds = detail::seconds_since(t0);
  return {std::move(u), std::move(rep)};
}

/// Starts from the Poisson solve Δu = 2√ρ, which is exact for quadratics.
inline std::pair<GridFunction, SolveReport> solve_monge_ampere(const GridFunction& rho, const GridFunction& boundary,
                                                               const SolverConfig& cfg = {}) {
  require_same_grid(rho, boundary, "solve_monge_ampere");
  GridFunction s(rho.grid(), 0.0, 1);
  s.for_each_valid([&](int i, int j) { s(i, j) = 2.0 * std::sqrt(std::max(rho(i, j), 0.0)); });
  return solve_monge_ampere(rho, boundary, detail::poisson(s, boundary, cfg.linear_tol), cfg);
}

// ---------------------------------------------------------------------------
// Linearized Monge-Ampère in flux form, D_j(U^{ij} D_i w) = f, w given on rings 0-1.

inline std::pair<GridFunction, SolveReport> solve_linearized_ma(const GridFunction& u, const RhsSpec& spec,
                                                                const GridFunction& boundary_w,
                                                                const SolverConfig& cfg = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  require_same_grid(u, boundary_w, "solve_linearized_ma");
  if (u.margin() > 0) throw GridError("solve_linearized_ma: u must be defined on the whole grid");
  if (boundary_w.margin() > 1) throw GridError("solve_linearized_ma: w data must be defined on ring 1");
  const Grid& g = u.grid();
  const HessianField h = hessian(u);
  require_convex(h);
  const FluxOperator op(cofactor(h));
  const GridFunction f = rhs_eval(spec, u).f;
  if (f.margin() > op.margin()) throw GridError("solve_linearized_ma: right-hand side undefined on ring 2");

  const detail::Unknowns idx(g, op.margin());
  detail::Triplets trip;
  trip.reserve(static_cast<std::size_t>(idx.size()) * 9);
  Eigen::VectorXd b(idx.size());
  for (const auto& [i, j] : idx.nodes()) {
    const int k = idx(i, j);
    const FluxStencil s = op.stencil(i, j);
    b[k] = -f(i, j);
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const double c = s.c[static_cast<std::size_t>(di + 1)][static_cast<std::size_t>(dj + 1)];
        if (c == 0.0) continue;
        const int kn = idx(i + di, j + dj);
        if (kn >= 0)
          trip.emplace_back(k, kn, -c);
        else
          b[k] += c * boundary_w(i + di, j + dj);
      }
  }
  detail::SpMat A(idx.size(), idx.size());
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<detail::SpMat> ldlt(A);
  if (ldlt.info() != Eigen::Success) throw SolverError("solve_linearized_ma: factorization failed");
  if (ldlt.vectorD().minCoeff() <= 0.0) throw SolverError("solve_linearized_ma: indefinite system (convexity lost)");
  const Eigen::VectorXd x = ldlt.solve(b);
  detail::check_linear(A, x, b, cfg.linear_tol, "solve_linearized_ma");

  GridFunction w(g, 0.0, boundary_w.margin());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (g.ring(i, j) >= w.margin()) w(i, j) = idx(i, j) >= 0 ? x[idx(i, j)] : boundary_w(i, j);
  SolveReport rep;
  rep.converged = true;
  rep.iterations = 1;
  rep.residual = rep.res_div = divergence_form_residual(u, w, spec).max_abs();
  rep.history.push_back(rep.residual);
  rep.wall_seconds = detail::seconds_since(t0);
  return {std::move(w), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Coupled driver.

struct FourthOrderSolution {
  GridFunction u;
  GridFunction w;
  SolveReport report;
};

/// Alternates w <- L_u^{-1} f and u <- MA^{-1}(det(w_relaxed)). The accepted
/// residual |D_j(U^{ij} D_i w) - f|_∞ is kept nonincreasing by halving ω.
inline FourthOrderSolution solve_fourth_order(const ThetaFamily& family, const RhsSpec& spec,
                                              const GridFunction& boundary_u, const GridFunction& boundary_w,
                                              const SolverConfig& cfg = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  require_same_grid(boundary_u, boundary_w, "solve_fourth_order");
  boundary_u.grid().validate();

  GridFunction w = detail::coons_fill(boundary_w, 1);
  auto [u, ma0] = solve_monge_ampere(det_of_w(w, family), boundary_u, cfg);
  SolveReport rep;
  rep.inner_iterations = ma0.iterations;
  double omega = cfg.relaxation;
  double accepted = std::numeric_limits<double>::infinity();
  double res_ma = ma0.res_ma;

  while (true) {
    if (rep.iterations >= cfg.max_outer)
      throw SolverError("solve_fourth_order: outer loop did not converge in " + std::to_string(cfg.max_outer) +
                        " iterations (residual " + detail::fmt_double(accepted) + ")");
    const GridFunction w_new = solve_linearized_ma(u, spec, boundary_w, cfg).first;
    for (;;) {
      GridFunction w_rel = w;
      w_rel.for_each_valid([&](int i, int j) {
        if (w_rel.grid().ring(i, j) >= 2) w_rel(i, j) = (1.0 - omega) * w(i, j) + omega * w_new(i, j);
      });
      auto [u_new, ma] = solve_monge_ampere(det_of_w(w_rel, family), boundary_u, u, cfg);
      rep.inner_iterations += ma.iterations;
      const double r = divergence_form_residual(u_new, w_rel, spec).max_abs();
      if (r <= accepted || rep.iterations == 0) {
        accepted = r;
        u = std::move(u_new);
        w = std::move(w_rel);
        res_ma = ma.res_ma;
        break;
      }
      omega *= 0.5;
      if (omega < kRelaxationFloor)
        throw SolverError("solve_fourth_order: outer-loop stagnation (relaxation floor hit, residual " +
                          detail::fmt_double(accepted) + ")");
    }
    ++rep.iterations;
    rep.history.push_back(accepted);
    if (accepted <= cfg.tol_residual) break;
  }
  rep.converged = true;
  rep.residual = rep.res_div = accepted;
  rep.res_ma = res_ma;
  rep.res_nondiv = fourth_order_residual(u, family, spec).max_abs();
  rep.det = det_bounds_of(u);
  rep.has_det = true;
  rep.relaxation = omega;
  rep.wall_seconds = detail::seconds_since(t0);
  return {std::move(u), std::move(w), std::move(rep)};
}

// ---------------------------------------------------------------------------
// Transform route.

struct TransformRouteResult {
  TransformResult transform;
  GridFunction v;          ///< quasilinear solution on the inscribed star grid
  GridFunction reference;  ///< wstar(u_reference) on the same grid
  double discrepancy = 0.0;
  SolveReport report;
};

namespace detail {

/// Nodes at ring >= 1 of g as a grid of their own.
inline Grid inner_grid(const Grid& g) { return Grid{g.x0 + g.hx, g.y0 + g.hy, g.hx, g.hy, g.nx - 2, g.ny - 2}; }

}  // namespace detail

inline TransformRouteResult solve_via_transform(const ThetaFamily& family, const GridFunction& u_reference,
                                                const SolverConfig& cfg = {}, const TransformOptions& opt = {}) {
  TransformRouteResult out{forward(u_reference, opt), GridFunction(), GridFunction(), 0.0, {}};
  const GridFunction ws = wstar(out.transform);
  const Grid sub = detail::inner_grid(ws.grid());
  sub.validate();
  GridFunction ref(sub);
  for (int j = 0; j < sub.ny; ++j)
    for (int i = 0; i < sub.nx; ++i) ref(i, j) = ws(i + 1, j + 1);
  auto [v, rep] = solve_quasilinear(family, ref, cfg);
  out.discrepancy = combine(v, ref, [](double a, double b) { return a - b; }).max_abs();
  out.v = std::move(v);
  out.reference = std::move(ref);
  out.report = std::move(rep);
  return out;
}

/// w at the physical nodes of the transformed grid, read off the star-side
/// solution along rows: w(x, y) = F(v(u_x(x, y), y)). `covered` marks nodes
/// whose ξ falls inside the solved star rectangle.
struct PulledBack {
  GridFunction w;
  Mask covered;
};

inline PulledBack pull_back_w(const TransformRouteResult& route, const ThetaFamily& family) {
  const Grid& g = route.transform.source;
  const Grid& s = route.v.grid();
  PulledBack out{GridFunction(g, 0.0, 2), Mask(g, false)};
  for (int j = 2; j + 2 < g.ny; ++j) {
    const int row = j - 1;  // star rows are the y rows; the inner grid drops one ring
    if (row < 0 || row >= s.ny) continue;
    const std::span<const double> vr = detail::row_of(route.v, row);
    for (int i = 2; i + 2 < g.nx; ++i) {
      const double xi = route.transform.row_xi[static_cast<std::size_t>(j)][static_cast<std::size_t>(i - 1)];
      if (xi < s.x0 || xi > s.x_end()) continue;
      const double v = lagrange4(vr, s.x0, s.hx, xi, 0, s.nx - 1);
      out.w(i, j) = family.w(v);
      out.covered.set(i, j, true);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Route agreement on homogeneous manufactured solutions.

struct RouteAgreementReport {
  double discrepancy = 0.0;      ///< max |w_coupled - w_transform| on the fine level
  double err_coupled = 0.0;      ///< refinement estimate of the coupled route's fine-level error
  double err_transform = 0.0;
  double factor = 5.0;
  bool pass = false;
  std::size_t nodes = 0;
  std::array<Grid, 2> grids;
  std::array<SolveReport, 2> coupled;
  std::array<SolveReport, 2> transform;
};

/// u_exact must solve U^{ij} w_{ij} = 0 for the family. Both routes run on
/// `coarse` and its refinement; errors are estimated by |w_h - w_{h/2}|/3.
inline RouteAgreementReport route_agreement(const ThetaFamily& family,
                                            const std::function<double(double, double)>& u_exact, const Grid& coarse,
                                            const SolverConfig& cfg = {}, double factor = 5.0) {
  RouteAgreementReport rep;
  rep.factor = factor;
  rep.grids = {coarse, coarse.refined()};
  std::array<GridFunction, 2> wc, wt;
  std::array<Mask, 2> cover = {Mask::full(coarse), Mask::full(rep.grids[1])};
  for (int l = 0; l < 2; ++l) {
    const Grid& g = rep.grids[static_cast<std::size_t>(l)];
    const GridFunction u = GridFunction::sample(g, u_exact);
    const GridFunction bw = w_of_det(hessian(u).determinant(), family);
    FourthOrderSolution c = solve_fourth_order(family, RhsZero{}, u, bw, cfg);
    const TransformRouteResult t = solve_via_transform(family, u, cfg);
    PulledBack pb = pull_back_w(t, family);
    wc[static_cast<std::size_t>(l)] = std::move(c.w);
    wt[static_cast<std::size_t>(l)] = std::move(pb.w);
    cover[static_cast<std::size_t>(l)] = std::move(pb.covered);
    rep.coupled[static_cast<std::size_t>(l)] = std::move(c.report);
    rep.transform[static_cast<std::size_t>(l)] = t.report;
  }
  const Grid& gf = rep.grids[1];
  for (int j = 0; j < gf.ny; ++j)
    for (int i = 0; i < gf.nx; ++i)
      if (cover[1](i, j)) {
        rep.discrepancy = std::max(rep.discrepancy, std::abs(wc[1](i, j) - wt[1](i, j)));
        ++rep.nodes;
      }
  for (int j = 0; j < coarse.ny; ++j)
    for (int i = 0; i < coarse.nx; ++i) {
      if (!cover[0](i, j) || !cover[1](2 * i, 2 * j)) continue;
      rep.err_coupled = std::max(rep.err_coupled, std::abs(wc[0](i, j) - wc[1](2 * i, 2 * j)) / 3.0);
      rep.err_transform = std::max(rep.err_transform, std::abs(wt[0](i, j) - wt[1](2 * i, 2 * j)) / 3.0);
    }
  if (rep.nodes == 0) throw GridError("route_agreement: the star rectangle covers no physical node");
  rep.pass = rep.discrepancy <= factor * (rep.err_coupled + rep.err_transform);
  return rep;
}

}  // namespace mage
