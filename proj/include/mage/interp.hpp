#pragma once

// One-dimensional interpolation used by the row maps of the partial
// Legendre transform: monotone piecewise-cubic Hermite (Fritsch–Carlson
// slopes, Fritsch–Butland weights) and local four-point Lagrange cubics on
// uniform rows.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mage/error.hpp"

namespace mage {

class Pchip {
 public:
  Pchip() = default;

  /// Knots must be strictly increasing; data must be monotone for the
  /// interpolant to be monotone (it is still C¹ otherwise).
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw DomainError("pchip: need at least two knots with matching values");
    for (std::size_t k = 1; k < n; ++k)
      if (!(x_[k] > x_[k - 1])) throw DomainError("pchip: knots must be strictly increasing");
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = x_[k + 1] - x_[k];
      delta[k] = (y_[k + 1] - y_[k]) / h[k];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      const double a = delta[k - 1], b = delta[k];
      if (a * b <= 0.0) continue;
      const double w1 = 2.0 * h[k] + h[k - 1], w2 = h[k] + 2.0 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / a + w2 / b);
    }
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  double operator()(double t) const {
    const std::size_t k = interval(t);
    const double h = x_[k + 1] - x_[k];
    const double s = (t - x_[k]) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * d_[k] + (-2 * s3 + 3 * s2) * y_[k + 1] +
           (s3 - s2) * h * d_[k + 1];
  }

  double derivative(double t) const {
    const std::size_t k = interval(t);
    const double h = x_[k + 1] - x_[k];
    const double s = (t - x_[k]) / h;
    const double s2 = s * s;
    return ((6 * s2 - 6 * s) * y_[k] + (-6 * s2 + 6 * s) * y_[k + 1]) / h + (3 * s2 - 4 * s + 1) * d_[k] +
           (3 * s2 - 2 * s) * d_[k + 1];
  }

  double front() const noexcept { return x_.front(); }
  double back() const noexcept { return x_.back(); }

 private:
  // Three-point end formula, limited to keep the end interval monotone.
  static double end_slope(double h0, double h1, double d0, double d1) {
    double d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0.0) return 0.0;
    if (d0 * d1 <= 0.0 && std::abs(d) > std::abs(3.0 * d0)) d = 3.0 * d0;
    return d;
  }

  std::size_t interval(double t) const noexcept {
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    std::size_t k = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(k, x_.size() - 2);
  }

  std::vector<double> x_, y_, d_;
};

/// Polynomial through the `points` samples nearest to t on the uniform row
/// x0 + k*h, restricted to indices [lo, hi]; extrapolates beyond the ends.
inline double lagrange(std::span<const double> row, double x0, double h, double t, int lo, int hi, int points) {
  if (hi - lo + 1 < points) throw DomainError("lagrange: row has fewer samples than the stencil");
  const double s = (t - x0) / h;
  const int k = std::clamp(static_cast<int>(std::floor(s)) - (points / 2 - 1), lo, hi - points + 1);
  double acc = 0.0;
  for (int a = 0; a < points; ++a) {
    double l = 1.0;
    for (int b = 0; b < points; ++b)
      if (b != a) l *= (s - (k + b)) / static_cast<double>(a - b);
    acc += l * row[static_cast<std::size_t>(k + a)];
  }
  return acc;
}

inline double lagrange4(std::span<const double> row, double x0, double h, double t, int lo, int hi) {
  return lagrange(row, x0, h, t, lo, hi, 4);
}

}  // namespace mage
