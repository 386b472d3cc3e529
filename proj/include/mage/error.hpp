#pragma once

#include <stdexcept>
#include <string>

namespace mage {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid too small, fields on mismatched grids, masks outside the valid region.
class GridError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument values (exponents, theta, tolerances, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A node where convexity (or positivity of a derived quantity) fails.
class ConvexityError : public Error {
 public:
  ConvexityError(const std::string& what, int i, int j)
      : Error(what + " at node (" + std::to_string(i) + "," + std::to_string(j) + ")"), i_(i), j_(j) {}

  int i() const noexcept { return i_; }
  int j() const noexcept { return j_; }

 private:
  int i_;
  int j_;
};

/// Nonlinear or linear solver failure; the message names the safeguard that fired.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace mage
