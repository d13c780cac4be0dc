#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ctpe {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Exponential blow-up in a value family. Solvers treat this as divergence
/// evidence rather than a hard failure.
class OverflowError : public std::runtime_error {
 public:
  explicit OverflowError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite state produced while sampling (the process itself blew up).
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

/// Empirical Gram / design matrix is numerically singular.
class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, double rcond_estimate)
      : std::runtime_error(what + " (rcond ~ " + std::to_string(rcond_estimate) + ")"),
        rcond(rcond_estimate) {}
  double rcond;
};

}  // namespace ctpe
