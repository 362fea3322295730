#pragma once

// Thin wrapper over Eigen's port of MINPACK lmder (Levenberg-Marquardt with
// trust-region damping).

#include <functional>

#include <Eigen/Core>

namespace cslbound::lsq {

using Residuals = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;
using Jacobian = std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd& J)>;

struct Options {
  double xtol = 1e-12;
  double ftol = 1e-12;
  int max_evals = 4000;
};

struct Result {
  Eigen::VectorXd x;
  double cost = 0.0;  // sum of squared residuals
  int evals = 0;
  bool converged = false;
};

/// Minimises |r(x)|^2 over x in R^n with m residuals. When `jacobian` is
/// empty a central-difference Jacobian is used.
Result levenberg_marquardt(const Residuals& residuals, const Jacobian& jacobian, Eigen::VectorXd x0, int m,
                           const Options& opt = {});

/// Central-difference Jacobian of r at x.
Eigen::MatrixXd numerical_jacobian(const Residuals& residuals, const Eigen::VectorXd& x, int m);

/// Singular values below this fraction of the largest (column-equilibrated J)
/// count as null directions.
inline constexpr double kSingularRcond = 1e-7;

/// (J^T J)^{-1}, or its pseudo-inverse when up to `allowed_null` directions
/// are unconstrained. Throws SingularSystemError beyond that. `null_space`
/// receives the unconstrained directions as unit columns.
Eigen::MatrixXd normal_inverse(const Eigen::MatrixXd& J, int allowed_null = 0, int* null_found = nullptr,
                               Eigen::MatrixXd* null_space = nullptr);

}  // namespace cslbound::lsq
