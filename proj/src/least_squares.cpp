#include "cslbound/least_squares.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include "cslbound/error.hpp"

namespace cslbound::lsq {

namespace {

struct Functor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const Residuals& r;
  const Jacobian& j;
  int n, m;

  int inputs() const { return n; }
  int values() const { return m; }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    r(x, f);
    return f.allFinite() ? 0 : -1;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& J) const {
    if (j) {
      j(x, J);
    } else {
      J = numerical_jacobian(r, x, m);
    }
    return 0;
  }
};

}  // namespace

Eigen::MatrixXd numerical_jacobian(const Residuals& residuals, const Eigen::VectorXd& x, int m) {
  const auto n = x.size();
  Eigen::MatrixXd J(m, n);
  Eigen::VectorXd xp = x, fp(m), fm(m);
  const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = h0 * std::max(1.0, std::abs(x[k]));
    xp[k] = x[k] + h;
    residuals(xp, fp);
    xp[k] = x[k] - h;
    residuals(xp, fm);
    xp[k] = x[k];
    J.col(k) = (fp - fm) / (2.0 * h);
  }
  return J;
}

Result levenberg_marquardt(const Residuals& residuals, const Jacobian& jacobian, Eigen::VectorXd x0, int m,
                           const Options& opt) {
  Functor f{residuals, jacobian, static_cast<int>(x0.size()), m};
  Eigen::LevenbergMarquardt<Functor> lm(f);
  lm.parameters.xtol = opt.xtol;
  lm.parameters.ftol = opt.ftol;
  lm.parameters.maxfev = opt.max_evals;
  const auto status = lm.minimize(x0);
  Result out;
  out.x = x0;
  out.evals = static_cast<int>(lm.nfev);
  Eigen::VectorXd r(m);
  residuals(x0, r);
  out.cost = r.squaredNorm();
  using namespace Eigen::LevenbergMarquardtSpace;
  out.converged = status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                  status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall ||
                  status == FtolTooSmall || status == XtolTooSmall || status == GtolTooSmall;
  return out;
}

Eigen::MatrixXd normal_inverse(const Eigen::MatrixXd& J, int allowed_null, int* null_found,
                               Eigen::MatrixXd* null_space) {
  // Equilibrate columns before the rank test so that parameter units do not
  // matter. A zero column is a null direction of its own.
  Eigen::VectorXd d = J.colwise().norm().transpose();
  if (!d.allFinite()) throw SingularSystemError("normal equations are not finite");
  d = (d.array() > 0.0).select(d, 1.0);
  const Eigen::MatrixXd Js = J * d.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Js, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cut = kSingularRcond * s[0];
  Eigen::VectorXd inv2 = Eigen::VectorXd::Zero(s.size());
  int null = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cut) inv2[i] = 1.0 / (s[i] * s[i]);
    else ++null;
  }
  if (null > allowed_null) throw SingularSystemError("normal equations are singular");
  if (null_found) *null_found = null;
  const Eigen::MatrixXd& V = svd.matrixV();
  if (null_space) {
    null_space->resize(J.cols(), null);
    for (int k = 0; k < null; ++k) {
      null_space->col(k) = (d.cwiseInverse().asDiagonal() * V.col(s.size() - null + k)).normalized();
    }
  }
  return d.cwiseInverse().asDiagonal() * V * inv2.asDiagonal() * V.transpose() * d.cwiseInverse().asDiagonal();
}

}  // namespace cslbound::lsq
