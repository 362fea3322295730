#include "cslbound/thermal_inference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iterator>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "cslbound/constants.hpp"
#include "cslbound/error.hpp"
#include "cslbound/least_squares.hpp"

namespace cslbound {

namespace {

double sq(double x) { return x * x; }

double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double sigma_x_of(const ThermalPoint& p, double rel) { return std::isnan(p.sigma_x) ? rel * p.x() : p.sigma_x; }

struct Xy {
  std::vector<double> x, y, sy, sx;
};

Xy columns(const ThermalDataset& pts, double rel) {
  Xy c;
  for (const auto& p : pts) {
    validate(p);
    c.x.push_back(p.x());
    c.y.push_back(p.B);
    c.sy.push_back(p.sigma_B);
    c.sx.push_back(sigma_x_of(p, rel));
  }
  return c;
}

// Effective-variance chi^2 with B0 profiled out; returns {chi2, B0}.
std::pair<double, double> profiled_chi2(const Xy& d, double B1) {
  double sw = 0.0, swr = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const double w = 1.0 / (sq(d.sy[i]) + sq(B1 * d.sx[i]));
    sw += w;
    swr += w * (d.y[i] - B1 * d.x[i]);
  }
  const double B0 = swr / sw;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    chi2 += sq(d.y[i] - B0 - B1 * d.x[i]) / (sq(d.sy[i]) + sq(B1 * d.sx[i]));
  }
  return {chi2, B0};
}

}  // namespace

void validate(const ThermalPoint& p) {
  if (!(p.T > 0.0) || !(p.Q > 0.0) || !(p.sigma_B > 0.0) || !std::isfinite(p.B)) {
    throw std::invalid_argument("thermal point needs T > 0, Q > 0, sigma_B > 0 and finite B");
  }
}

double ResonatorParams::omega0() const { return 2.0 * constants::pi * f0; }

double thermal_force_psd(const ResonatorParams& p, double T, double Q) {
  if (!(T > 0.0)) throw std::invalid_argument("T must be positive");
  if (std::isinf(Q)) return 0.0;
  if (!(Q > 0.0)) throw std::invalid_argument("Q must be positive");
  return 4.0 * constants::kB * T * p.m * p.omega0() / Q;
}

double added_mass_stiffness(double f0, double f0_prime, double m_added) {
  if (!(f0 > 0.0 && f0_prime > f0 && m_added > 0.0)) {
    throw std::invalid_argument("added mass method needs f0' > f0 > 0 and m_added > 0");
  }
  const double inv = 1.0 / sq(f0) - (std::isinf(f0_prime) ? 0.0 : 1.0 / sq(f0_prime));
  return 4.0 * sq(constants::pi) * m_added / inv;
}

LinearFitResult fit_linear(const ThermalDataset& points, double x_rel_error) {
  if (points.size() < 3) throw TooFewPointsError("linear fit needs at least 3 points");
  const Xy d = columns(points, x_rel_error);
  const auto [xmin, xmax] = std::minmax_element(d.x.begin(), d.x.end());
  if (*xmax - *xmin <= 1e-12 * std::abs(*xmax)) throw SingularSystemError("all x values are equal");

  // Weighted least squares without x errors seeds the search.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const double w = 1.0 / sq(d.sy[i]);
    sw += w;
    sx += w * d.x[i];
    sy += w * d.y[i];
    sxx += w * sq(d.x[i]);
    sxy += w * d.x[i] * d.y[i];
  }
  const double det = sw * sxx - sx * sx;
  const double b1 = (sw * sxy - sx * sy) / det;
  const double s1 = std::sqrt(sw / det);

  // Coarse scan then Brent refinement of the profiled chi^2 in B1.
  const double half = 20.0 * s1 + 0.5 * std::abs(b1);
  constexpr int kScan = 400;
  double best = b1, best_chi2 = profiled_chi2(d, b1).first;
  for (int k = 0; k <= kScan; ++k) {
    const double t = b1 - half + 2.0 * half * k / kScan;
    const double c = profiled_chi2(d, t).first;
    if (c < best_chi2) {
      best_chi2 = c;
      best = t;
    }
  }
  // Brent works on u in [-1, 1]: its absolute tolerance term would swamp a
  // bracket of width ~1e-14 in B1 itself.
  const double cell = 2.0 * half / kScan;
  const double u = boost::math::tools::brent_find_minima(
      [&](double t) { return profiled_chi2(d, best + cell * t).first; }, -1.0, 1.0,
      std::numeric_limits<double>::digits / 2).first;
  double B1 = best + cell * u;
  // Brent only locates the minimum to ~sqrt(eps) of the bracket; polish on the
  // slope, which by the envelope theorem is the partial derivative at fixed B0.
  auto slope = [&](double t) {
    const double b1 = best + cell * t;
    const double b0 = profiled_chi2(d, b1).second;
    double g = 0.0;
    for (std::size_t i = 0; i < d.x.size(); ++i) {
      const double V = sq(d.sy[i]) + sq(b1 * d.sx[i]);
      const double r = d.y[i] - b0 - b1 * d.x[i];
      g += -2.0 * d.x[i] * r / V - 2.0 * b1 * sq(d.sx[i]) * r * r / sq(V);
    }
    return g;
  };
  const double g_lo = slope(-1.0), g_hi = slope(1.0);
  if (g_lo < 0.0 && g_hi > 0.0) {
    std::uintmax_t iters = 100;
    const auto root = boost::math::tools::toms748_solve(slope, -1.0, 1.0, g_lo, g_hi,
                                                        boost::math::tools::eps_tolerance<double>(50), iters);
    const double polished = best + cell * 0.5 * (root.first + root.second);
    B1 = polished;
  }

  LinearFitResult out;
  out.B1 = B1;
  out.B0 = profiled_chi2(d, B1).second;
  out.chi2 = profiled_chi2(d, B1).first;
  out.dof = static_cast<int>(d.x.size()) - 2;

  // Covariance: twice the inverse Hessian of chi^2.
  Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const double x = d.x[i], s2 = sq(d.sx[i]);
    const double V = sq(d.sy[i]) + sq(B1) * s2;
    const double r = d.y[i] - out.B0 - B1 * x;
    H(0, 0) += 2.0 / V;
    H(0, 1) += 2.0 * x / V + 4.0 * r * B1 * s2 / sq(V);
    H(1, 1) += 2.0 * x * x / V + 8.0 * x * r * B1 * s2 / sq(V) - 2.0 * s2 * r * r / sq(V) +
               8.0 * sq(B1) * sq(s2) * r * r / (V * V * V);
  }
  H(1, 0) = H(0, 1);
  if (std::abs(H.determinant()) <= 0.0) throw SingularSystemError("linear fit Hessian is singular");
  out.covariance = 2.0 * H.inverse();
  return out;
}

double saturation_model(double x, double B0, double Ba, double Bb, double x_co, double n) {
  // (x^n + x_co^n)^{1/n} evaluated as m (1 + (min/m)^n)^{1/n} to avoid overflow.
  const double hi = std::max(x, x_co), lo = std::min(x, x_co);
  const double root = hi > 0.0 ? hi * std::pow(1.0 + std::pow(lo / hi, n), 1.0 / n) : 0.0;
  return B0 + Ba * root + Bb * x;
}

namespace {

constexpr double kNullComponent = 1e-6;

double saturation_slope(double x, double Ba, double Bb, double x_co, double n) {
  if (x <= 0.0) return Bb;
  // d/dx (x^n + c^n)^{1/n} = (x / root)^{n-1}
  const double root = saturation_model(x, 0.0, 1.0, 0.0, x_co, n);
  return Ba * std::pow(x / root, n - 1.0) + Bb;
}

}  // namespace

SaturationFitResult fit_saturation(const ThermalDataset& points, double n, double x_rel_error) {
  if (points.size() < 5) throw TooFewPointsError("saturation fit needs at least 5 points");
  if (!(n > 0.0)) throw std::invalid_argument("saturation exponent must be positive");
  const Xy d = columns(points, x_rel_error);
  const int m = static_cast<int>(d.x.size());
  const auto [xmin_it, xmax_it] = std::minmax_element(d.x.begin(), d.x.end());
  const double xmin = *xmin_it, xmax = *xmax_it;
  if (xmax - xmin <= 1e-12 * std::abs(xmax)) throw SingularSystemError("all x values are equal");

  // Parameters (B0, Ba, Bb, ln x_co) with amplitudes in units of the data scale.
  double yscale = 0.0;
  for (double v : d.y) yscale = std::max(yscale, std::abs(v));
  if (yscale == 0.0) yscale = 1.0;
  const double xscale = xmax;
  auto unpack = [&](const Eigen::VectorXd& p) {
    return std::array<double, 4>{p[0] * yscale, p[1] * yscale / xscale, p[2] * yscale / xscale, std::exp(p[3])};
  };
  auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const auto q = unpack(p);
    for (int i = 0; i < m; ++i) {
      const double slope = saturation_slope(d.x[i], q[1], q[2], q[3], n);
      const double V = sq(d.sy[i]) + sq(slope * d.sx[i]);
      r[i] = (d.y[i] - saturation_model(d.x[i], q[0], q[1], q[2], q[3], n)) / std::sqrt(V);
    }
  };

  // Multi-start over the crossover; for fixed x_co the model is linear in the
  // amplitudes, which gives each start its amplitudes by weighted least squares.
  constexpr int kStarts = 16;
  const double t_lo = std::log(xmin / 10.0), t_hi = std::log(xmax * 2.0);
  // Starts that drift off the data without converging are kept as a fallback:
  // x_co running to 0 or infinity is how a crossover-free data set looks.
  lsq::Result best, drifted;
  best.cost = drifted.cost = INFINITY;
  for (int s = 0; s < kStarts; ++s) {
    const double t = t_lo + (t_hi - t_lo) * s / (kStarts - 1);
    const double xc = std::exp(t);
    Eigen::MatrixXd A(m, 3);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) {
      const double w = 1.0 / d.sy[i];
      A(i, 0) = w;
      A(i, 1) = w * saturation_model(d.x[i], 0.0, 1.0, 0.0, xc, n);
      A(i, 2) = w * d.x[i];
      b[i] = w * d.y[i];
    }
    const Eigen::Vector3d amp = A.colPivHouseholderQr().solve(b);
    Eigen::VectorXd p0(4);
    p0 << amp[0] / yscale, amp[1] * xscale / yscale, amp[2] * xscale / yscale, t;
    if (!p0.allFinite()) continue;
    const auto r = lsq::levenberg_marquardt(residuals, {}, p0, m);
    if (r.converged && r.cost < best.cost) best = r;
    const double xc_end = std::exp(r.x[3]);
    if (!r.converged && std::isfinite(r.cost) && (xc_end < xmin || xc_end > xmax) && r.cost < drifted.cost) drifted = r;
  }
  if (!std::isfinite(best.cost) || drifted.cost < best.cost) best = drifted;
  if (!std::isfinite(best.cost)) throw ConvergenceError("saturation fit did not converge from any start");

  const auto q = unpack(best.x);
  SaturationFitResult out;
  out.B0 = q[0];
  out.Ba = q[1];
  out.Bb = q[2];
  out.x_co = q[3];
  out.n = n;
  out.chi2 = best.cost;
  out.dof = m - 4;
  // Covariance in (B0, Ba, Bb, x_co) from the internal one by the diagonal chain rule.
  const Eigen::MatrixXd J = lsq::numerical_jacobian(residuals, best.x, m);
  // Unconstrained directions (x_co with the crossover far outside the data,
  // or Ba = 0) get infinite variance on every parameter they touch.
  Eigen::MatrixXd null_space;
  Eigen::Matrix4d cov_internal = lsq::normal_inverse(J, 4, &out.null_directions, &null_space);
  for (Eigen::Index k = 0; k < null_space.cols(); ++k)
    for (int i = 0; i < 4; ++i)
      if (std::abs(null_space(i, k)) > kNullComponent) cov_internal(i, i) = INFINITY;
  const Eigen::Vector4d chain(yscale, yscale / xscale, yscale / xscale, out.x_co);
  out.covariance = chain.asDiagonal() * cov_internal * chain.asDiagonal();
  if (out.x_co < xmin || out.x_co > xmax) {
    out.crossover_outside_data = true;
    out.warning = "fitted crossover lies outside the range of the data; x_co is poorly constrained";
  } else if (out.null_directions > 0) {
    out.warning = "saturation parameters are degenerate on this data";
  }
  return out;
}

ThermalDataset restrict_temperature(const ThermalDataset& points, double T_min) {
  ThermalDataset out;
  std::copy_if(points.begin(), points.end(), std::back_inserter(out), [&](const auto& p) { return p.T >= T_min; });
  return out;
}

Estimate nonthermal_psd(const LinearFitResult& fit, const ResonatorParams& p) {
  if (!(p.k > 0.0 && p.f0 > 0.0)) throw std::invalid_argument("resonator needs k > 0 and f0 > 0");
  const double scale = 4.0 * constants::kB * p.k / p.omega0();
  Estimate out;
  out.value = scale * fit.B0 / fit.B1;
  const Eigen::Vector2d g(scale / fit.B1, -scale * fit.B0 / sq(fit.B1));
  const double var = g.dot(fit.covariance * g) + sq(out.value / p.k * p.sigma_k);
  out.sigma = std::sqrt(std::max(var, 0.0));
  return out;
}

std::pair<double, double> feldman_cousins_acceptance(double mu, double cl) {
  if (!(cl > 0.0 && cl < 1.0)) throw std::invalid_argument("confidence level must be in (0, 1)");
  if (!(mu >= 0.0)) throw std::invalid_argument("mu must be non-negative");
  if (mu == 0.0) {
    // The ratio is 1 for every x <= 0, so the whole negative axis is accepted.
    return {-INFINITY, boost::math::quantile(boost::math::normal(), cl)};
  }
  auto log_ratio = [&](double x) { return x >= 0.0 ? -0.5 * sq(x - mu) : x * mu - 0.5 * mu * mu; };
  auto upper_for = [&](double x1) { return mu + std::sqrt(-2.0 * log_ratio(x1)); };
  auto coverage = [&](double x1) { return phi(upper_for(x1) - mu) - phi(x1 - mu); };
  double lo = -1e6, hi = mu;
  if (coverage(lo) < cl) return {-INFINITY, upper_for(lo)};
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (coverage(mid) >= cl ? lo : hi) = mid;
  }
  return {lo, upper_for(lo)};
}

FeldmanCousinsBelt::FeldmanCousinsBelt(double cl, double mu_max, double step) : cl_(cl), mu_max_(mu_max), step_(step) {
  if (!(cl > 0.0 && cl < 1.0)) throw std::invalid_argument("confidence level must be in (0, 1)");
  if (!(step > 0.0) || !(mu_max > step)) throw std::invalid_argument("belt needs 0 < step < mu_max");
  const auto n = static_cast<std::size_t>(std::ceil(mu_max / step));
  for (std::size_t k = 0; k <= n; ++k) {
    const double mu = step * static_cast<double>(k);
    const auto [a, b] = feldman_cousins_acceptance(mu, cl);
    mu_.push_back(mu);
    x1_.push_back(a);
    x2_.push_back(b);
  }
  mu_max_ = mu_.back();
}

std::pair<double, double> FeldmanCousinsBelt::acceptance(double mu) const { return feldman_cousins_acceptance(mu, cl_); }

std::pair<double, double> FeldmanCousinsBelt::interval(double x) const {
  const std::size_t n = mu_.size();
  if (x1_.back() <= x) throw GridResolutionError("belt does not extend far enough for x=" + std::to_string(x));
  // x1 and x2 both increase with mu.
  std::size_t k = 0;
  while (k + 1 < n && x1_[k + 1] <= x) ++k;
  double hi = mu_[k];
  if (std::isfinite(x1_[k])) hi += step_ * (x - x1_[k]) / (x1_[k + 1] - x1_[k]);
  double lo = 0.0;
  if (x2_[0] < x) {
    std::size_t j = 0;
    while (j < n && x2_[j] < x) ++j;
    if (j == n) throw GridResolutionError("belt does not extend far enough for x=" + std::to_string(x));
    lo = mu_[j - 1] + step_ * (x - x2_[j - 1]) / (x2_[j] - x2_[j - 1]);
  }
  return {lo, hi};
}

double feldman_cousins_upper(double measured, double sigma, double cl, double precision) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!(cl > 0.5 && cl < 1.0)) throw std::invalid_argument("confidence level must be in (0.5, 1)");
  if (precision < kFeldmanCousinsStep) {
    throw GridResolutionError("requested precision is finer than the belt grid step " +
                              std::to_string(kFeldmanCousinsStep));
  }
  const double x = measured / sigma;
  const FeldmanCousinsBelt belt(cl, std::max(x, 0.0) + 6.0, kFeldmanCousinsStep);
  return sigma * belt.upper(x);
}

double kapitza_crossover(double W, double c_K, double S_area) {
  if (!(W > 0.0 && c_K > 0.0 && S_area > 0.0)) throw std::invalid_argument("inputs must be positive");
  return std::pow(4.0 * W / (c_K * S_area), 0.25);
}

double saturated_temperature(double T, double T_co, double n) {
  return saturation_model(T, 0.0, 1.0, 0.0, T_co, n);
}

}  // namespace cslbound
