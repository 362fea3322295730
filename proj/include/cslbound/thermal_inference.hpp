#pragma once

// From Lorentzian amplitudes B(T/Q) to the non-thermal force-noise floor.
//
//   linear:      B = B0 + B1 x,                       x = T/Q
//   saturation:  B = B0 + Ba (x^n + x_co^n)^{1/n} + Bb x
//   floor:       S_F0 = (4 kB k / w0) B0 / B1

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace cslbound {

struct ThermalPoint {
  double T = 0.0;        // K
  double Q = 0.0;
  double B = 0.0;        // Phi0^2 / Hz
  double sigma_B = 0.0;  // Phi0^2 / Hz
  // Error on x = T/Q; NaN selects the default relative error.
  double sigma_x = std::numeric_limits<double>::quiet_NaN();

  double x() const { return T / Q; }
};

using ThermalDataset = std::vector<ThermalPoint>;

void validate(const ThermalPoint& p);

struct ResonatorParams {
  double k = 0.0;      // N/m
  double f0 = 0.0;     // Hz
  double m = 0.0;      // kg
  double Phi_x = 0.0;  // Phi0 / m
  double sigma_k = 0.0;

  double omega0() const;
};

struct LinearFitResult {
  double B0 = 0.0;
  double B1 = 0.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
  double chi2 = 0.0;
  int dof = 0;
};

struct SaturationFitResult {
  double B0 = 0.0;
  double Ba = 0.0;
  double Bb = 0.0;
  double x_co = 0.0;  // K
  double n = 4.0;
  // Order: B0, Ba, Bb, x_co.
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
  double chi2 = 0.0;
  int dof = 0;
  bool crossover_outside_data = false;
  int null_directions = 0;  // unconstrained parameter combinations
  std::string warning;
};

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

/// x errors used when a point carries none: 1% of x.
inline constexpr double kDefaultXRelError = 0.01;

double thermal_force_psd(const ResonatorParams& p, double T, double Q);

/// k = 4 pi^2 m_added / (1/f0^2 - 1/f0'^2).
double added_mass_stiffness(double f0, double f0_prime, double m_added);

/// Straight-line fit with errors on both axes (effective-variance chi^2,
/// the profile of the orthogonal-distance objective). Needs >= 3 points;
/// throws SingularSystemError when all x coincide.
LinearFitResult fit_linear(const ThermalDataset& points, double x_rel_error = kDefaultXRelError);

double saturation_model(double x, double B0, double Ba, double Bb, double x_co, double n);

/// Four-parameter saturation fit with exponent n held fixed. Needs >= 5 points.
SaturationFitResult fit_saturation(const ThermalDataset& points, double n = 4.0,
                                   double x_rel_error = kDefaultXRelError);

/// Points with T >= T_min.
ThermalDataset restrict_temperature(const ThermalDataset& points, double T_min);

Estimate nonthermal_psd(const LinearFitResult& fit, const ResonatorParams& p);

/// Feldman-Cousins confidence belt for a unit-variance Gaussian measurement
/// x of a mean mu >= 0, with likelihood-ratio ordering.
class FeldmanCousinsBelt {
 public:
  FeldmanCousinsBelt(double cl, double mu_max, double step = 0.005);

  double cl() const { return cl_; }
  double step() const { return step_; }
  double mu_max() const { return mu_max_; }

  /// Acceptance interval [x1, x2] for a given mu (x1 may be -inf).
  std::pair<double, double> acceptance(double mu) const;
  /// Confidence interval [mu_lo, mu_hi] for an observed x.
  std::pair<double, double> interval(double x) const;
  double upper(double x) const { return interval(x).second; }

  const std::vector<double>& mu_grid() const { return mu_; }

 private:
  double cl_, mu_max_, step_;
  std::vector<double> mu_, x1_, x2_;
};

/// Acceptance interval of a single mu, solved directly.
std::pair<double, double> feldman_cousins_acceptance(double mu, double cl);

inline constexpr double kFeldmanCousinsStep = 0.005;

/// Upper end of the FC interval for measured/sigma, scaled back by sigma.
/// Throws GridResolutionError when `precision` (in sigma units) is finer
/// than the belt grid.
double feldman_cousins_upper(double measured, double sigma, double cl, double precision = kFeldmanCousinsStep);

/// (4 W / (c_K S))^{1/4}.
double kapitza_crossover(double W, double c_K, double S_area);

/// (T^n + T_co^n)^{1/n}.
double saturated_temperature(double T, double T_co, double n = 4.0);

}  // namespace cslbound
