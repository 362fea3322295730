#pragma once

// CSL force-noise spectral density of a rigid mass,
//
//   S = kOneSidedFactor * hbar^2 lambda rC^3 / (pi^{3/2} m0^2)
//       * \int d^3q (q.m)^2 exp(-q^2 rC^2) |rho~(q)|^2
//
// with m the unit motion axis. Two independent evaluators are provided: a
// general quadrature engine for composite masses and a closed form for a
// single multilayer stack moving along its stacking axis.

#include <cstddef>
#include <span>
#include <vector>

#include "cslbound/mass_model.hpp"

namespace cslbound {

struct CslParams {
  double lambda = 0.0;  // 1/s
  double rC = 1e-7;     // m
};

/// Throws std::invalid_argument unless lambda >= 0 and rC > 0.
void validate(const CslParams& p);

struct PhysicalConstants {
  double hbar;
  double m0;
  double kB;
};
PhysicalConstants physical_constants();

/// The integral above is the two-sided (momentum-diffusion) density; the
/// one-sided PSD used throughout the library is twice it.
inline constexpr double kOneSidedFactor = 2.0;

/// Factor multiplying the q integral, in N^2/Hz per (kg^2 m^-1).
double csl_prefactor(const CslParams& p);

enum class QuadScheme {
  // Sum over component pairs, each pair reduced to 1D integrals.
  pairwise,
  // Nested adaptive integration of the full 3D integrand. Slow; only usable
  // when rC is comparable to the component sizes.
  direct,
};

struct QuadConfig {
  double rel_tol = 1e-5;
  double abs_tol = 0.0;  // on the returned PSD, N^2/Hz
  std::size_t max_evals = 100'000'000;
  QuadScheme scheme = QuadScheme::pairwise;

  static QuadConfig default_3d() { return {}; }
  static QuadConfig default_1d() { return {1e-6, 0.0, 100'000'000, QuadScheme::pairwise}; }
};

/// Throws QuadratureError (tagged with rC) when the tolerance is not met.
double csl_psd_quadrature(const CompositeMass& mass, const CslParams& params,
                          const QuadConfig& cfg = QuadConfig::default_3d());

/// Closed form for a stack moving along its stacking axis.
double csl_psd_multilayer(const MultilayerStack& stack, const CslParams& params,
                          const QuadConfig& cfg = QuadConfig::default_1d());

/// J(L) = 1 - exp(-L^2/4rC^2) - (sqrt(pi) L / 2rC) erf(L / 2rC), always <= 0.
double multilayer_j(double length, double rC);

/// I = \int_{-inf}^{inf} exp(-rC^2 q^2) g(q d)^2 dq, where g(q d) is q times
/// the stacking-axis transform of the stack.
double multilayer_i(const MultilayerStack& stack, double rC,
                    const QuadConfig& cfg = QuadConfig::default_1d());

struct ScanPoint {
  double rC;
  double psd;  // at lambda = 1
};

/// One PSD per grid point, in grid order. Failures are rethrown as
/// QuadratureError carrying the offending rC (the smallest failing one).
/// `workers == 0` picks default_worker_count().
std::vector<ScanPoint> csl_psd_derivative_scan(const CompositeMass& mass,
                                               std::span<const double> rC_grid,
                                               const QuadConfig& cfg = QuadConfig::default_3d(),
                                               unsigned workers = 0);

/// Hardware concurrency, capped by the CSLBOUND_NUM_THREADS environment variable.
unsigned default_worker_count();

namespace detail {
// Radial profile of a uniform unit ball of radius R convolved with an
// isotropic Gaussian exp(-r^2/a^2)/(pi^{3/2} a^3), and dP/ds divided by s.
double smoothed_ball(double s, double radius, double a);
double smoothed_ball_slope_over_s(double s, double radius, double a);
}  // namespace detail

}  // namespace cslbound
