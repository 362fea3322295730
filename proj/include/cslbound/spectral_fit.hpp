#pragma once

// Resonance / antiresonance fits of averaged flux-noise spectra.
//
//   S(f) = A + [B f0^4 + C (f^2 - f1^2)^2] / [(f^2 - f0^2)^2 + (f f0 / Q')^2]
//
// Spectra are in flux quanta squared per Hz. Each bin of an average of n_av
// periodograms scatters as S(f) chi^2(2 n_av) / (2 n_av).

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cslbound {

struct NoiseSpectrum {
  std::vector<double> freqs;  // Hz, strictly increasing
  std::vector<double> psd;    // Phi0^2 / Hz
  double n_av = 1.0;
  std::string window = "blackman";
  double sample_rate = 0.0;  // Hz
  std::size_t n_samples = 0;  // per periodogram
  // Optional run metadata (NaN when absent).
  double temperature_K = std::numeric_limits<double>::quiet_NaN();
  double Qprime = std::numeric_limits<double>::quiet_NaN();
  double Q = std::numeric_limits<double>::quiet_NaN();

  double bin_width() const { return sample_rate / static_cast<double>(n_samples); }
};

/// Throws std::invalid_argument when the invariants do not hold.
void validate(const NoiseSpectrum& s);

struct SpectralModelParams {
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double f0 = 0.0;
  double f1 = 0.0;
  double Qprime = 1.0;
};

using Matrix5d = Eigen::Matrix<double, 5, 5>;

struct ResidualCheck {
  bool pass = false;
  double p_value = 0.0;
  double statistic = 0.0;  // Pearson chi^2
  int dof = 0;
  int bins = 0;            // after merging sparse bins
  double bin_width = 0.0;  // Freedman-Diaconis
  std::size_t points = 0;
  double mean = 0.0;       // of 2 n_av psd / model; 2 n_av expected
  double variance = 0.0;   // 4 n_av expected
};

struct SpectralFitResult {
  SpectralModelParams params;
  // Order: A, B, C, f0, f1.
  Matrix5d covariance = Matrix5d::Zero();
  double chi2 = 0.0;
  int dof = 0;
  std::vector<std::size_t> masked_bins;  // indices into the input spectrum
  std::size_t window_begin = 0;           // analysis window [begin, end) in the input
  std::size_t window_end = 0;
  int iterations = 0;                     // re-weighting passes
  std::vector<double> chi2_per_dof_history;
  std::optional<ResidualCheck> residual_test;
  // Unconstrained parameter combinations (normally 1: see
  // lorentzian_amplitude). The covariance is the pseudo-inverse on the rest.
  int null_directions = 0;

  double sigma(int k) const { return std::sqrt(covariance(k, k)); }
};

double model_psd(double f, const SpectralModelParams& p);

/// B + C (f0^2 - f1^2)^2 / f0^4: the coefficient of the resonant Lorentzian.
/// The spectrum fixes A + C, C (f0^2 - f1^2) and this sum, but not B, C and
/// f1 separately, so fitted B carries an offset set by where f1 settles.
double lorentzian_amplitude(const SpectralModelParams& p);
double lorentzian_amplitude_sigma(const SpectralFitResult& r);

/// Bins whose frequency lies within the Blackman main-lobe half-width
/// (3 bins) of the peak on either side, i.e. a band twice the main-lobe
/// width. Throws UnsupportedWindowError unless the window is "blackman".
std::vector<std::size_t> leakage_mask(const NoiseSpectrum& spectrum, double peak_freq);

/// Main-lobe half-width of the Blackman window in bins.
inline constexpr double kBlackmanHalfLobeBins = 3.0;

struct FitOptions {
  // Analysis window; NaN means f0 -/+ 17.5 Hz around the initial f0.
  double f_lo = std::numeric_limits<double>::quiet_NaN();
  double f_hi = std::numeric_limits<double>::quiet_NaN();
  bool mask_leakage = true;  // only applied for Blackman spectra
  int max_iterations = 100;
  double chi2_rel_tol = 1e-4;
  bool residual_check = true;
};

inline constexpr double kDefaultHalfWindowHz = 17.5;

/// Cold-start initial guess from the spectrum alone.
SpectralModelParams default_initial_guess(const NoiseSpectrum& spectrum, double Qprime,
                                          const FitOptions& opt = {});

/// Recursive weighted fit of A, B, C, f0, f1 with Q' fixed. The first pass is
/// weighted by the data for a cold start and by the model when `init` is given.
/// Throws ConvergenceError, SingularSystemError, TooFewPointsError.
SpectralFitResult fit_spectrum(const NoiseSpectrum& spectrum, double Qprime, const FitOptions& opt = {},
                               std::optional<SpectralModelParams> init = std::nullopt);

/// 2 IQR n^{-1/3}.
double freedman_diaconis_width(std::vector<double> values);

/// Pearson test of 2 n_av psd/model against chi^2(2 n_av) on the fitted
/// window with masked bins removed. Throws TooFewPointsError below 50 points.
ResidualCheck residual_distribution_check(const NoiseSpectrum& spectrum, const SpectralFitResult& fit);

/// Same test on already-normalised values x_i = 2 n_av psd_i / model_i.
ResidualCheck chi2_distribution_check(const std::vector<double>& normalized, double n_av);

inline constexpr std::size_t kMinResidualPoints = 50;
inline constexpr double kResidualPassP = 0.01;

/// J_Phi = k (1 - f1^2/f0^2) / Phi_x^2 in 1/H, with Phi_x given in Phi0/m.
double antiresonance_coupling(double f0, double f1, double k, double Phi_x);

}  // namespace cslbound
