#pragma once

// Synthetic spectra and thermal datasets with known ground truth.
//
// Random numbers come from Philox4x32-10 (Salmon et al., SC'11). A stream is
// identified by a 64-bit key and a 64-bit stream id; its n-th block is the
// Philox output for counter (n, stream id). Normals use Box-Muller, gammas
// Marsaglia-Tsang, so output depends on nothing but this file.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "cslbound/spectral_fit.hpp"
#include "cslbound/thermal_inference.hpp"

namespace cslbound {

/// Philox4x32 with 10 rounds.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t key, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  /// Gamma(shape, 1).
  double gamma(double shape);

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class SynthMode { psd_scatter, time_domain };

struct SynthConfig {
  SpectralModelParams truth;
  double n_av = 60.0;
  double sample_rate = 1e5;
  std::size_t n_samples = std::size_t{1} << 22;
  std::uint64_t seed = 0;
  SynthMode mode = SynthMode::psd_scatter;
  // Emitted band; NaN means truth.f0 -/+ kDefaultSynthHalfBand.
  double f_lo = std::numeric_limits<double>::quiet_NaN();
  double f_hi = std::numeric_limits<double>::quiet_NaN();
  unsigned workers = 0;
};

inline constexpr double kDefaultSynthHalfBand = 25.0;

/// Bins k with f = k fs / N inside the band.
///
/// psd_scatter: bin k is model(f_k) Gamma(n_av, 1) / n_av drawn from the
/// stream (seed, k).
/// time_domain: n_av independent records of n_samples, each the sum of white
/// flux noise (A), white force noise through the resonator (B) and white noise
/// through the antiresonance filter (C); record p uses the stream
/// (p XOR seed, 0) and starts from the stationary state. Each record is
/// Blackman-windowed and its one-sided periodograms are averaged.
NoiseSpectrum synth_spectrum(const SynthConfig& cfg);

/// The periodic Blackman window 0.42 - 0.5 cos(2 pi n/N) + 0.08 cos(4 pi n/N).
std::vector<double> blackman_window(std::size_t n);

struct SynthThermalConfig {
  double B0 = 0.0;
  double Ba = 0.0;
  double Bb = 0.0;
  double x_co = 0.0;
  double n = 4.0;
  std::vector<double> x;     // T/Q grid, K
  double Q = 2.83e6;         // T = x Q
  double noise_rel = 0.05;   // Gaussian scatter, relative to the model
  double sigma_rel = 0.0;    // reported sigma_B; 0 means noise_rel (or 5% if noise_rel is 0)
  std::uint64_t seed = 0;
};

/// Point i is drawn from the stream (seed, i).
ThermalDataset synth_thermal(const SynthThermalConfig& cfg);

/// Per-temperature spectra whose Lorentzian amplitude follows
/// B = B1 (x_sat + x_inj), x_sat = (x^n + x_co^n)^{1/n}, x = T/Q, and
/// x_inj = S_inj w0 / (4 kB k) converts an injected force-noise floor.
struct SynthDatasetConfig {
  SpectralModelParams base;  // A, C, f0, f1, Qprime; B is overwritten
  ResonatorParams resonator;
  std::vector<double> temperatures;  // K
  std::vector<double> Q;             // one per temperature
  double B1 = 3.29e-12;
  double S_inj = 0.0;  // N^2 / Hz
  double x_co = 0.0;   // K; 0 disables saturation
  double n = 4.0;
  double n_av = 60.0;
  double sample_rate = 1e5;
  std::size_t n_samples = std::size_t{1} << 22;
  SynthMode mode = SynthMode::psd_scatter;
  std::uint64_t seed = 0;
};

struct SynthDataset {
  std::vector<NoiseSpectrum> spectra;
  std::vector<double> true_B;
};

/// Spectrum i uses seed + i * 0x9E3779B97F4A7C15.
SynthDataset synth_dataset(const SynthDatasetConfig& cfg);

}  // namespace cslbound
