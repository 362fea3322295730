#include "cslbound/synth.hpp"

#include <complex>
#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

#include "cslbound/constants.hpp"
#include "cslbound/csl_noise.hpp"
#include "cslbound/parallel.hpp"

namespace cslbound {

namespace {

constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

double sq(double x) { return x * x; }

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> c, std::array<std::uint32_t, 2> k) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kW0;
    k[1] += kW1;
  }
  return c;
}

PhiloxStream::PhiloxStream(std::uint64_t key, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)}, stream_(stream) {}

std::uint32_t PhiloxStream::next_u32() {
  if (used_ == 4) {
    buffer_ = philox4x32_10({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                             static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                            key_);
    ++block_;
    used_ = 0;
  }
  return buffer_[used_++];
}

std::uint64_t PhiloxStream::next_u64() {
  const std::uint64_t lo = next_u32();
  return lo | (std::uint64_t{next_u32()} << 32);
}

double PhiloxStream::uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

double PhiloxStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(uniform()));
  const double t = 2.0 * constants::pi * uniform();
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

double PhiloxStream::gamma(double shape) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be positive");
  if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform(), 1.0 / shape);
  const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

std::vector<double> blackman_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * constants::pi * static_cast<double>(i) / static_cast<double>(n);
    w[i] = 0.42 - 0.5 * std::cos(t) + 0.08 * std::cos(2.0 * t);
  }
  return w;
}

namespace {

// One record of the time-domain model, exactly discretised by impulse
// invariance; y = flux noise + resonator(B) + antiresonance filter(C).
class Resonator {
 public:
  Resonator(const SpectralModelParams& p, double fs) : T_(1.0 / fs) {
    const double w0 = 2.0 * constants::pi * p.f0, w1 = 2.0 * constants::pi * p.f1;
    const double gamma = w0 / (2.0 * p.Qprime);
    const double wd = w0 * std::sqrt(1.0 - 1.0 / (4.0 * sq(p.Qprime)));
    pole_ = {-gamma, wd};
    a_ = std::exp(pole_ * T_);
    const std::complex<double> split = pole_ - std::conj(pole_);
    rB_ = w0 * w0 / split;
    rC_ = (w1 * w1 - w0 * w0 - (w0 / p.Qprime) * pole_) / split;
    hC0_ = 2.0 * rC_.real();
    sA_ = std::sqrt(p.A * fs / 2.0);
    sB_ = std::sqrt(p.B * fs / 2.0);
    sC_ = std::sqrt(p.C * fs / 2.0);
  }

  void fill(PhiloxStream& rng, double* out, std::size_t n) const {
    std::complex<double> zB = stationary(rng, sB_), zC = stationary(rng, sC_);
    for (std::size_t i = 0; i < n; ++i) {
      const double wA = sA_ * rng.normal(), wB = sB_ * rng.normal(), wC = sC_ * rng.normal();
      zB = a_ * zB + wB;
      zC = a_ * zC + wC;
      const double yB = 2.0 * T_ * (rB_ * zB).real();
      const double yC = wC + T_ * (2.0 * (rC_ * zC).real() - 0.5 * hC0_ * wC);
      out[i] = wA + yB + yC;
    }
  }

 private:
  // Draw z = sum_k a^k w_{-k} from its stationary distribution.
  std::complex<double> stationary(PhiloxStream& rng, double sigma) const {
    const double s2 = sigma * sigma;
    const double m2 = s2 / -std::expm1(2.0 * pole_.real() * T_);  // E|z|^2
    const std::complex<double> e2 = s2 / (1.0 - a_ * a_);          // E z^2
    const double vu = 0.5 * (m2 + e2.real()), vv = 0.5 * (m2 - e2.real()), cuv = 0.5 * e2.imag();
    const double l11 = std::sqrt(vu), l21 = cuv / l11, l22 = std::sqrt(std::max(vv - l21 * l21, 0.0));
    const double g1 = rng.normal(), g2 = rng.normal();
    return {l11 * g1, l21 * g1 + l22 * g2};
  }

  double T_;
  std::complex<double> pole_, a_, rB_, rC_;
  double hC0_, sA_, sB_, sC_;
};

}  // namespace

NoiseSpectrum synth_spectrum(const SynthConfig& cfg) {
  if (!(cfg.n_av >= 1.0)) throw std::invalid_argument("n_av must be >= 1");
  if (!(cfg.sample_rate > 0.0) || cfg.n_samples < 8) throw std::invalid_argument("invalid sampling");
  const auto& p = cfg.truth;
  if (!(p.A >= 0.0 && p.B >= 0.0 && p.C >= 0.0 && p.f0 > 0.0 && p.f1 > 0.0 && p.Qprime > 0.0)) {
    throw std::invalid_argument("invalid model parameters");
  }
  const double df = cfg.sample_rate / static_cast<double>(cfg.n_samples);
  const double f_lo = std::isnan(cfg.f_lo) ? p.f0 - kDefaultSynthHalfBand : cfg.f_lo;
  const double f_hi = std::isnan(cfg.f_hi) ? p.f0 + kDefaultSynthHalfBand : cfg.f_hi;
  const auto k_lo = static_cast<std::size_t>(std::max(1.0, std::ceil(f_lo / df)));
  const auto k_hi = static_cast<std::size_t>(std::min(std::floor(f_hi / df), static_cast<double>(cfg.n_samples / 2 - 1)));
  if (k_hi < k_lo) throw std::invalid_argument("synthesis band contains no bins");

  NoiseSpectrum s;
  s.n_av = cfg.n_av;
  s.window = "blackman";
  s.sample_rate = cfg.sample_rate;
  s.n_samples = cfg.n_samples;
  s.Qprime = p.Qprime;
  const std::size_t nbins = k_hi - k_lo + 1;
  s.freqs.resize(nbins);
  s.psd.assign(nbins, 0.0);
  for (std::size_t j = 0; j < nbins; ++j) s.freqs[j] = static_cast<double>(k_lo + j) * df;

  if (cfg.mode == SynthMode::psd_scatter) {
    for (std::size_t j = 0; j < nbins; ++j) {
      PhiloxStream rng(cfg.seed, k_lo + j);
      s.psd[j] = model_psd(s.freqs[j], p) * rng.gamma(cfg.n_av) / cfg.n_av;
    }
    return s;
  }

  if (cfg.n_av != std::floor(cfg.n_av)) throw std::invalid_argument("time-domain synthesis needs integer n_av");
  const auto records = static_cast<std::size_t>(cfg.n_av);
  const std::size_t N = cfg.n_samples;
  const auto window = blackman_window(N);
  double wsum2 = 0.0;
  for (double w : window) wsum2 += w * w;
  const double norm = 2.0 / (cfg.sample_rate * wsum2);
  const Resonator resonator(p, cfg.sample_rate);

  fftw_plan plan;
  {
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(N));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(N / 2 + 1));
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(N), in.get(), out.get(), FFTW_ESTIMATE);
  }
  std::vector<std::vector<double>> partial(records);
  parallel_for(records, cfg.workers ? cfg.workers : default_worker_count(), [&](std::size_t r) {
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(N));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(N / 2 + 1));
    PhiloxStream rng(static_cast<std::uint64_t>(r) ^ cfg.seed, 0);
    resonator.fill(rng, in.get(), N);
    for (std::size_t i = 0; i < N; ++i) in.get()[i] *= window[i];
    fftw_execute_dft_r2c(plan, in.get(), out.get());
    auto& row = partial[r];
    row.resize(nbins);
    for (std::size_t j = 0; j < nbins; ++j) {
      const auto& X = out.get()[k_lo + j];
      row[j] = norm * (X[0] * X[0] + X[1] * X[1]);
    }
  });
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  for (const auto& row : partial) {
    for (std::size_t j = 0; j < nbins; ++j) s.psd[j] += row[j];
  }
  for (double& v : s.psd) v /= static_cast<double>(records);
  return s;
}

ThermalDataset synth_thermal(const SynthThermalConfig& cfg) {
  if (!(cfg.Q > 0.0)) throw std::invalid_argument("Q must be positive");
  const double sigma_rel = cfg.sigma_rel > 0.0 ? cfg.sigma_rel : (cfg.noise_rel > 0.0 ? cfg.noise_rel : 0.05);
  ThermalDataset out;
  for (std::size_t i = 0; i < cfg.x.size(); ++i) {
    const double x = cfg.x[i];
    if (!(x > 0.0)) throw std::invalid_argument("x grid values must be positive");
    const double mean = saturation_model(x, cfg.B0, cfg.Ba, cfg.Bb, cfg.x_co, cfg.n);
    PhiloxStream rng(cfg.seed, i);
    ThermalPoint p;
    p.T = x * cfg.Q;
    p.Q = cfg.Q;
    p.B = mean + cfg.noise_rel * std::abs(mean) * rng.normal();
    p.sigma_B = sigma_rel * std::abs(mean);
    p.sigma_x = 0.0;  // x is exact here
    if (!(p.sigma_B > 0.0)) p.sigma_B = sigma_rel * std::max(std::abs(cfg.B0), 1e-300);
    out.push_back(p);
  }
  return out;
}

SynthDataset synth_dataset(const SynthDatasetConfig& cfg) {
  if (cfg.Q.size() != cfg.temperatures.size()) throw std::invalid_argument("need one Q per temperature");
  const double x_inj = cfg.S_inj * cfg.resonator.omega0() / (4.0 * constants::kB * cfg.resonator.k);
  SynthDataset out;
  for (std::size_t i = 0; i < cfg.temperatures.size(); ++i) {
    const double x = cfg.temperatures[i] / cfg.Q[i];
    const double x_sat = cfg.x_co > 0.0 ? saturation_model(x, 0.0, 1.0, 0.0, cfg.x_co, cfg.n) : x;
    SynthConfig sc;
    sc.truth = cfg.base;
    sc.truth.B = cfg.B1 * (x_sat + x_inj);
    sc.n_av = cfg.n_av;
    sc.sample_rate = cfg.sample_rate;
    sc.n_samples = cfg.n_samples;
    sc.mode = cfg.mode;
    sc.seed = cfg.seed + static_cast<std::uint64_t>(i) * kGolden;
    auto s = synth_spectrum(sc);
    s.temperature_K = cfg.temperatures[i];
    s.Q = cfg.Q[i];
    out.true_B.push_back(sc.truth.B);
    out.spectra.push_back(std::move(s));
  }
  return out;
}

}  // namespace cslbound
