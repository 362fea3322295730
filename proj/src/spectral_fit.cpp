#include "cslbound/spectral_fit.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include <boost/math/distributions/chi_squared.hpp>

#include "cslbound/constants.hpp"
#include "cslbound/error.hpp"
#include "cslbound/least_squares.hpp"

namespace cslbound {

namespace {

double sq(double x) { return x * x; }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

double quantile(const std::vector<double>& sorted, double p) {
  // Linear interpolation between order statistics (type 7).
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::size_t argmax_in(const NoiseSpectrum& s, double lo, double hi) {
  std::size_t best = s.psd.size();
  for (std::size_t i = 0; i < s.psd.size(); ++i) {
    if (s.freqs[i] < lo || s.freqs[i] > hi) continue;
    if (best == s.psd.size() || s.psd[i] > s.psd[best]) best = i;
  }
  if (best == s.psd.size()) throw TooFewPointsError("no spectrum bins inside the requested range");
  return best;
}

std::pair<std::size_t, std::size_t> window_range(const NoiseSpectrum& s, double lo, double hi) {
  const auto b = std::lower_bound(s.freqs.begin(), s.freqs.end(), lo) - s.freqs.begin();
  const auto e = std::upper_bound(s.freqs.begin(), s.freqs.end(), hi) - s.freqs.begin();
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

std::pair<double, double> resolve_window(const FitOptions& opt, double f0) {
  const double lo = std::isnan(opt.f_lo) ? f0 - kDefaultHalfWindowHz : opt.f_lo;
  const double hi = std::isnan(opt.f_hi) ? f0 + kDefaultHalfWindowHz : opt.f_hi;
  if (!(hi > lo)) throw std::invalid_argument("analysis window is empty");
  return {lo, hi};
}

// Model derivatives with respect to (A, B, C, f0, f1).
void model_gradient(double f, const SpectralModelParams& p, double g[5]) {
  const double f2 = f * f, f02 = p.f0 * p.f0, f12 = p.f1 * p.f1;
  const double u = f2 - f02, w = f2 - f12, v = f * p.f0 / p.Qprime;
  const double D = u * u + v * v;
  const double N = p.B * f02 * f02 + p.C * w * w;
  g[0] = 1.0;
  g[1] = f02 * f02 / D;
  g[2] = w * w / D;
  const double dD = -4.0 * p.f0 * u + 2.0 * v * f / p.Qprime;
  g[3] = 4.0 * p.B * p.f0 * f02 / D - N * dD / (D * D);
  g[4] = -4.0 * p.C * p.f1 * w / D;
}

// Internal coordinates: amplitudes as scaled squares, frequencies as offsets
// in units of the bin spacing.
struct Coordinates {
  double sA, sB, sC, fref, sf, Qprime;

  SpectralModelParams params(const Eigen::VectorXd& x) const {
    return {sA * x[0] * x[0], sB * x[1] * x[1], sC * x[2] * x[2], fref + sf * x[3], fref + sf * x[4], Qprime};
  }
  Eigen::VectorXd coords(const SpectralModelParams& p) const {
    auto root = [](double v, double s) { return std::sqrt(std::max(v, 1e-6 * s) / s); };
    Eigen::VectorXd x(5);
    x << root(p.A, sA), root(p.B, sB), root(p.C, sC), (p.f0 - fref) / sf, (p.f1 - fref) / sf;
    return x;
  }
  // d(A, B, C, f0, f1) / dx, diagonal.
  std::array<double, 5> chain(const Eigen::VectorXd& x) const {
    return {2.0 * sA * x[0], 2.0 * sB * x[1], 2.0 * sC * x[2], sf, sf};
  }
};

}  // namespace

void validate(const NoiseSpectrum& s) {
  if (s.freqs.size() != s.psd.size()) throw std::invalid_argument("freqs and psd lengths differ");
  if (!(s.n_av >= 1.0)) throw std::invalid_argument("n_av must be >= 1");
  for (std::size_t i = 0; i < s.freqs.size(); ++i) {
    if (!(s.psd[i] >= 0.0) || !std::isfinite(s.psd[i])) throw std::invalid_argument("psd must be finite and >= 0");
    if (!std::isfinite(s.freqs[i])) throw std::invalid_argument("frequencies must be finite");
    if (i > 0 && !(s.freqs[i] > s.freqs[i - 1])) throw std::invalid_argument("frequencies must increase strictly");
  }
}

double model_psd(double f, const SpectralModelParams& p) {
  const double f2 = f * f;
  const double u = f2 - p.f0 * p.f0, w = f2 - p.f1 * p.f1, v = f * p.f0 / p.Qprime;
  return p.A + (p.B * sq(p.f0 * p.f0) + p.C * w * w) / (u * u + v * v);
}

std::vector<std::size_t> leakage_mask(const NoiseSpectrum& s, double peak_freq) {
  std::string tag = s.window;
  std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char c) { return std::tolower(c); });
  if (tag != "blackman") throw UnsupportedWindowError("leakage mask is defined for the Blackman window only, got '" + s.window + "'");
  if (!(s.sample_rate > 0.0) || s.n_samples == 0) throw std::invalid_argument("leakage mask needs sample_rate and n_samples");
  if (s.freqs.empty() || peak_freq < s.freqs.front() || peak_freq > s.freqs.back()) {
    throw std::invalid_argument("peak frequency outside the spectrum");
  }
  const double reach = (kBlackmanHalfLobeBins - 1e-9) * s.bin_width();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.freqs.size(); ++i) {
    if (std::abs(s.freqs[i] - peak_freq) < reach) out.push_back(i);
  }
  return out;
}

SpectralModelParams default_initial_guess(const NoiseSpectrum& s, double Qprime, const FitOptions& opt) {
  validate(s);
  const double search_lo = std::isnan(opt.f_lo) ? -INFINITY : opt.f_lo;
  const double search_hi = std::isnan(opt.f_hi) ? INFINITY : opt.f_hi;
  const std::size_t peak = argmax_in(s, search_lo, search_hi);
  const double f0 = s.freqs[peak];
  const auto [lo, hi] = resolve_window(opt, f0);
  const auto [b, e] = window_range(s, lo, hi);
  std::vector<double> y(s.psd.begin() + static_cast<std::ptrdiff_t>(b), s.psd.begin() + static_cast<std::ptrdiff_t>(e));
  SpectralModelParams p;
  p.Qprime = Qprime;
  p.f0 = f0;
  p.f1 = f0 * (1.0 + 1e-3);
  p.A = median(y);
  // Peak area: \int B f0^4 / D df = B pi f0 Q' / 2.
  double area = 0.0;
  for (std::size_t i = b; i + 1 < e; ++i) area += (s.psd[i] - p.A) * (s.freqs[i + 1] - s.freqs[i]);
  p.B = area > 0.0 ? area / (constants::pi * f0 * Qprime / 2.0) : (s.psd[peak] - p.A) / (Qprime * Qprime);
  p.B = std::max(p.B, 0.0);
  // A strictly positive start keeps the square-root coordinate off its
  // stationary point at zero.
  p.C = 0.05 * p.A;
  return p;
}

namespace {

bool is_blackman(const NoiseSpectrum& s) {
  std::string tag = s.window;
  std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char c) { return std::tolower(c); });
  return tag == "blackman";
}

// One recursive re-weighting fit on a fixed set of kept bins.
// The first pass is weighted by the data unless `model_weights` is set, in
// which case p0 is trusted as a previous solution.
void fit_core(const NoiseSpectrum& s, const std::vector<std::size_t>& kept, const SpectralModelParams& p0,
              const FitOptions& opt, bool model_weights, SpectralFitResult& out) {
  const int m = static_cast<int>(kept.size());
  out.dof = m - 5;
  out.chi2_per_dof_history.clear();

  std::vector<double> y;
  for (auto i : kept) y.push_back(s.psd[i]);
  const double floor_scale = std::max(median(y), 1e-300);
  const double df = (s.freqs[kept.back()] - s.freqs[kept.front()]) / std::max(1, m - 1);
  const double Qprime = p0.Qprime;
  Coordinates cs{std::max(p0.A, floor_scale), std::max(p0.B, floor_scale / sq(Qprime)),
                 std::max(p0.C, 0.05 * std::max(p0.A, floor_scale)), p0.f0,
                 s.sample_rate > 0.0 && s.n_samples > 0 ? s.bin_width() : df, Qprime};

  const double sqrt_nav = std::sqrt(s.n_av);
  std::vector<double> sigma(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    sigma[k] = (y[k] > 0.0 && !model_weights ? y[k] : model_psd(s.freqs[kept[k]], p0)) / sqrt_nav;
  }

  auto residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const auto p = cs.params(x);
    for (int k = 0; k < m; ++k) r[k] = (y[k] - model_psd(s.freqs[kept[k]], p)) / sigma[k];
  };
  auto jacobian = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& J) {
    const auto p = cs.params(x);
    const auto c = cs.chain(x);
    J.resize(m, 5);
    double g[5];
    for (int k = 0; k < m; ++k) {
      model_gradient(s.freqs[kept[k]], p, g);
      for (int j = 0; j < 5; ++j) J(k, j) = -g[j] * c[j] / sigma[k];
    }
  };

  Eigen::VectorXd x = cs.coords(p0);
  double previous = -1.0;
  bool converged = false;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const auto r = lsq::levenberg_marquardt(residuals, jacobian, x, m);
    x = r.x;
    out.iterations = it;
    out.chi2 = r.cost;
    const double per_dof = r.cost / out.dof;
    out.chi2_per_dof_history.push_back(per_dof);
    if (previous >= 0.0 && std::abs(per_dof - previous) <= opt.chi2_rel_tol * previous) {
      converged = true;
      break;
    }
    previous = per_dof;
    const auto p = cs.params(x);
    for (int k = 0; k < m; ++k) sigma[k] = model_psd(s.freqs[kept[k]], p) / sqrt_nav;
  }
  if (!converged) {
    throw ConvergenceError("spectral fit did not settle within " + std::to_string(opt.max_iterations) +
                           " re-weighting passes");
  }
  out.params = cs.params(x);

  // Covariance from the final linearisation in (A, B, C, f0, f1).
  Eigen::MatrixXd J(m, 5);
  double g[5];
  for (int k = 0; k < m; ++k) {
    model_gradient(s.freqs[kept[k]], out.params, g);
    for (int j = 0; j < 5; ++j) J(k, j) = g[j] / sigma[k];
  }
  // The model depends on (A, C, f1) only through A + C, C (f0^2 - f1^2) and
  // B f0^4 + C (f0^2 - f1^2)^2, up to terms of order 1/Q'^2 inside the
  // masked linewidth, so one direction is always unconstrained.
  out.covariance = lsq::normal_inverse(J, 1, &out.null_directions);
}

}  // namespace

SpectralFitResult fit_spectrum(const NoiseSpectrum& s, double Qprime, const FitOptions& opt,
                               std::optional<SpectralModelParams> init) {
  validate(s);
  if (!(Qprime > 0.0)) throw std::invalid_argument("Qprime must be positive");
  SpectralModelParams p0 = init ? *init : default_initial_guess(s, Qprime, opt);
  p0.Qprime = Qprime;

  SpectralFitResult out;
  const auto [lo, hi] = resolve_window(opt, p0.f0);
  std::tie(out.window_begin, out.window_end) = window_range(s, lo, hi);
  const bool masking = opt.mask_leakage && is_blackman(s) && s.sample_rate > 0.0 && s.n_samples > 0;
  auto mask_around = [&](double peak) {
    std::vector<std::size_t> mask;
    if (!masking || peak < s.freqs.front() || peak > s.freqs.back()) return mask;
    for (std::size_t i : leakage_mask(s, peak)) {
      if (i >= out.window_begin && i < out.window_end) mask.push_back(i);
    }
    return mask;
  };

  // The mask follows the fitted resonance; refit until it stops moving.
  out.masked_bins = mask_around(p0.f0);
  constexpr int kMaskPasses = 4;
  for (int pass = 0; pass < kMaskPasses; ++pass) {
    std::vector<std::size_t> kept;
    for (std::size_t i = out.window_begin; i < out.window_end; ++i) {
      if (!std::binary_search(out.masked_bins.begin(), out.masked_bins.end(), i)) kept.push_back(i);
    }
    const std::size_t need = opt.residual_check ? kMinResidualPoints : 6;
    if (kept.size() < need) {
      throw TooFewPointsError("only " + std::to_string(kept.size()) + " usable bins in the analysis window, need " +
                              std::to_string(need));
    }
    fit_core(s, kept, pass == 0 ? p0 : out.params, opt, pass > 0 || init.has_value(), out);
    auto moved = mask_around(out.params.f0);
    if (moved == out.masked_bins || pass + 1 == kMaskPasses) break;
    out.masked_bins = std::move(moved);
  }

  if (opt.residual_check) out.residual_test = residual_distribution_check(s, out);
  return out;
}

double lorentzian_amplitude(const SpectralModelParams& p) {
  const double e = p.f0 * p.f0 - p.f1 * p.f1;
  return p.B + p.C * e * e / sq(p.f0 * p.f0);
}

double lorentzian_amplitude_sigma(const SpectralFitResult& r) {
  const auto& p = r.params;
  const double f02 = p.f0 * p.f0, e = f02 - p.f1 * p.f1, f04 = f02 * f02;
  Eigen::Matrix<double, 5, 1> g;
  g << 0.0, 1.0, e * e / f04, 4.0 * p.C * e * p.f0 / f04 - 4.0 * p.C * e * e / (f04 * p.f0), -4.0 * p.C * e * p.f1 / f04;
  return std::sqrt(std::max(0.0, g.dot(r.covariance * g)));
}

double freedman_diaconis_width(std::vector<double> values) {
  if (values.size() < 2) throw TooFewPointsError("Freedman-Diaconis width needs at least two values");
  std::sort(values.begin(), values.end());
  const double iqr = quantile(values, 0.75) - quantile(values, 0.25);
  return 2.0 * iqr * std::pow(static_cast<double>(values.size()), -1.0 / 3.0);
}

ResidualCheck chi2_distribution_check(const std::vector<double>& x, double n_av) {
  if (x.size() < kMinResidualPoints) {
    throw TooFewPointsError("residual check needs at least " + std::to_string(kMinResidualPoints) + " points");
  }
  ResidualCheck out;
  out.points = x.size();
  out.bin_width = freedman_diaconis_width(x);
  const double n = static_cast<double>(x.size());
  out.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  for (double v : x) out.variance += sq(v - out.mean);
  out.variance /= n - 1.0;

  const boost::math::chi_squared_distribution<double> dist(2.0 * n_av);
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  const double h = out.bin_width > 0.0 ? out.bin_width : (*mx - *mn + 1.0);
  const auto nbins = static_cast<std::size_t>(std::max(1.0, std::ceil((*mx - *mn) / h)));
  std::vector<double> observed(nbins, 0.0);
  for (double v : x) observed[std::min(nbins - 1, static_cast<std::size_t>((v - *mn) / h))] += 1.0;
  // Outer bins extend to the support edges so the probabilities sum to one.
  auto cdf_at = [&](std::size_t edge) {
    if (edge == 0) return 0.0;
    if (edge == nbins) return 1.0;
    return boost::math::cdf(dist, std::max(0.0, *mn + h * static_cast<double>(edge)));
  };
  std::vector<std::pair<double, double>> merged;  // observed, expected
  double o = 0.0, e = 0.0;
  for (std::size_t k = 0; k < nbins; ++k) {
    o += observed[k];
    e += n * (cdf_at(k + 1) - cdf_at(k));
    if (e >= 5.0) {
      merged.emplace_back(o, e);
      o = e = 0.0;
    }
  }
  if (e > 0.0 || o > 0.0) {
    if (merged.empty()) {
      merged.emplace_back(o, e);
    } else {
      merged.back().first += o;
      merged.back().second += e;
    }
  }
  out.bins = static_cast<int>(merged.size());
  out.dof = out.bins - 1;
  for (const auto& [ob, ex] : merged) out.statistic += sq(ob - ex) / ex;
  out.p_value = out.dof > 0 ? boost::math::cdf(boost::math::complement(
                                  boost::math::chi_squared_distribution<double>(out.dof), out.statistic))
                            : 1.0;
  out.pass = out.p_value > kResidualPassP;
  return out;
}

ResidualCheck residual_distribution_check(const NoiseSpectrum& s, const SpectralFitResult& fit) {
  std::vector<double> x;
  for (std::size_t i = fit.window_begin; i < fit.window_end && i < s.psd.size(); ++i) {
    if (std::binary_search(fit.masked_bins.begin(), fit.masked_bins.end(), i)) continue;
    x.push_back(2.0 * s.n_av * s.psd[i] / model_psd(s.freqs[i], fit.params));
  }
  return chi2_distribution_check(x, s.n_av);
}

double antiresonance_coupling(double f0, double f1, double k, double Phi_x) {
  if (!(f0 > 0.0 && f1 > 0.0 && k > 0.0 && Phi_x > 0.0)) throw std::invalid_argument("inputs must be positive");
  const double phi = Phi_x * constants::flux_quantum;  // Wb / m
  return k * (1.0 - sq(f1 / f0)) / (phi * phi);
}

}  // namespace cslbound
