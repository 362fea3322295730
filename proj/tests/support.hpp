#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace testsupport {

/// P(K > t) for the limiting Kolmogorov distribution.
inline double kolmogorov_sf(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 0.3) {
    // The alternating series converges slowly here; use the dual form.
    const double pi2 = M_PI * M_PI;
    double cdf = 0.0;
    for (int k = 1; k < 50; k += 2) cdf += std::exp(-k * k * pi2 / (8.0 * t * t));
    return 1.0 - std::sqrt(2.0 * M_PI) / t * cdf;
  }
  double s = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// One-sample KS test against N(0, 1): {D, asymptotic p}.
inline std::pair<double, double> ks_normal(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = normal_cdf(x[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return {d, kolmogorov_sf(std::sqrt(n) * d)};
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace testsupport
