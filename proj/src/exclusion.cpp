#include "cslbound/exclusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cslbound/constants.hpp"
#include "cslbound/error.hpp"

namespace cslbound {

namespace {
double sq(double x) { return x * x; }
}  // namespace

AdlerRegion::AdlerRegion(std::vector<AdlerAnchor> anchors) : anchors_(std::move(anchors)) {
  if (anchors_.size() < 2) throw std::invalid_argument("Adler region needs at least two anchors");
  for (const auto& a : anchors_) {
    if (!(a.rC > 0.0) || !(a.lambda > 0.0) || !(a.dex >= 0.0)) throw std::invalid_argument("Adler anchors must be positive");
  }
  std::sort(anchors_.begin(), anchors_.end(), [](const auto& a, const auto& b) { return a.rC < b.rC; });
}

AdlerRegion AdlerRegion::standard() {
  return AdlerRegion({{1e-7, 1e-17 * 1e9, 2.0}, {1e-6, 1e-17 * 1e11, 2.0}});
}

std::optional<std::pair<double, double>> AdlerRegion::band(double rC) const {
  if (rC < anchors_.front().rC || rC > anchors_.back().rC) return std::nullopt;
  auto hi = std::lower_bound(anchors_.begin(), anchors_.end(), rC, [](const auto& a, double r) { return a.rC < r; });
  if (hi == anchors_.begin()) ++hi;
  const auto lo = hi - 1;
  const double t = std::log(rC / lo->rC) / std::log(hi->rC / lo->rC);
  const double centre = std::log10(lo->lambda) + t * (std::log10(hi->lambda) - std::log10(lo->lambda));
  const double dex = lo->dex + t * (hi->dex - lo->dex);
  return std::pair{std::pow(10.0, centre - dex), std::pow(10.0, centre + dex)};
}

bool AdlerRegion::contains(double rC, double lambda) const {
  const auto b = band(rC);
  return b && lambda >= b->first && lambda <= b->second;
}

std::vector<std::pair<double, double>> AdlerRegion::polygon() const {
  std::vector<std::pair<double, double>> out;
  for (const auto& a : anchors_) out.emplace_back(a.rC, a.lambda * std::pow(10.0, -a.dex));
  for (auto it = anchors_.rbegin(); it != anchors_.rend(); ++it) out.emplace_back(it->rC, it->lambda * std::pow(10.0, it->dex));
  out.push_back(out.front());
  return out;
}

std::vector<double> adler_overlap(const ExclusionCurve& curve, const AdlerRegion& region) {
  std::vector<double> out;
  for (std::size_t i = 0; i < curve.rC.size(); ++i) {
    const auto b = region.band(curve.rC[i]);
    if (b && curve.lambda_upper[i] < b->second) out.push_back(curve.rC[i]);
  }
  return out;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("log grid needs 0 < lo < hi");
  if (n < 2) throw std::invalid_argument("log grid needs at least two points");
  std::vector<double> g(n);
  const double step = std::log(hi / lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo * std::exp(step * static_cast<double>(i));
  g.front() = lo;
  g.back() = hi;
  return g;
}

ExclusionCurve exclusion_curve(const CompositeMass& mass, double S_upper, std::span<const double> rC_grid, double cl,
                               std::string geometry_tag, const QuadConfig& cfg, unsigned workers) {
  if (!(S_upper > 0.0)) throw std::invalid_argument("S_upper must be positive");
  ExclusionCurve out;
  out.cl = cl;
  out.geometry_tag = std::move(geometry_tag);
  for (const auto& p : csl_psd_derivative_scan(mass, rC_grid, cfg, workers)) {
    if (!(p.psd > 0.0)) throw QuadratureError("CSL noise vanished at rC=" + std::to_string(p.rC / 1e-9) + " nm", p.psd, 0.0, p.rC);
    out.rC.push_back(p.rC);
    out.lambda_upper.push_back(S_upper / p.psd);
  }
  return out;
}

std::vector<DesignPoint> design_scan(const MultilayerStack& base, std::span<const int> n_lay, double d, double S_target,
                                     double rC) {
  if (!(S_target > 0.0)) throw std::invalid_argument("S_target must be positive");
  std::vector<DesignPoint> out;
  for (int n : n_lay) {
    MultilayerStack s = base;
    s.n_lay = n;
    s.thickness = d;
    out.push_back({n, S_target / csl_psd_multilayer(s, {1.0, rC})});
  }
  return out;
}

std::optional<int> minimal_layers(const std::vector<DesignPoint>& scan, double target) {
  std::optional<int> best;
  for (const auto& p : scan) {
    if (p.lambda < target && (!best || p.n_lay < *best)) best = p.n_lay;
  }
  return best;
}

double periodic_thickness_merit(double u) {
  if (!(u > 0.0)) throw std::invalid_argument("thickness ratio must be positive");
  double sum = 0.0;
  if (u >= 2.0) {
    // Direct: terms fall as exp(-k^2 u^2 / 4).
    sum = 1.0;
    for (int k = 1; k < 64; ++k) {
      const double t = std::exp(-0.25 * k * k * u * u);
      if (t < 1e-300) break;
      sum += 2.0 * (k % 2 ? -t : t);
    }
  } else {
    // Poisson-resummed theta series.
    const double c = 2.0 * std::sqrt(constants::pi) / u;
    for (int m = 0; m < 64; ++m) {
      const double t = std::exp(-sq(constants::pi * (2 * m + 1) / u));
      if (t < 1e-300) break;
      sum += 2.0 * c * t;
    }
  }
  return sum / u;
}

double optimal_thickness(double rC, double d_lo, double d_hi, const std::optional<MultilayerStack>& stack,
                         double resolution) {
  if (!(rC > 0.0)) throw std::invalid_argument("rC must be positive");
  if (!(d_lo > 0.0) || !(d_hi > d_lo)) throw std::invalid_argument("thickness bracket must satisfy 0 < lo < hi");
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
  auto merit = [&](double d) {
    if (!stack) return periodic_thickness_merit(d / rC);
    MultilayerStack s = *stack;
    s.thickness = d;
    return csl_psd_multilayer(s, {1.0, rC}) / s.total_thickness();
  };

  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = d_lo, b = d_hi;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = merit(x1), f2 = merit(x2);
  while (b - a > resolution) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = merit(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = merit(x1);
    }
  }
  const double d = 0.5 * (a + b);
  if (d - d_lo <= resolution || d_hi - d <= resolution) {
    throw NoInteriorMaximumError("thickness merit peaks at the bracket edge near " + std::to_string(d * 1e9) + " nm");
  }
  return d;
}

}  // namespace cslbound
