#pragma once

// Upper limits on lambda from a force-noise limit, and the multilayer design
// study.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cslbound/csl_noise.hpp"
#include "cslbound/mass_model.hpp"

namespace cslbound {

struct ExclusionCurve {
  std::vector<double> rC;            // m
  std::vector<double> lambda_upper;  // 1/s
  double cl = 0.95;
  std::string geometry_tag;
};

/// Central lambda with a symmetric band of `dex` decades, at one rC.
struct AdlerAnchor {
  double rC = 0.0;
  double lambda = 0.0;
  double dex = 0.0;
};

/// Indicative region of lambda values suggested by latent-image formation.
/// Only the two textual anchors are encoded; between them the band edges are
/// interpolated linearly in log-log, outside it the region is empty.
class AdlerRegion {
 public:
  explicit AdlerRegion(std::vector<AdlerAnchor> anchors);
  /// 1e-17 s^-1 times 10^(9 +/- 2) at 1e-7 m and 10^(11 +/- 2) at 1e-6 m.
  static AdlerRegion standard();

  const std::vector<AdlerAnchor>& anchors() const { return anchors_; }
  /// [lower, upper] lambda at rC; nullopt outside the anchor span.
  std::optional<std::pair<double, double>> band(double rC) const;
  bool contains(double rC, double lambda) const;
  /// Closed polygon (rC, lambda): lower edge left to right, upper edge back.
  std::vector<std::pair<double, double>> polygon() const;

 private:
  std::vector<AdlerAnchor> anchors_;
};

/// Grid points where the curve excludes part of the region, i.e. where
/// lambda_upper lies below the upper band edge.
std::vector<double> adler_overlap(const ExclusionCurve& curve, const AdlerRegion& region);

inline constexpr std::size_t kDefaultGridPoints = 60;
inline constexpr double kDefaultGridLo = 1e-9;
inline constexpr double kDefaultGridHi = 1e-4;

/// Logarithmic grid including both ends.
std::vector<double> log_grid(double lo, double hi, std::size_t n);
inline std::vector<double> default_rc_grid() { return log_grid(kDefaultGridLo, kDefaultGridHi, kDefaultGridPoints); }

/// lambda_upper(rC) = S_upper / S(lambda = 1, rC).
ExclusionCurve exclusion_curve(const CompositeMass& mass, double S_upper, std::span<const double> rC_grid,
                               double cl = 0.95, std::string geometry_tag = {},
                               const QuadConfig& cfg = QuadConfig::default_3d(), unsigned workers = 0);

struct DesignPoint {
  int n_lay = 0;
  double lambda = 0.0;  // testable lambda, 1/s
};

inline constexpr double kDesignRc = 1e-7;

/// Testable lambda = S_target / S_multi(lambda = 1, rC) for `base` with each
/// n_lay and layer thickness d.
std::vector<DesignPoint> design_scan(const MultilayerStack& base, std::span<const int> n_lay, double d,
                                     double S_target, double rC = kDesignRc);

/// Smallest scanned n_lay whose testable lambda is below `target`.
std::optional<int> minimal_layers(const std::vector<DesignPoint>& scan, double target);

/// S_multi per unit stack thickness for an unbounded periodic stack of unit
/// density contrast, in units of 1/rC, as a function of u = d / rC:
/// (1/u) sum_k (-1)^k exp(-k^2 u^2 / 4).
double periodic_thickness_merit(double u);

/// Layer thickness maximising CSL noise per unit stack thickness, by
/// golden-section search on [d_lo, d_hi] to `resolution`. Without `stack` the
/// periodic limit is used; with it, S_multi(stack with thickness d) divided by
/// the total thickness. Throws NoInteriorMaximumError when the optimum sits on
/// a bracket end.
double optimal_thickness(double rC, double d_lo, double d_hi, const std::optional<MultilayerStack>& stack = std::nullopt,
                         double resolution = 1e-9);

}  // namespace cslbound
