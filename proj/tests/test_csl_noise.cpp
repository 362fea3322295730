#include <doctest.h>

#include "rel.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "cslbound/csl_noise.hpp"
#include "cslbound/error.hpp"

using namespace cslbound;

namespace {

MultilayerStack stack(int n_lay, double l1 = 113e-6, double l2 = 82e-6) {
  MultilayerStack m;
  m.rho1 = 7170.0;
  m.rho2 = 2200.0;
  m.n_lay = n_lay;
  m.thickness = 370e-9;
  m.base1 = l1;
  m.base2 = l2;
  return m;
}

// I summed over layer pairs: each pair contributes a difference of Gaussians
// in the separation of the layer centres.
double i_pair_sum(const MultilayerStack& m, double rC) {
  const int n = m.layer_count();
  const double d = m.thickness;
  const double c = 2.0 * std::sqrt(std::numbers::pi) / rC;
  auto g = [&](double D) { return std::exp(-D * D / (4 * rC * rC)); };
  double sum = 0.0;
  for (int j = 0; j < n; ++j)
    for (int l = 0; l < n; ++l) {
      const double rho_j = j % 2 == 0 ? m.rho1 : m.rho2;
      const double rho_l = l % 2 == 0 ? m.rho1 : m.rho2;
      const double D = (j - l) * d;
      sum += rho_j * rho_l * c * (g(D) - 0.5 * g(D + d) - 0.5 * g(D - d));
    }
  return sum;
}

}  // namespace

TEST_CASE("J is non-positive and vanishes for short lengths") {
  for (double L : {1e-9, 1e-7, 1e-6, 1e-4}) CHECK(multilayer_j(L, 1e-7) <= 0.0);
  const double rC = 1e-7;
  const double L = 1e-10;
  // Leading term: -L^2 / (4 rC^2).
  CHECK(multilayer_j(L, rC) == rel(-L * L / (4 * rC * rC)).epsilon(1e-3));
}

TEST_CASE("multilayer I matches the layer pair sum") {
  for (int n : {0, 1, 2, 5, 23})
    for (double rC : {3e-8, 1e-7, 1e-6}) {
      CAPTURE(n);
      CAPTURE(rC);
      const auto m = stack(n);
      CHECK(multilayer_i(m, rC) == rel(i_pair_sum(m, rC)).epsilon(1e-6));
    }
}

TEST_CASE("single layer closed form agrees with quadrature") {
  // 100 x 100 x 0.37 um cuboid of the dense material.
  MultilayerStack m = stack(0, 100e-6, 100e-6);
  const Cuboid c{m.rho1, Vec3(m.base1, m.base2, m.thickness), Vec3::Zero()};
  const CompositeMass mass({c}, Vec3::UnitZ());
  const CslParams p{1.0, 1e-7};
  const double closed = csl_psd_multilayer(m, p);
  CHECK(closed > 0.0);
  CHECK(csl_psd_quadrature(mass, p, {1e-8}) == rel(closed).epsilon(1e-6));
}

TEST_CASE("experiment stack closed form agrees with quadrature") {
  const auto m = stack(23);
  const CompositeMass mass({m}, Vec3::UnitZ());
  for (double rC : {1e-8, 1e-7, 1e-5}) {
    CAPTURE(rC);
    const CslParams p{1.0, rC};
    CHECK(csl_psd_quadrature(mass, p) == rel(csl_psd_multilayer(m, p)).epsilon(1e-4));
  }
}

TEST_CASE("linear in lambda") {
  const auto m = stack(5);
  CHECK(csl_psd_multilayer(m, {0.0, 1e-7}) == 0.0);
  const double s1 = csl_psd_multilayer(m, {1.0, 1e-7});
  CHECK(csl_psd_multilayer(m, {2.0, 1e-7}) == rel(2 * s1).epsilon(1e-14));
  const CompositeMass mass({m}, Vec3::UnitZ());
  CHECK(csl_psd_quadrature(mass, {0.0, 1e-7}) == 0.0);
}

TEST_CASE("base lengths are interchangeable") {
  const CslParams p{1.0, 3e-7};
  CHECK(csl_psd_multilayer(stack(5, 113e-6, 82e-6), p) ==
        rel(csl_psd_multilayer(stack(5, 82e-6, 113e-6), p)).epsilon(1e-12));
}

TEST_CASE("layering beats the homogenised slab at rC = d / 3.4") {
  for (int n : {1, 5, 23}) {
    const auto m = stack(n);
    const double rC = m.thickness / 3.4;
    const double rho_bar = ((n + 1) * m.rho1 + n * m.rho2) / (2 * n + 1);
    MultilayerStack flat = m;
    flat.n_lay = 0;
    flat.thickness = m.total_thickness();
    flat.rho1 = rho_bar;
    flat.rho2 = 0.5 * rho_bar;  // unused without layers
    CAPTURE(n);
    CHECK(csl_psd_multilayer(m, {1.0, rC}) > csl_psd_multilayer(flat, {1.0, rC}));
  }
}

TEST_CASE("sphere approaches the point-mass limit for rC >> R") {
  const double R = 15.5e-6;
  const Sphere s{7430.0, R, Vec3::Zero()};
  const CompositeMass mass({s}, Vec3::UnitZ());
  const double rC = 100 * R;
  const CslParams p{1.0, rC};
  const auto k = physical_constants();
  const double M = mass.total_mass();
  // Point mass plus the leading finite-size correction -R^2 / (2 rC^2).
  const double point = kOneSidedFactor * k.hbar * k.hbar * M * M / (2 * k.m0 * k.m0 * rC * rC);
  const double quad = csl_psd_quadrature(mass, p);
  CHECK(quad == rel(point * (1 - R * R / (2 * rC * rC))).epsilon(1e-6));
  CHECK(quad == rel(csl_psd_quadrature(mass, p, {1e-6, 0.0, 100'000'000, QuadScheme::direct})).epsilon(1e-5));
}

TEST_CASE("pairwise and direct schemes agree on a small composite") {
  const Cuboid a{2330.0, Vec3(2e-7, 3e-7, 1.5e-7), Vec3::Zero()};
  const Sphere b{7430.0, 1e-7, Vec3(2e-7, 0.5e-7, -1e-7)};
  const CompositeMass mass({a, b}, Vec3::UnitZ());
  const CslParams p{1.0, 1e-7};
  const double pw = csl_psd_quadrature(mass, p);
  const double direct = csl_psd_quadrature(mass, p, {1e-6, 0.0, 100'000'000, QuadScheme::direct});
  CHECK(pw == rel(direct).epsilon(1e-4));
}

TEST_CASE("scan preserves grid order") {
  const auto m = stack(2);
  const CompositeMass mass({m}, Vec3::UnitZ());
  const std::vector<double> one{1e-7};
  const auto single = csl_psd_derivative_scan(mass, one);
  REQUIRE(single.size() == 1);
  CHECK(single[0].psd == rel(csl_psd_quadrature(mass, {1.0, 1e-7})).epsilon(1e-12));

  const std::vector<double> grid{1e-8, 3e-8, 1e-7, 3e-7, 1e-6};
  const auto scan = csl_psd_derivative_scan(mass, grid, QuadConfig::default_3d(), 2);
  REQUIRE(scan.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(scan[i].rC == grid[i]);
    CHECK(scan[i].psd > 0.0);
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(validate(CslParams{-1.0, 1e-7}), std::invalid_argument);
  CHECK_THROWS_AS(validate(CslParams{1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("exhausted budget raises QuadratureError tagged with rC") {
  const auto m = stack(23);
  const CompositeMass mass({m}, Vec3::UnitZ());
  QuadConfig cfg;
  cfg.max_evals = 10;
  cfg.scheme = QuadScheme::direct;
  try {
    csl_psd_quadrature(mass, {1.0, 2e-7}, cfg);
    FAIL("expected QuadratureError");
  } catch (const QuadratureError& e) {
    CHECK(e.rC() == 2e-7);
  }
}
