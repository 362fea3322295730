#include <doctest.h>

#include <cmath>
#include <vector>

#include "cslbound/error.hpp"
#include "cslbound/exclusion.hpp"
#include "cslbound/io.hpp"
#include "rel.hpp"

using namespace cslbound;

namespace {

io::Geometry paper() { return io::read_geometry(CSLBOUND_DATA_DIR "/geometry/paper.json"); }

MultilayerStack design_base() {
  MultilayerStack m;
  m.rho1 = 7170.0;
  m.rho2 = 2200.0;
  m.base1 = 100e-6;
  m.base2 = 100e-6;
  m.thickness = 320e-9;
  return m;
}

}  // namespace

TEST_CASE("log grid") {
  const auto g = log_grid(1e-9, 1e-4, 6);
  REQUIRE(g.size() == 6);
  CHECK(g.front() == 1e-9);
  CHECK(g.back() == 1e-4);
  CHECK(g[2] == rel(1e-7).epsilon(1e-12));
  CHECK(default_rc_grid().size() == kDefaultGridPoints);
  CHECK_THROWS_AS(log_grid(1e-4, 1e-9, 5), std::invalid_argument);
}

TEST_CASE("Adler region") {
  const auto r = AdlerRegion::standard();
  const auto b = r.band(1e-7);
  REQUIRE(b);
  CHECK(b->first == rel(1e-10).epsilon(1e-12));
  CHECK(b->second == rel(1e-6).epsilon(1e-12));
  const auto b2 = r.band(1e-6);
  REQUIRE(b2);
  CHECK(b2->first == rel(1e-8).epsilon(1e-12));
  CHECK(b2->second == rel(1e-4).epsilon(1e-12));
  // Geometric midpoint of the anchors.
  const auto mid = r.band(std::sqrt(1e-7 * 1e-6));
  REQUIRE(mid);
  CHECK(mid->first == rel(1e-9).epsilon(1e-10));
  CHECK_FALSE(r.band(1e-8));
  CHECK(r.contains(1e-7, 1e-8));
  CHECK_FALSE(r.contains(1e-7, 1e-11));
  const auto poly = r.polygon();
  CHECK(poly.size() == 5);  // closed
  CHECK(poly.front() == poly.back());

  ExclusionCurve c;
  c.rC = {1e-8, 1e-7, 1e-6};
  c.lambda_upper = {1.0, 2e-10, 1e-3};
  const auto hit = adler_overlap(c, r);
  REQUIRE(hit.size() == 1);
  CHECK(hit[0] == 1e-7);
  CHECK_THROWS_AS(AdlerRegion({{1e-7, 1e-8, 2}}), std::invalid_argument);
}

TEST_CASE("exclusion curve is linear in the force-noise limit") {
  const auto g = paper();
  const std::vector<double> grid{1e-7, 1e-6};
  const auto a = exclusion_curve(g.mass, 2.07e-36, grid);
  const auto b = exclusion_curve(g.mass, 4.14e-36, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(a.lambda_upper[i] > 0.0);
    CHECK(b.lambda_upper[i] == rel(2 * a.lambda_upper[i]).epsilon(1e-12));
  }
  CHECK(a.lambda_upper[0] < 4.4e-10);
  CHECK_THROWS_AS(exclusion_curve(g.mass, 0.0, grid), std::invalid_argument);
}

TEST_CASE("the composite is noisier than its parts") {
  const auto g = paper();
  const std::vector<double> grid{1e-8, 1e-7, 1e-6};
  const auto full = exclusion_curve(g.mass, 2.07e-36, grid);
  for (const auto& c : g.mass.components()) {
    const CompositeMass alone({c}, g.mass.motion_axis());
    const auto part = exclusion_curve(alone, 2.07e-36, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CAPTURE(grid[i]);
      CHECK(full.lambda_upper[i] <= part.lambda_upper[i]);
    }
  }
}

TEST_CASE("design scan") {
  std::vector<int> n;
  for (int k = 0; k <= 30; ++k) n.push_back(k);
  const auto scan = design_scan(design_base(), n, 320e-9, 2e-36);
  REQUIRE(scan.size() == n.size());
  for (std::size_t i = 1; i < scan.size(); ++i) CHECK(scan[i].lambda < scan[i - 1].lambda);
  for (int k = 1; 2 * k <= 30; ++k) CHECK(scan[2 * k].lambda < scan[k].lambda);
  const auto best = minimal_layers(scan, 4.4e-10);
  REQUIRE(best);
  CHECK(*best == 9);
  CHECK_FALSE(minimal_layers(scan, 1e-20));
  CHECK_THROWS_AS(design_scan(design_base(), n, 320e-9, 0.0), std::invalid_argument);
}

TEST_CASE("optimal layer thickness") {
  const double d = optimal_thickness(1e-7, 50e-9, 1000e-9);
  CHECK(d >= 310e-9);
  CHECK(d <= 330e-9);
  // Finite stack with the paper materials.
  MultilayerStack stack = design_base();
  stack.n_lay = 23;
  const double d_stack = optimal_thickness(1e-7, 50e-9, 1000e-9, stack);
  CHECK(d_stack >= 300e-9);
  CHECK(d_stack <= 330e-9);

  for (double c : {0.5, 0.8, 1.25, 2.0}) {
    CAPTURE(c);
    CHECK(optimal_thickness(c * 1e-7, 50e-9 * c, 1000e-9 * c) == rel(c * d).epsilon(0.15));
  }
  const double u = d / 1e-7;
  CHECK(periodic_thickness_merit(u) >= periodic_thickness_merit(0.8 * u));
  CHECK(periodic_thickness_merit(u) >= periodic_thickness_merit(1.2 * u));
  CHECK_THROWS_AS(optimal_thickness(1e-7, 50e-9, 200e-9), NoInteriorMaximumError);
}

TEST_CASE("periodic merit: small-u resummation joins the direct sum") {
  // Either side of the branch point.
  CHECK(periodic_thickness_merit(2.0 - 1e-9) == rel(periodic_thickness_merit(2.0 + 1e-9)).epsilon(1e-8));
  // Direct alternating sum, still convergent at u = 1.5.
  const double u = 1.5;
  double direct = 1.0;
  for (int k = 1; k < 200; ++k) direct += 2.0 * (k % 2 ? -1.0 : 1.0) * std::exp(-0.25 * k * k * u * u);
  CHECK(periodic_thickness_merit(u) == rel(direct / u).epsilon(1e-6));
}

TEST_CASE("exclusion curve is continuous in rC" * doctest::test_suite("slow")) {
  const auto g = paper();
  const auto grid = log_grid(1e-8, 1e-6, 41);  // 0.05 dex
  const auto c = exclusion_curve(g.mass, 2.07e-36, grid);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double r = c.lambda_upper[i] / c.lambda_upper[i - 1];
    CHECK(r < 10.0);
    CHECK(r > 0.1);
  }
}
