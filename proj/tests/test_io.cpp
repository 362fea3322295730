#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cslbound/error.hpp"
#include "cslbound/io.hpp"
#include "cslbound/synth.hpp"
#include "rel.hpp"

using namespace cslbound;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cslbound_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("sha256 known answers") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("number formatting") {
  CHECK(io::format_number(1.0) == "1.00000000e+00");
  CHECK(io::format_number(-2.07e-36) == "-2.07000000e-36");
  CHECK(std::stod(io::format_number(1.0 / 3.0)) == rel(1.0 / 3.0).epsilon(1e-8));
}

TEST_CASE("paper geometry parses") {
  const auto g = io::read_geometry(CSLBOUND_DATA_DIR "/geometry/paper.json");
  CHECK(g.name == "paper");
  CHECK(g.mass.components().size() == 3);
  CHECK(g.mass.motion_axis() == Vec3::UnitZ());
  const auto& stack = std::get<MultilayerStack>(g.mass.components()[1]);
  CHECK(stack.n_lay == 23);
  CHECK(stack.layer_count() == 47);

  const auto back = io::parse_geometry(io::geometry_to_json(g).dump());
  CHECK(back.mass.total_mass() == rel(g.mass.total_mass()).epsilon(1e-14));
  const Vec3 q(1e5, 2e5, 3e6);
  CHECK(std::abs(back.mass.transform(q) - g.mass.transform(q)) <= 1e-12 * std::abs(g.mass.transform(q)));
}

TEST_CASE("malformed geometry names the field") {
  CHECK_THROWS_AS(io::parse_geometry("{"), ParseError);
  CHECK_THROWS_AS(io::parse_geometry(R"({"components": []})"), ParseError);
  try {
    io::parse_geometry(R"({"components": [{"type": "sphere", "density": 1000, "center": [0, 0, 0]}]})");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("radius") != std::string::npos);
  }
  CHECK_THROWS_AS(io::parse_geometry(R"({"components": [{"type": "torus"}]})"), ParseError);
  CHECK_THROWS_AS(io::parse_geometry(R"({"components": [{"type": "sphere", "density": -1, "radius": 1, "center": [0, 0, 0]}]})"),
                  ParseError);
}

TEST_CASE("tables") {
  const auto t = io::parse_table("# comment\na,b\n1,2\n3e-3,-4\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][0] == 3e-3);
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS(t.column("c"), ParseError);
  CHECK_THROWS_AS(io::parse_table("a,b\n1\n"), ParseError);
  CHECK_THROWS_AS(io::parse_table("a,b\n1,x\n"), ParseError);
}

TEST_CASE("spectrum round trip") {
  SynthConfig c;
  c.truth = {4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5};
  auto s = synth_spectrum(c);
  s.temperature_K = 0.58;
  const auto path = scratch("spec.csv");
  io::write_spectrum(s, path);
  CHECK(fs::exists(io::sidecar_path(path)));
  const auto r = io::read_spectrum(path);
  REQUIRE(r.freqs.size() == s.freqs.size());
  for (std::size_t i = 0; i < s.freqs.size(); i += 97) {
    CHECK(r.freqs[i] == rel(s.freqs[i]).epsilon(1e-8));
    CHECK(r.psd[i] == rel(s.psd[i]).epsilon(1e-8));
  }
  CHECK(r.n_av == s.n_av);
  CHECK(r.n_samples == s.n_samples);
  CHECK(r.sample_rate == s.sample_rate);
  CHECK(r.window == s.window);
  CHECK(r.temperature_K == 0.58);
  CHECK(r.Qprime == s.Qprime);
  CHECK(std::isnan(r.Q));

  fs::remove(io::sidecar_path(path));
  CHECK_THROWS_AS(io::read_spectrum(path), ParseError);
}

TEST_CASE("thermal round trip keeps x errors") {
  ThermalDataset d{{0.1, 2.83e6, 1.2e-19, 1e-20}, {0.2, 2.83e6, 2.3e-19, 1.5e-20}, {0.3, 2.83e6, 3.4e-19, 2e-20}};
  const auto path = scratch("thermal.csv");
  io::write_thermal(d, path);
  auto r = io::read_thermal(path);
  REQUIRE(r.size() == 3);
  CHECK(std::isnan(r[0].sigma_x));
  CHECK(r[2].B == rel(3.4e-19).epsilon(1e-8));
  for (auto& p : d) p.sigma_x = 0.0;
  io::write_thermal(d, path);
  r = io::read_thermal(path);
  CHECK(r[1].sigma_x == 0.0);
}

TEST_CASE("fit record round trip") {
  SynthConfig c;
  c.truth = {4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5};
  const auto s = synth_spectrum(c);
  const auto f = fit_spectrum(s, c.truth.Qprime);
  const auto j = io::fit_to_json(f, s);
  const auto back = io::fit_from_json(j);
  CHECK(back.params.B == rel(f.params.B).epsilon(1e-8));
  CHECK(back.params.f1 == rel(f.params.f1).epsilon(1e-8));
  CHECK(back.covariance(1, 1) == rel(f.covariance(1, 1)).epsilon(1e-8));
  CHECK(j.at("masked_bins").size() == 6);
}

TEST_CASE("atomic write replaces the target") {
  const auto path = scratch("atomic.txt");
  io::write_text_atomic(path, "one");
  io::write_text_atomic(path, "two");
  CHECK(io::read_text(path) == "two");
  CHECK(io::sha256_file(path) == io::sha256_hex("two"));
}

TEST_CASE("manifest timestamp honours SOURCE_DATE_EPOCH") {
  setenv("SOURCE_DATE_EPOCH", "0", 1);
  CHECK(io::utc_timestamp() == "1970-01-01T00:00:00Z");
  unsetenv("SOURCE_DATE_EPOCH");
  io::RunManifest m;
  m.command = "test";
  const auto j = io::manifest_to_json(m);
  CHECK(j.at("status") == "ok");
  CHECK(j.at("command") == "test");
}
