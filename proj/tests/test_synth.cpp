#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cslbound/synth.hpp"
#include "rel.hpp"
#include "support.hpp"

using namespace cslbound;

namespace {

const SpectralModelParams kTruth{4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5};

}  // namespace

TEST_CASE("Philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are deterministic and distinct") {
  PhiloxStream a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);

  SynthConfig cfg;
  cfg.truth = kTruth;
  cfg.seed = 9;
  const auto s1 = synth_spectrum(cfg);
  const auto s2 = synth_spectrum(cfg);
  CHECK(s1.psd == s2.psd);
  CHECK(s1.freqs == s2.freqs);
}

TEST_CASE("uniform, normal and gamma moments") {
  PhiloxStream r(1, 0);
  std::vector<double> u, z, g;
  for (int i = 0; i < 200000; ++i) {
    u.push_back(r.uniform());
    z.push_back(r.normal());
    g.push_back(r.gamma(2.5));
  }
  CHECK(*std::min_element(u.begin(), u.end()) > 0.0);
  CHECK(*std::max_element(u.begin(), u.end()) < 1.0);
  CHECK(testsupport::mean(u) == rel(0.5).epsilon(0.01));
  CHECK(std::abs(testsupport::mean(z)) < 0.01);
  CHECK(testsupport::stddev(z) == rel(1.0).epsilon(0.01));
  CHECK(testsupport::mean(g) == rel(2.5).epsilon(0.01));
  CHECK(testsupport::stddev(g) == rel(std::sqrt(2.5)).epsilon(0.01));
  CHECK(testsupport::ks_normal(std::vector<double>(z.begin(), z.begin() + 5000)).second > 0.01);
}

TEST_CASE("large n_av converges to the model") {
  SynthConfig cfg;
  cfg.truth = kTruth;
  cfg.n_av = 1e6;
  const auto s = synth_spectrum(cfg);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.freqs.size(); ++i) {
    worst = std::max(worst, std::abs(s.psd[i] / model_psd(s.freqs[i], kTruth) - 1.0));
  }
  CHECK(worst < 0.005);
}

TEST_CASE("scatter bins: mean, variance and independence") {
  SynthConfig cfg;
  cfg.truth = kTruth;
  cfg.seed = 3;
  const auto s = synth_spectrum(cfg);
  CHECK(s.freqs.size() > 2000);
  CHECK(s.freqs.front() >= kTruth.f0 - kDefaultSynthHalfBand);
  CHECK(s.freqs.back() <= kTruth.f0 + kDefaultSynthHalfBand);
  std::vector<double> r;
  for (std::size_t i = 0; i < s.freqs.size(); ++i) r.push_back(s.psd[i] / model_psd(s.freqs[i], kTruth));
  const double n = double(r.size());
  const double m = testsupport::mean(r);
  const double sd = testsupport::stddev(r);
  CHECK(std::abs(m - 1.0) < 4.0 / std::sqrt(cfg.n_av * n));
  CHECK(sd * sd == rel(1.0 / cfg.n_av).epsilon(4.0 * std::sqrt(2.0 / n)));
  double lag = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i) lag += (r[i] - m) * (r[i - 1] - m);
  lag /= (n - 1) * sd * sd;
  CHECK(std::abs(lag) < 4.0 / std::sqrt(n));
}

TEST_CASE("blackman window") {
  const auto w = blackman_window(8);
  CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(w[4] == rel(1.0).epsilon(1e-15));
  CHECK(w[1] == rel(w[7]).epsilon(1e-14));
}

TEST_CASE("thermal synthesis") {
  SynthThermalConfig c;
  c.B0 = 1e-21;
  c.Bb = 3.29e-12;
  c.x = {1e-8, 5e-8, 1e-7, 2e-7};
  c.noise_rel = 0.0;
  const auto d = synth_thermal(c);
  REQUIRE(d.size() == 4);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d[i].x() == rel(c.x[i]).epsilon(1e-14));
    CHECK(d[i].B == rel(c.B0 + c.Bb * c.x[i]).epsilon(1e-14));
    CHECK(d[i].sigma_B == rel(0.05 * d[i].B).epsilon(1e-12));
  }
  c.noise_rel = 0.05;
  c.seed = 8;
  const auto a = synth_thermal(c);
  const auto b = synth_thermal(c);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].B == b[i].B);
}

TEST_CASE("crossover is recovered from paper-like thermal data") {
  const double Q = 2.83e6;
  SynthThermalConfig c;
  c.B0 = 0.0;
  c.Ba = 3.29e-12;
  c.x_co = 5.3e-8;
  for (double T : {0.03, 0.05, 0.065, 0.08, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.58, 0.7, 0.85, 1.0}) c.x.push_back(T / Q);
  int within = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    c.seed = seed;
    const auto f = fit_saturation(synth_thermal(c));
    within += std::abs(f.x_co - c.x_co) <= 3.0 * std::sqrt(f.covariance(3, 3));
  }
  CHECK(within >= 95);
}

TEST_CASE("synthetic dataset follows the injected amplitudes") {
  SynthDatasetConfig c;
  c.base = kTruth;
  c.resonator.k = 0.43;
  c.resonator.f0 = kTruth.f0;
  c.temperatures = {0.1, 0.5, 1.0};
  c.Q = {2.83e6, 2.83e6, 2.83e6};
  const auto d = synth_dataset(c);
  REQUIRE(d.spectra.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d.true_B[i] == rel(c.B1 * c.temperatures[i] / c.Q[i]).epsilon(1e-12));
    CHECK(d.spectra[i].temperature_K == c.temperatures[i]);
  }
}

TEST_CASE("time-domain synthesis: the mask covers every > 5 sigma bin" * doctest::test_suite("slow")) {
  SynthConfig c;
  c.truth = kTruth;
  c.mode = SynthMode::time_domain;
  c.seed = 1;
  const auto s = synth_spectrum(c);
  const auto mask = leakage_mask(s, kTruth.f0);
  CHECK(mask.size() == 6);
  double worst_unmasked = 0.0;
  for (std::size_t i = 0; i < s.freqs.size(); ++i) {
    const double m = model_psd(s.freqs[i], kTruth);
    const double z = (s.psd[i] - m) / (m / std::sqrt(c.n_av));
    const bool masked = std::binary_search(mask.begin(), mask.end(), i);
    if (!masked) worst_unmasked = std::max(worst_unmasked, std::abs(z));
  }
  CHECK(worst_unmasked < 5.0);
}
