// One PASS/FAIL line per acceptance criterion. The exit status is 0 whenever
// every criterion could be evaluated, whatever its verdict.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "cslbound/csl_noise.hpp"
#include "cslbound/exclusion.hpp"
#include "cslbound/io.hpp"
#include "cslbound/spectral_fit.hpp"
#include "cslbound/synth.hpp"
#include "cslbound/thermal_inference.hpp"
#include "support.hpp"

using namespace cslbound;

namespace {

int failures = 0;

void report(int n, bool pass, const std::string& what) {
  std::printf("criterion %2d: %s  %s\n", n, pass ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  failures += !pass;
}

void note(const std::string& s) { std::printf("              %s\n", s.c_str()); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_dev(double a, double b) { return std::abs(a / b - 1.0); }

ResonatorParams paper_resonator() {
  ResonatorParams p;
  p.k = 0.43;
  p.f0 = 3532.7;
  p.Phi_x = 2.38e7;
  p.sigma_k = 0.01;
  return p;
}

LinearFitResult paper_linear_fit() {
  LinearFitResult f;
  f.B0 = -4.64e-21;
  f.B1 = 3.29e-12;
  f.covariance << 5.31e-21 * 5.31e-21, 0.0, 0.0, 0.03e-12 * 0.03e-12;
  return f;
}

void criterion1() {
  const auto e = nonthermal_psd(paper_linear_fit(), paper_resonator());
  report(1, rel_dev(e.value, -1.51e-36) <= 0.01,
         fmt("non-thermal floor S_F0 = %.4e N^2/Hz (target -1.51e-36, 1%%); propagated sigma %.3e", e.value, e.sigma));
}

void criterion2() {
  const double upper = feldman_cousins_upper(-1.51e-36, 1.77e-36, 0.95);
  const double dev = rel_dev(upper, 2.07e-36);

  const FeldmanCousinsBelt belt(0.95, 12.0);
  PhiloxStream rng(20240, 0);
  std::string cov;
  bool cov_ok = true;
  for (double mu : {0.0, 0.5, 1.0, 3.0}) {
    int hit = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const auto [lo, hi] = belt.interval(mu + rng.normal());
      hit += lo <= mu && mu <= hi;
    }
    const double c = double(hit) / n;
    cov_ok &= c >= 0.94;
    cov += fmt(" mu=%.1f:%.4f", mu, c);
  }
  report(2, dev <= 0.02 && cov_ok,
         fmt("FC upper(-1.51e-36, 1.77e-36, 95%%) = %.4e (target 2.07e-36, 2%%: off by %.1f%%); coverage%s", upper,
             100 * dev, cov.c_str()));
  const auto e = nonthermal_psd(paper_linear_fit(), paper_resonator());
  note(fmt("with the propagated sigma %.3e the same belt gives %.4e", e.sigma,
           feldman_cousins_upper(e.value, e.sigma, 0.95)));
}

void criterion3() {
  const double k = added_mass_stiffness(3532.7, 8174, 7.1e-10);
  report(3, k >= 0.42 && k <= 0.44, fmt("added-mass stiffness k = %.4f N/m (target [0.42, 0.44])", k));
}

void criterion4() {
  const double t = kapitza_crossover(0.5e-9, 4, 1e-5);
  report(4, rel_dev(t, 0.085) <= 0.05, fmt("Kapitza crossover T_co = %.2f mK (target 85 mK, 5%%)", 1e3 * t));
}

void criterion5() {
  double worst = 0.0;
  std::string where;
  for (int n : {0, 1, 2, 5, 23}) {
    MultilayerStack m;
    m.rho1 = 7170.0;
    m.rho2 = 2200.0;
    m.n_lay = n;
    m.thickness = 370e-9;
    m.base1 = 113e-6;
    m.base2 = 82e-6;
    const CompositeMass mass({m}, Vec3::UnitZ());
    for (double rC : {3e-8, 1e-7, 3e-7, 1e-6}) {
      const CslParams p{1.0, rC};
      const double d = rel_dev(csl_psd_multilayer(m, p), csl_psd_quadrature(mass, p));
      if (d > worst) {
        worst = d;
        where = fmt("N_lay=%d rC=%.0e", n, rC);
      }
    }
  }
  report(5, worst <= 1e-4, fmt("closed form vs quadrature: worst relative difference %.2e at %s (target 1e-4)", worst, where.c_str()));
}

void criterion6() {
  MultilayerStack base;
  base.rho1 = 7170.0;
  base.rho2 = 2200.0;
  base.base1 = base.base2 = 100e-6;
  std::vector<int> n(31);
  for (int k = 0; k <= 30; ++k) n[k] = k;
  const auto scan = design_scan(base, n, 320e-9, 2e-36);
  const auto best = minimal_layers(scan, 4.4e-10);
  const double d = optimal_thickness(1e-7, 50e-9, 1000e-9);
  const bool ok = best && *best == 9 && d >= 310e-9 && d <= 330e-9;
  report(6, ok,
         fmt("design scan: minimal N_lay = %d (target 9), lambda(9) = %.3e, lambda(8) = %.3e; optimal d = %.1f nm (target [310, 330])",
             best ? *best : -1, scan[9].lambda, scan[8].lambda, d * 1e9));
}

void criterion7() {
  const auto full = io::read_geometry(CSLBOUND_DATA_DIR "/geometry/paper.json");
  const auto old = io::read_geometry(CSLBOUND_DATA_DIR "/geometry/cantilever_sphere.json");
  const std::vector<double> grid{1e-7};
  const double lam = exclusion_curve(full.mass, 2.07e-36, grid).lambda_upper[0];
  const double lam_old = exclusion_curve(old.mass, 2.07e-36, grid).lambda_upper[0];
  const double gain = lam_old / lam;
  report(7, lam < 4.4e-10 && gain >= 30 && gain <= 300,
         fmt("exclusion at rC=1e-7 m: lambda_upper = %.3e 1/s (target < 4.4e-10); improvement vs cantilever+sphere %.1f (target [30, 300])",
             lam, gain));
}

void criterion8() {
  const SpectralModelParams truth{4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5};
  std::vector<double> pull_B, pull_amp;
  int max_iter = 0, chi2_ok = 0, errors = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    SynthConfig c;
    c.truth = truth;
    c.seed = static_cast<std::uint64_t>(s);
    try {
      const auto r = fit_spectrum(synth_spectrum(c), truth.Qprime);
      pull_B.push_back((r.params.B - truth.B) / r.sigma(1));
      pull_amp.push_back((lorentzian_amplitude(r.params) - lorentzian_amplitude(truth)) / lorentzian_amplitude_sigma(r));
      max_iter = std::max(max_iter, r.iterations);
      const double per_dof = r.chi2 / r.dof;
      chi2_ok += per_dof >= 0.8 && per_dof <= 1.2;
    } catch (const std::exception&) {
      ++errors;
    }
  }
  const double m = testsupport::mean(pull_B);
  const double p = testsupport::ks_normal(pull_B).second;
  const bool ok = errors == 0 && std::abs(m) < 0.1 && p > 0.01 && max_iter <= 20 && chi2_ok >= 0.95 * seeds;
  report(8, ok,
         fmt("round trip over %d spectra: pull(B) mean %.3f sd %.3f KS p %.2g; max passes %d; chi2/dof in [0.8, 1.2] for %d; failed fits %d",
             seeds, m, testsupport::stddev(pull_B), p, max_iter, chi2_ok, errors));
  note(fmt("pull of the identifiable amplitude B + C(f0^2-f1^2)^2/f0^4: mean %.3f sd %.3f KS p %.2g",
           testsupport::mean(pull_amp), testsupport::stddev(pull_amp), testsupport::ks_normal(pull_amp).second));
}

void criterion9() {
  NoiseSpectrum s;
  s.sample_rate = 1e5;
  s.n_samples = std::size_t{1} << 22;
  s.window = "blackman";
  const double df = s.bin_width();
  for (auto k = static_cast<std::size_t>(3515 / df); k * df <= 3550; ++k) {
    s.freqs.push_back(k * df);
    s.psd.push_back(1.0);
  }
  const auto mask = leakage_mask(s, 3532.7);
  report(9, mask.size() == 6, fmt("leakage mask at 100 kHz, 2^22 samples, Blackman: %zu bins (target 6) of %zu", mask.size(), s.freqs.size()));
}

void criterion10() {
  const char* path = std::getenv("CSLBOUND_PUBLISHED_THERMAL");
  if (!path || !*path) {
    std::printf("criterion 10: SKIP  published dataset not available (no network here); "
                "set CSLBOUND_PUBLISHED_THERMAL to its thermal table to run\n");
    return;
  }
  const auto data = restrict_temperature(io::read_thermal(path), 0.1);
  const auto f = fit_linear(data);
  const double s0 = std::sqrt(f.covariance(0, 0)), s1 = std::sqrt(f.covariance(1, 1));
  const double per_dof = f.chi2 / f.dof;
  const bool ok = std::abs(f.B0 + 4.64e-21) <= 5.31e-21 && std::abs(f.B1 - 3.29e-12) <= 0.03e-12 &&
                  rel_dev(per_dof, 9.144 / 8) <= 0.2;
  report(10, ok,
         fmt("published data (T >= 100 mK, %zu points): B0 = %.3e +- %.2e, B1 = %.4e +- %.2e, chi2/dof = %.3f/%d",
             data.size(), f.B0, s0, f.B1, s1, f.chi2, f.dof));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d criteria failed; %.0f s\n", failures, secs);
  return 0;
}
