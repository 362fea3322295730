// cslbound: command-line front end.
//
// Exit codes: 0 ok, 1 usage or other error, 2 input parse error, 3 quadrature
// failure, 4 fit did not converge, 5 not enough data (too few points,
// singular system, grid resolution), 6 residual check failed under --strict.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cslbound/constants.hpp"
#include "cslbound/csl_noise.hpp"
#include "cslbound/error.hpp"
#include "cslbound/exclusion.hpp"
#include "cslbound/io.hpp"
#include "cslbound/parallel.hpp"
#include "cslbound/spectral_fit.hpp"
#include "cslbound/synth.hpp"
#include "cslbound/thermal_inference.hpp"

namespace fs = std::filesystem;
using namespace cslbound;
using io::json;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kParse = 2, kQuadrature = 3, kConvergence = 4, kData = 5, kStrict = 6 };

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return kParse;
  if (dynamic_cast<const QuadratureError*>(&e)) return kQuadrature;
  if (dynamic_cast<const ConvergenceError*>(&e)) return kConvergence;
  if (dynamic_cast<const TooFewPointsError*>(&e) || dynamic_cast<const SingularSystemError*>(&e) ||
      dynamic_cast<const GridResolutionError*>(&e) || dynamic_cast<const NoInteriorMaximumError*>(&e)) {
    return kData;
  }
  return kFailure;
}

// Quadrature errors already name the offending rC.
std::string describe(const std::exception& e) { return e.what(); }

fs::path manifest_for(const fs::path& out) {
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

io::RunManifest start_manifest(const std::string& command, const CLI::App& sub) {
  io::RunManifest m;
  m.command = command;
  m.config_hash = io::sha256_hex(sub.config_to_str(true, false));
  m.tool_version = io::tool_version();
  m.timestamp = io::utc_timestamp();
  return m;
}

std::vector<double> rc_grid(const std::vector<double>& explicit_rc, double lo, double hi, std::size_t n) {
  if (!explicit_rc.empty()) return explicit_rc;
  if (n == 1) return {lo};
  return log_grid(lo, hi, n);
}

unsigned workers_or_default(unsigned w) { return w ? w : default_worker_count(); }

// Shared paper-like defaults for synthetic data.
SpectralModelParams paper_like_truth() { return {4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5}; }

ResonatorParams paper_resonator() {
  ResonatorParams r;
  r.k = 0.43;
  r.f0 = 3532.7;
  r.m = r.k / std::pow(2.0 * constants::pi * r.f0, 2);
  r.Phi_x = 2.38e7;
  r.sigma_k = 0.01;
  return r;
}

json resonator_json(const ResonatorParams& r) {
  return {{"k", r.k}, {"f0", r.f0}, {"m", r.m}, {"Phi_x", r.Phi_x}, {"sigma_k", r.sigma_k}};
}

ResonatorParams resonator_from(const json& j) {
  try {
    ResonatorParams r;
    r.k = j.at("k").get<double>();
    r.f0 = j.at("f0").get<double>();
    r.m = j.contains("m") ? j.at("m").get<double>() : r.k / std::pow(2.0 * constants::pi * r.f0, 2);
    r.Phi_x = j.value("Phi_x", 0.0);
    r.sigma_k = j.value("sigma_k", 0.0);
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("resonator: ") + e.what());
  }
}

// csl-noise ------------------------------------------------------------------

struct CslNoiseOpts {
  std::string geometry;
  std::vector<double> rc;
  double rc_min = kDefaultGridLo, rc_max = kDefaultGridHi;
  std::size_t points = kDefaultGridPoints;
  double lambda = 1.0;
  double rel_tol = QuadConfig{}.rel_tol;
  std::string scheme = "pairwise";
  unsigned workers = 0;
  std::string out = "scan.csv";
};

int cmd_csl_noise(const CslNoiseOpts& o, const CLI::App& sub) {
  auto m = start_manifest("csl-noise", sub);
  const auto geom = io::read_geometry(o.geometry);
  m.add_input(o.geometry);
  if (!(o.lambda >= 0.0)) throw std::invalid_argument("--lambda must be >= 0");
  QuadConfig cfg;
  cfg.rel_tol = o.rel_tol;
  cfg.scheme = o.scheme == "direct" ? QuadScheme::direct : QuadScheme::pairwise;
  const auto grid = rc_grid(o.rc, o.rc_min, o.rc_max, o.points);
  auto scan = csl_psd_derivative_scan(geom.mass, grid, cfg, workers_or_default(o.workers));
  for (auto& p : scan) p.psd *= o.lambda;
  io::write_scan(scan, o.out);
  m.add_output(o.out);
  m.details = {{"geometry", geom.name}, {"lambda", o.lambda}, {"points", scan.size()}, {"scheme", o.scheme}};
  io::write_manifest(m, manifest_for(o.out));
  return kOk;
}

// fit-spectrum ---------------------------------------------------------------

struct FitSpectrumOpts {
  std::string spectrum;
  double qprime = std::numeric_limits<double>::quiet_NaN();
  double f_lo = std::numeric_limits<double>::quiet_NaN(), f_hi = std::numeric_limits<double>::quiet_NaN();
  bool no_mask = false, mask_report = false, strict = false, no_residual = false;
  std::string out = "fit.json";
};

int cmd_fit_spectrum(const FitSpectrumOpts& o, const CLI::App& sub) {
  auto m = start_manifest("fit-spectrum", sub);
  const auto s = io::read_spectrum(o.spectrum);
  m.add_input(o.spectrum);
  m.add_input(io::sidecar_path(o.spectrum));
  const double qp = std::isnan(o.qprime) ? s.Qprime : o.qprime;
  if (!(qp > 0.0)) throw ParseError("Qprime missing: set it in the metadata or pass --qprime");
  FitOptions fo;
  fo.f_lo = o.f_lo;
  fo.f_hi = o.f_hi;
  fo.mask_leakage = !o.no_mask;
  fo.residual_check = !o.no_residual;
  const auto r = fit_spectrum(s, qp, fo);
  io::write_text_atomic(o.out, io::fit_to_json(r, s).dump(2) + "\n");
  m.add_output(o.out);

  std::printf("B = %s +/- %s Phi0^2/Hz, chi2/dof = %.4f, iterations = %d\n", io::format_number(r.params.B).c_str(),
              io::format_number(r.sigma(1)).c_str(), r.chi2 / r.dof, r.iterations);
  if (o.mask_report) {
    std::printf("masked %zu bins:", r.masked_bins.size());
    for (auto i : r.masked_bins) std::printf(" %zu (%.6f Hz)", i, s.freqs[i]);
    std::printf("\n");
  }
  bool residual_ok = true;
  if (r.residual_test) {
    residual_ok = r.residual_test->pass;
    std::printf("residual check: %s (p = %.4g)\n", residual_ok ? "pass" : "FAIL", r.residual_test->p_value);
  }
  m.details = {{"residual_pass", residual_ok}, {"strict", o.strict}};
  io::write_manifest(m, manifest_for(o.out));
  return o.strict && !residual_ok ? kStrict : kOk;
}

// fit-thermal ----------------------------------------------------------------

struct FitThermalOpts {
  std::string data;
  std::string model = "both";
  double t_min = 0.1;
  double n = 4.0;
  double x_rel = kDefaultXRelError;
  // Resonator, for the non-thermal floor; k <= 0 skips it.
  double k = 0.0, f0 = 0.0, sigma_k = 0.0;
  std::string out = "thermal_fit.json";
};

int cmd_fit_thermal(const FitThermalOpts& o, const CLI::App& sub) {
  auto m = start_manifest("fit-thermal", sub);
  const auto data = io::read_thermal(o.data);
  m.add_input(o.data);
  json out = json::object();
  if (o.model == "linear" || o.model == "both") {
    const auto restricted = restrict_temperature(data, o.t_min);
    const auto lin = fit_linear(restricted, o.x_rel);
    out["linear"] = io::linear_fit_to_json(lin);
    out["linear"]["T_min"] = o.t_min;
    out["linear"]["points"] = restricted.size();
    std::printf("linear (T >= %g K): B0 = %s +/- %s, B1 = %s +/- %s, chi2/dof = %.4g/%d\n", o.t_min,
                io::format_number(lin.B0).c_str(), io::format_number(std::sqrt(lin.covariance(0, 0))).c_str(),
                io::format_number(lin.B1).c_str(), io::format_number(std::sqrt(lin.covariance(1, 1))).c_str(), lin.chi2,
                lin.dof);
    if (o.k > 0.0) {
      ResonatorParams r;
      r.k = o.k;
      r.f0 = o.f0;
      r.m = r.k / std::pow(2.0 * constants::pi * r.f0, 2);
      r.sigma_k = o.sigma_k;
      const auto e = nonthermal_psd(lin, r);
      out["S_F0"] = {{"value", e.value}, {"sigma", e.sigma}};
      std::printf("S_F0 = %s +/- %s N^2/Hz\n", io::format_number(e.value).c_str(), io::format_number(e.sigma).c_str());
    }
  }
  if (o.model == "saturation" || o.model == "both") {
    const auto sat = fit_saturation(data, o.n, o.x_rel);
    out["saturation"] = io::saturation_fit_to_json(sat);
    std::printf("saturation: x_co = %s K, chi2/dof = %.4g/%d\n", io::format_number(sat.x_co).c_str(), sat.chi2,
                sat.dof);
    if (!sat.warning.empty()) std::printf("warning: %s\n", sat.warning.c_str());
  }
  io::write_text_atomic(o.out, out.dump(2) + "\n");
  m.add_output(o.out);
  io::write_manifest(m, manifest_for(o.out));
  return kOk;
}

// feldman-cousins ------------------------------------------------------------

struct FcOpts {
  double measured = 0.0, sigma = 1.0, cl = 0.95, precision = kFeldmanCousinsStep;
  std::string out;
};

int cmd_feldman_cousins(const FcOpts& o, const CLI::App& sub) {
  const double up = feldman_cousins_upper(o.measured, o.sigma, o.cl, o.precision);
  std::printf("%s\n", io::format_number(up).c_str());
  if (!o.out.empty()) {
    auto m = start_manifest("feldman-cousins", sub);
    json j = {{"measured", o.measured}, {"sigma", o.sigma}, {"cl", o.cl}, {"upper", up}};
    io::write_text_atomic(o.out, j.dump(2) + "\n");
    m.add_output(o.out);
    io::write_manifest(m, manifest_for(o.out));
  }
  return kOk;
}

// exclusion ------------------------------------------------------------------

struct ExclusionOpts {
  std::string geometry;
  double s_upper = 0.0, cl = 0.95;
  std::vector<double> rc;
  double rc_min = kDefaultGridLo, rc_max = kDefaultGridHi;
  std::size_t points = kDefaultGridPoints;
  unsigned workers = 0;
  std::string out = "curve.csv";
};

json exclusion_details(const ExclusionCurve& c, const std::string& geometry_hash) {
  const auto overlap = adler_overlap(c, AdlerRegion::standard());
  return {{"geometry", c.geometry_tag}, {"geometry_sha256", geometry_hash}, {"cl", c.cl},
          {"adler_overlap_rC", overlap}};
}

int cmd_exclusion(const ExclusionOpts& o, const CLI::App& sub) {
  auto m = start_manifest("exclusion", sub);
  const auto geom = io::read_geometry(o.geometry);
  m.add_input(o.geometry);
  const auto grid = rc_grid(o.rc, o.rc_min, o.rc_max, o.points);
  const auto c = exclusion_curve(geom.mass, o.s_upper, grid, o.cl, geom.name, QuadConfig::default_3d(),
                                 workers_or_default(o.workers));
  io::write_curve(c, o.out);
  m.add_output(o.out);
  m.details = exclusion_details(c, m.inputs.front().sha256);
  m.details["S_upper"] = o.s_upper;
  io::write_manifest(m, manifest_for(o.out));
  return kOk;
}

// design-scan ----------------------------------------------------------------

struct DesignOpts {
  double rho1 = 19300.0, rho2 = 2200.0, l1 = 100e-6, l2 = 100e-6, d = 320e-9;
  int n_min = 0, n_max = 30;
  double s_target = 2e-36, rc = kDesignRc, target = 4.4e-10;
  bool optimise = false;
  double d_lo = 50e-9, d_hi = 2e-6;
  std::string out = "design.csv";
};

int cmd_design_scan(const DesignOpts& o, const CLI::App& sub) {
  auto m = start_manifest("design-scan", sub);
  MultilayerStack base;
  base.rho1 = o.rho1;
  base.rho2 = o.rho2;
  base.base1 = o.l1;
  base.base2 = o.l2;
  base.thickness = o.d;
  validate(base);
  std::vector<int> ns;
  for (int n = o.n_min; n <= o.n_max; ++n) ns.push_back(n);
  const auto scan = design_scan(base, ns, o.d, o.s_target, o.rc);
  std::vector<std::vector<double>> rows;
  for (const auto& p : scan) rows.push_back({static_cast<double>(p.n_lay), p.lambda});
  io::write_text_atomic(o.out, io::format_table({"n_lay", "lambda_testable_per_s"}, rows));
  m.add_output(o.out);
  const auto best = minimal_layers(scan, o.target);
  m.details = {{"target_lambda", o.target}, {"minimal_n_lay", best ? json(*best) : json(nullptr)}};
  if (best) std::printf("smallest n_lay below %s: %d\n", io::format_number(o.target).c_str(), *best);
  else std::printf("no scanned n_lay reaches %s\n", io::format_number(o.target).c_str());
  if (o.optimise) {
    const double d = optimal_thickness(o.rc, o.d_lo, o.d_hi);
    m.details["optimal_thickness_m"] = d;
    std::printf("optimal layer thickness at rC = %s: %s m\n", io::format_number(o.rc).c_str(),
                io::format_number(d).c_str());
  }
  io::write_manifest(m, manifest_for(o.out));
  return kOk;
}

// synth ----------------------------------------------------------------------

struct SynthOpts {
  std::string kind = "spectrum";
  double A, B, C, f0, f1, qprime;
  double n_av = 60.0, fs = 1e5;
  std::size_t n_samples = std::size_t{1} << 22;
  std::uint64_t seed = 0;
  std::string mode = "psd-scatter";
  double f_lo = std::numeric_limits<double>::quiet_NaN(), f_hi = std::numeric_limits<double>::quiet_NaN();
  // thermal and dataset
  std::vector<double> temperatures{0.03, 0.05, 0.065, 0.08, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.58, 0.7, 0.85, 1.0};
  double Q = 2.83e6;
  double B0 = 0.0, Ba = 3.29e-12, Bb = 0.0, x_co = 0.0, n = 4.0, noise = 0.05;
  double B1 = 3.29e-12, s_inj = 0.0;
  std::string geometry;
  unsigned workers = 0;
  std::string out;

  SynthOpts() {
    const auto t = paper_like_truth();
    A = t.A, B = t.B, C = t.C, f0 = t.f0, f1 = t.f1, qprime = t.Qprime;
  }
};

SynthMode parse_mode(const std::string& s) { return s == "time-domain" ? SynthMode::time_domain : SynthMode::psd_scatter; }

int synth_dataset_dir(const SynthOpts& o, io::RunManifest& m) {
  if (o.geometry.empty()) throw std::invalid_argument("synth dataset needs --geometry");
  const fs::path dir = o.out.empty() ? fs::path("dataset") : fs::path(o.out);
  const auto geom_text = io::read_text(o.geometry);
  io::parse_geometry(geom_text);
  m.add_input(o.geometry);

  SynthDatasetConfig c;
  c.base = {o.A, 0.0, o.C, o.f0, o.f1, o.qprime};
  c.resonator = paper_resonator();
  c.temperatures = o.temperatures;
  c.Q.assign(o.temperatures.size(), o.Q);
  c.B1 = o.B1;
  c.S_inj = o.s_inj;
  c.x_co = o.x_co;
  c.n = o.n;
  c.n_av = o.n_av;
  c.sample_rate = o.fs;
  c.n_samples = o.n_samples;
  c.mode = parse_mode(o.mode);
  c.seed = o.seed;
  const auto d = synth_dataset(c);

  fs::create_directories(dir / "spectra");
  json spectra = json::array();
  for (std::size_t i = 0; i < d.spectra.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "spectra/T%03zu.csv", i);
    io::write_spectrum(d.spectra[i], dir / name);
    m.add_output(dir / name);
    m.add_output(io::sidecar_path(dir / name));
    spectra.push_back({{"file", name}, {"true_B", d.true_B[i]}});
  }
  io::write_text_atomic(dir / "geometry.json", geom_text);
  m.add_output(dir / "geometry.json");
  json ds = {{"resonator", resonator_json(c.resonator)},
             {"geometry", "geometry.json"},
             {"spectra", spectra},
             {"truth", {{"A", o.A}, {"C", o.C}, {"f1", o.f1}, {"B1", o.B1}, {"S_inj", o.s_inj}, {"x_co", o.x_co},
                        {"n", o.n}, {"seed", o.seed}}}};
  io::write_text_atomic(dir / "dataset.json", ds.dump(2) + "\n");
  m.add_output(dir / "dataset.json");
  io::write_manifest(m, dir / "synth.manifest.json");
  return kOk;
}

int cmd_synth(const SynthOpts& o, const CLI::App& sub) {
  auto m = start_manifest("synth " + o.kind, sub);
  if (o.kind == "dataset") return synth_dataset_dir(o, m);
  if (o.kind == "thermal") {
    SynthThermalConfig c;
    c.B0 = o.B0;
    c.Ba = o.Ba;
    c.Bb = o.Bb;
    c.x_co = o.x_co;
    c.n = o.n;
    c.Q = o.Q;
    for (double T : o.temperatures) c.x.push_back(T / o.Q);
    c.noise_rel = o.noise;
    c.seed = o.seed;
    const fs::path out = o.out.empty() ? "thermal.csv" : o.out;
    io::write_thermal(synth_thermal(c), out);
    m.add_output(out);
    io::write_manifest(m, manifest_for(out));
    return kOk;
  }
  SynthConfig c;
  c.truth = {o.A, o.B, o.C, o.f0, o.f1, o.qprime};
  c.n_av = o.n_av;
  c.sample_rate = o.fs;
  c.n_samples = o.n_samples;
  c.seed = o.seed;
  c.mode = parse_mode(o.mode);
  c.f_lo = o.f_lo;
  c.f_hi = o.f_hi;
  c.workers = o.workers;
  const fs::path out = o.out.empty() ? "spectrum.csv" : o.out;
  io::write_spectrum(synth_spectrum(c), out);
  m.add_output(out);
  m.add_output(io::sidecar_path(out));
  io::write_manifest(m, manifest_for(out));
  return kOk;
}

// pipeline -------------------------------------------------------------------

struct PipelineOpts {
  std::string dir;
  std::string out;
  double t_restrict = 0.1;
  double cl = 0.95;
  double n = 4.0;
  bool raw_B = false;
  std::vector<double> rc;
  double rc_min = kDefaultGridLo, rc_max = kDefaultGridHi;
  std::size_t points = kDefaultGridPoints;
  unsigned workers = 0;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::exception& e)
      : std::runtime_error(stage + ": " + describe(e)), stage_(std::move(stage)), code_(exit_code(e)) {}
  const std::string& stage() const { return stage_; }
  int code() const { return code_; }

 private:
  std::string stage_;
  int code_;
};

template <class F>
auto stage(const std::string& name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e);
  }
}

int cmd_pipeline(const PipelineOpts& o, const CLI::App& sub) {
  const fs::path in = o.dir;
  const fs::path out = o.out.empty() ? in / "results" : fs::path(o.out);
  auto m = start_manifest("pipeline", sub);
  const unsigned workers = workers_or_default(o.workers);
  try {
    const json ds = stage("load", [&] {
      m.add_input(in / "dataset.json");
      try {
        return json::parse(io::read_text(in / "dataset.json"));
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("dataset.json: ") + e.what());
      }
    });
    const auto res = stage("load", [&] { return resonator_from(ds.at("resonator")); });
    const auto geom = stage("load", [&] {
      const fs::path g = in / ds.at("geometry").get<std::string>();
      m.add_input(g);
      return io::read_geometry(g);
    });
    fs::create_directories(out);

    LinearFitResult lin;
    if (ds.contains("thermal_fit")) {
      // Entry at the thermal stage with externally fitted B0, B1.
      lin = stage("thermal", [&] {
        const auto& t = ds.at("thermal_fit");
        LinearFitResult r;
        r.B0 = t.at("B0").get<double>();
        r.B1 = t.at("B1").get<double>();
        r.covariance(0, 0) = std::pow(t.at("sigma_B0").get<double>(), 2);
        r.covariance(1, 1) = std::pow(t.at("sigma_B1").get<double>(), 2);
        r.covariance(0, 1) = r.covariance(1, 0) = t.value("cov_B0_B1", 0.0);
        return r;
      });
    } else {
      const auto& entries = ds.at("spectra");
      std::vector<fs::path> files;
      for (const auto& e : entries) files.push_back(in / e.at("file").get<std::string>());
      std::vector<NoiseSpectrum> spectra(files.size());
      std::vector<SpectralFitResult> fits(files.size());
      stage("spectral-fit", [&] {
        for (const auto& f : files) {
          m.add_input(f);
          m.add_input(io::sidecar_path(f));
        }
        parallel_for(files.size(), workers, [&](std::size_t i) {
          try {
            spectra[i] = io::read_spectrum(files[i]);
            if (!(spectra[i].Qprime > 0.0)) throw ParseError("Qprime missing in metadata");
            fits[i] = fit_spectrum(spectra[i], spectra[i].Qprime);
          } catch (const ParseError& e) {
            throw ParseError(files[i].string() + ": " + e.what());
          } catch (const ConvergenceError& e) {
            throw ConvergenceError(files[i].string() + ": " + e.what());
          }
        });
        fs::create_directories(out / "fits");
        for (std::size_t i = 0; i < files.size(); ++i) {
          const auto p = out / "fits" / (files[i].stem().string() + ".fit.json");
          io::write_text_atomic(p, io::fit_to_json(fits[i], spectra[i]).dump(2) + "\n");
          m.add_output(p);
        }
        return 0;
      });

      ThermalDataset data = stage("thermal", [&] {
        ThermalDataset d;
        for (std::size_t i = 0; i < fits.size(); ++i) {
          if (!(spectra[i].temperature_K > 0.0) || !(spectra[i].Q > 0.0)) {
            throw ParseError(files[i].string() + ": temperature_K and Q are required in the metadata");
          }
          const double B = o.raw_B ? fits[i].params.B : lorentzian_amplitude(fits[i].params);
          const double sB = o.raw_B ? fits[i].sigma(1) : lorentzian_amplitude_sigma(fits[i]);
          d.push_back({spectra[i].temperature_K, spectra[i].Q, B, sB});
        }
        io::write_thermal(d, out / "thermal.csv");
        m.add_output(out / "thermal.csv");
        return d;
      });

      lin = stage("thermal", [&] {
        json tf = json::object();
        if (data.size() >= 5) {
          // The crossover is reported for inspection only; the limit uses the
          // restricted linear fit.
          try {
            tf["saturation"] = io::saturation_fit_to_json(fit_saturation(data, o.n));
          } catch (const Error& e) {
            tf["saturation"] = {{"error", e.what()}};
          }
        }
        const auto restricted = restrict_temperature(data, o.t_restrict);
        const auto r = fit_linear(restricted);
        tf["linear"] = io::linear_fit_to_json(r);
        tf["linear"]["T_min"] = o.t_restrict;
        tf["linear"]["points"] = restricted.size();
        io::write_text_atomic(out / "thermal_fit.json", tf.dump(2) + "\n");
        m.add_output(out / "thermal_fit.json");
        return r;
      });
    }

    const auto [floor, upper] = stage("limit", [&] {
      const auto e = nonthermal_psd(lin, res);
      const double up = feldman_cousins_upper(e.value, e.sigma, o.cl);
      json j = {{"S_F0", e.value}, {"sigma_S_F0", e.sigma}, {"cl", o.cl}, {"S_upper", up},
                {"B0", lin.B0},    {"B1", lin.B1}};
      io::write_text_atomic(out / "limit.json", j.dump(2) + "\n");
      m.add_output(out / "limit.json");
      return std::pair{e, up};
    });
    std::printf("S_F0 = %s +/- %s N^2/Hz, upper limit (%g CL) = %s N^2/Hz\n", io::format_number(floor.value).c_str(),
                io::format_number(floor.sigma).c_str(), o.cl, io::format_number(upper).c_str());

    stage("exclusion", [&] {
      const auto grid = rc_grid(o.rc, o.rc_min, o.rc_max, o.points);
      const auto c = exclusion_curve(geom.mass, upper, grid, o.cl, geom.name, QuadConfig::default_3d(), workers);
      io::write_curve(c, out / "curve.csv");
      m.add_output(out / "curve.csv");
      m.details = exclusion_details(c, m.inputs[1].sha256);
      m.details["S_upper"] = upper;
      m.details["S_F0"] = floor.value;
      m.details["sigma_S_F0"] = floor.sigma;
      return 0;
    });
  } catch (const StageError& e) {
    m.status = "failed";
    m.failed_stage = e.stage();
    m.error = e.what();
    fs::create_directories(out);
    io::write_manifest(m, out / "manifest.json");
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code();
  }
  io::write_manifest(m, out / "manifest.json");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSL force-noise inference: spectra to exclusion curves"};
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  app.set_version_flag("--version", io::tool_version());
  app.require_subcommand(1);
  std::function<int()> run;

  CslNoiseOpts cn;
  auto* s1 = app.add_subcommand("csl-noise", "CSL force PSD of a geometry over an rC grid");
  s1->add_option("-g,--geometry", cn.geometry, "Geometry JSON")->required();
  s1->add_option("--rc", cn.rc, "Explicit rC values (m); overrides the grid");
  s1->add_option("--rc-min", cn.rc_min, "Grid start (m)")->check(CLI::PositiveNumber);
  s1->add_option("--rc-max", cn.rc_max, "Grid end (m)")->check(CLI::PositiveNumber);
  s1->add_option("--points", cn.points, "Grid points (log spaced)")->check(CLI::PositiveNumber);
  s1->add_option("--lambda", cn.lambda, "Collapse rate (1/s)");
  s1->add_option("--rel-tol", cn.rel_tol, "Relative quadrature tolerance")->check(CLI::PositiveNumber);
  s1->add_option("--scheme", cn.scheme, "pairwise | direct")->check(CLI::IsMember({"pairwise", "direct"}));
  s1->add_option("-j,--workers", cn.workers, "Worker threads (0: default)");
  s1->add_option("-o,--out", cn.out, "Output scan CSV");
  s1->callback([&] { run = [&] { return cmd_csl_noise(cn, *s1); }; });

  FitSpectrumOpts fsp;
  auto* s2 = app.add_subcommand("fit-spectrum", "Fit one averaged flux-noise spectrum");
  s2->add_option("spectrum", fsp.spectrum, "Spectrum CSV (metadata in the .json next to it)")->required();
  s2->add_option("--qprime", fsp.qprime, "Apparent quality factor (overrides metadata)");
  s2->add_option("--f-lo", fsp.f_lo, "Window start (Hz)");
  s2->add_option("--f-hi", fsp.f_hi, "Window end (Hz)");
  s2->add_flag("--no-mask", fsp.no_mask, "Do not mask leakage bins");
  s2->add_flag("--mask-report", fsp.mask_report, "List masked bins");
  s2->add_flag("--no-residual-check", fsp.no_residual, "Skip the residual distribution check");
  s2->add_flag("--strict", fsp.strict, "Exit 6 when the residual check fails");
  s2->add_option("-o,--out", fsp.out, "Output fit JSON");
  s2->callback([&] { run = [&] { return cmd_fit_spectrum(fsp, *s2); }; });

  FitThermalOpts ft;
  auto* s3 = app.add_subcommand("fit-thermal", "Fit B against T/Q");
  s3->add_option("data", ft.data, "Thermal CSV")->required();
  s3->add_option("--model", ft.model, "linear | saturation | both")->check(CLI::IsMember({"linear", "saturation", "both"}));
  s3->add_option("--t-min", ft.t_min, "Lowest temperature in the linear fit (K)");
  s3->add_option("--n", ft.n, "Saturation exponent");
  s3->add_option("--x-rel-error", ft.x_rel, "Relative error on T/Q when the file has none");
  s3->add_option("--k", ft.k, "Stiffness (N/m); enables the non-thermal floor");
  s3->add_option("--f0", ft.f0, "Resonance frequency (Hz)");
  s3->add_option("--sigma-k", ft.sigma_k, "Stiffness error (N/m)");
  s3->add_option("-o,--out", ft.out, "Output JSON");
  s3->callback([&] { run = [&] { return cmd_fit_thermal(ft, *s3); }; });

  FcOpts fc;
  auto* s4 = app.add_subcommand("feldman-cousins", "Upper limit for a Gaussian measurement of a non-negative mean");
  s4->add_option("--measured", fc.measured, "Measured value")->required();
  s4->add_option("--sigma", fc.sigma, "Standard error")->required()->check(CLI::PositiveNumber);
  s4->add_option("--cl", fc.cl, "Confidence level")->check(CLI::Range(0.5, 0.9999));
  s4->add_option("--precision", fc.precision, "Belt precision in units of sigma");
  s4->add_option("-o,--out", fc.out, "Optional JSON record");
  s4->callback([&] { run = [&] { return cmd_feldman_cousins(fc, *s4); }; });

  ExclusionOpts ex;
  auto* s5 = app.add_subcommand("exclusion", "lambda upper limit over rC");
  s5->add_option("-g,--geometry", ex.geometry, "Geometry JSON")->required();
  s5->add_option("--s-upper", ex.s_upper, "Force-noise upper limit (N^2/Hz)")->required()->check(CLI::PositiveNumber);
  s5->add_option("--cl", ex.cl, "Confidence level of S_upper");
  s5->add_option("--rc", ex.rc, "Explicit rC values (m)");
  s5->add_option("--rc-min", ex.rc_min, "Grid start (m)")->check(CLI::PositiveNumber);
  s5->add_option("--rc-max", ex.rc_max, "Grid end (m)")->check(CLI::PositiveNumber);
  s5->add_option("--points", ex.points, "Grid points")->check(CLI::PositiveNumber);
  s5->add_option("-j,--workers", ex.workers, "Worker threads (0: default)");
  s5->add_option("-o,--out", ex.out, "Output curve CSV");
  s5->callback([&] { run = [&] { return cmd_exclusion(ex, *s5); }; });

  DesignOpts de;
  auto* s6 = app.add_subcommand("design-scan", "Testable lambda against the number of layers");
  s6->add_option("--rho1", de.rho1, "Dense layer density (kg/m^3)");
  s6->add_option("--rho2", de.rho2, "Light layer density (kg/m^3)");
  s6->add_option("--l1", de.l1, "Base length 1 (m)");
  s6->add_option("--l2", de.l2, "Base length 2 (m)");
  s6->add_option("--d", de.d, "Layer thickness (m)");
  s6->add_option("--n-min", de.n_min, "Smallest n_lay");
  s6->add_option("--n-max", de.n_max, "Largest n_lay");
  s6->add_option("--s-target", de.s_target, "Achievable force noise (N^2/Hz)");
  s6->add_option("--rc", de.rc, "rC (m)");
  s6->add_option("--target-lambda", de.target, "lambda to reach (1/s)");
  s6->add_flag("--optimal-thickness", de.optimise, "Also report the optimal layer thickness");
  s6->add_option("--d-lo", de.d_lo, "Thickness search start (m)");
  s6->add_option("--d-hi", de.d_hi, "Thickness search end (m)");
  s6->add_option("-o,--out", de.out, "Output CSV");
  s6->callback([&] { run = [&] { return cmd_design_scan(de, *s6); }; });

  SynthOpts sy;
  auto* s7 = app.add_subcommand("synth", "Synthetic spectra, thermal data or a full dataset directory");
  s7->add_option("kind", sy.kind, "spectrum | thermal | dataset")->check(CLI::IsMember({"spectrum", "thermal", "dataset"}));
  s7->add_option("--A", sy.A, "White flux noise (Phi0^2/Hz)");
  s7->add_option("--B", sy.B, "Lorentzian amplitude (Phi0^2/Hz)");
  s7->add_option("--C", sy.C, "Back-action amplitude (Phi0^2/Hz)");
  s7->add_option("--f0", sy.f0, "Resonance (Hz)");
  s7->add_option("--f1", sy.f1, "Antiresonance (Hz)");
  s7->add_option("--qprime", sy.qprime, "Apparent quality factor");
  s7->add_option("--n-av", sy.n_av, "Averaged periodograms");
  s7->add_option("--fs", sy.fs, "Sample rate (Hz)");
  s7->add_option("--n-samples", sy.n_samples, "Samples per periodogram");
  s7->add_option("--seed", sy.seed, "Seed");
  s7->add_option("--mode", sy.mode, "psd-scatter | time-domain")->check(CLI::IsMember({"psd-scatter", "time-domain"}));
  s7->add_option("--f-lo", sy.f_lo, "Band start (Hz)");
  s7->add_option("--f-hi", sy.f_hi, "Band end (Hz)");
  s7->add_option("--temperatures", sy.temperatures, "Temperatures (K)")->delimiter(',');
  s7->add_option("--Q", sy.Q, "Intrinsic quality factor");
  s7->add_option("--B0", sy.B0, "Thermal: offset");
  s7->add_option("--Ba", sy.Ba, "Thermal: saturating slope");
  s7->add_option("--Bb", sy.Bb, "Thermal: linear slope");
  s7->add_option("--x-co", sy.x_co, "Crossover T/Q (K); 0 disables");
  s7->add_option("--n", sy.n, "Saturation exponent");
  s7->add_option("--noise", sy.noise, "Thermal: relative scatter");
  s7->add_option("--B1", sy.B1, "Dataset: thermal slope");
  s7->add_option("--s-inj", sy.s_inj, "Dataset: injected force noise (N^2/Hz)");
  s7->add_option("-g,--geometry", sy.geometry, "Dataset: geometry JSON to bundle");
  s7->add_option("-j,--workers", sy.workers, "Worker threads (0: default)");
  s7->add_option("-o,--out", sy.out, "Output file (directory for dataset)");
  s7->callback([&] { run = [&] { return cmd_synth(sy, *s7); }; });

  PipelineOpts pi;
  auto* s8 = app.add_subcommand("pipeline", "Spectra to exclusion curve for a dataset directory");
  s8->add_option("dir", pi.dir, "Dataset directory (dataset.json, spectra, geometry)")->required()->check(CLI::ExistingDirectory);
  s8->add_option("-o,--out", pi.out, "Output directory (default <dir>/results)");
  s8->add_option("--t-restrict", pi.t_restrict, "Lowest temperature in the linear fit (K)");
  s8->add_option("--cl", pi.cl, "Confidence level");
  s8->add_option("--n", pi.n, "Saturation exponent");
  s8->add_flag("--raw-B", pi.raw_B, "Use fitted B instead of the Lorentzian amplitude");
  s8->add_option("--rc", pi.rc, "Explicit rC values (m)");
  s8->add_option("--rc-min", pi.rc_min, "Grid start (m)")->check(CLI::PositiveNumber);
  s8->add_option("--rc-max", pi.rc_max, "Grid end (m)")->check(CLI::PositiveNumber);
  s8->add_option("--points", pi.points, "Grid points")->check(CLI::PositiveNumber);
  s8->add_option("-j,--workers", pi.workers, "Worker threads (0: default)");
  s8->callback([&] { run = [&] { return cmd_pipeline(pi, *s8); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFailure;
  }
  try {
    return run();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", describe(e).c_str());
    return exit_code(e);
  }
}
