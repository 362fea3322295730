#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cslbound/csl_noise.hpp"
#include "cslbound/error.hpp"
#include "cslbound/exclusion.hpp"
#include "cslbound/io.hpp"
#include "cslbound/spectral_fit.hpp"
#include "cslbound/synth.hpp"
#include "cslbound/thermal_inference.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace cslbound;

namespace {

void bind_errors(py::module_& m) {
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<QuadratureError>(m, "QuadratureError", base);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base);
  py::register_exception<SingularSystemError>(m, "SingularSystemError", base);
  py::register_exception<TooFewPointsError>(m, "TooFewPointsError", base);
  py::register_exception<UnsupportedWindowError>(m, "UnsupportedWindowError", base);
  py::register_exception<GridResolutionError>(m, "GridResolutionError", base);
  py::register_exception<NoInteriorMaximumError>(m, "NoInteriorMaximumError", base);
}

void bind_mass(py::module_& m) {
  py::class_<Cuboid>(m, "Cuboid")
      .def(py::init([](double density, const Vec3& lengths, const Vec3& center) { return Cuboid{density, lengths, center}; }),
           "density"_a, "lengths"_a, "center"_a = Vec3(Vec3::Zero()))
      .def_readwrite("density", &Cuboid::density)
      .def_readwrite("lengths", &Cuboid::lengths)
      .def_readwrite("center", &Cuboid::center);

  py::class_<Sphere>(m, "Sphere")
      .def(py::init([](double density, double radius, const Vec3& center) { return Sphere{density, radius, center}; }),
           "density"_a, "radius"_a, "center"_a = Vec3(Vec3::Zero()))
      .def_readwrite("density", &Sphere::density)
      .def_readwrite("radius", &Sphere::radius)
      .def_readwrite("center", &Sphere::center);

  py::class_<MultilayerStack>(m, "MultilayerStack")
      .def(py::init([](double rho1, double rho2, int n_lay, double thickness, double base1, double base2,
                       const Vec3& center, const Vec3& axis) {
             return MultilayerStack{rho1, rho2, n_lay, thickness, base1, base2, center, axis};
           }),
           "rho1"_a, "rho2"_a, "n_lay"_a, "thickness"_a, "base1"_a, "base2"_a, "center"_a = Vec3(Vec3::Zero()),
           "stacking_axis"_a = Vec3(Vec3::UnitZ()))
      .def_readwrite("rho1", &MultilayerStack::rho1)
      .def_readwrite("rho2", &MultilayerStack::rho2)
      .def_readwrite("n_lay", &MultilayerStack::n_lay)
      .def_readwrite("thickness", &MultilayerStack::thickness)
      .def_readwrite("base1", &MultilayerStack::base1)
      .def_readwrite("base2", &MultilayerStack::base2)
      .def_readwrite("center", &MultilayerStack::center)
      .def_readwrite("stacking_axis", &MultilayerStack::stacking_axis)
      .def("mass", &MultilayerStack::mass)
      .def("total_thickness", &MultilayerStack::total_thickness);

  py::class_<CompositeMass>(m, "CompositeMass")
      .def(py::init<std::vector<Component>, Vec3>(), "components"_a, "motion_axis"_a = Vec3(Vec3::UnitZ()))
      .def_property_readonly("components", &CompositeMass::components)
      .def_property_readonly("motion_axis", &CompositeMass::motion_axis)
      .def("total_mass", &CompositeMass::total_mass)
      .def("transform", &CompositeMass::transform, "q"_a);

  m.def("fourier_transform", &fourier_transform, "component"_a, "q"_a);
  m.def("mass", py::overload_cast<const Component&>(&mass), "component"_a);
}

void bind_csl(py::module_& m) {
  py::enum_<QuadScheme>(m, "QuadScheme").value("pairwise", QuadScheme::pairwise).value("direct", QuadScheme::direct);

  py::class_<QuadConfig>(m, "QuadConfig")
      .def(py::init([](double rel_tol, double abs_tol, std::size_t max_evals, QuadScheme scheme) {
             return QuadConfig{rel_tol, abs_tol, max_evals, scheme};
           }),
           "rel_tol"_a = 1e-5, "abs_tol"_a = 0.0, "max_evals"_a = 100'000'000, "scheme"_a = QuadScheme::pairwise)
      .def_readwrite("rel_tol", &QuadConfig::rel_tol)
      .def_readwrite("abs_tol", &QuadConfig::abs_tol)
      .def_readwrite("max_evals", &QuadConfig::max_evals)
      .def_readwrite("scheme", &QuadConfig::scheme);

  m.def(
      "csl_psd_quadrature",
      [](const CompositeMass& mass, double lam, double rC, const QuadConfig& cfg) {
        return csl_psd_quadrature(mass, {lam, rC}, cfg);
      },
      "mass"_a, "lam"_a, "rC"_a, "cfg"_a = QuadConfig::default_3d(), "One-sided CSL force PSD in N^2/Hz.");
  m.def(
      "csl_psd_multilayer",
      [](const MultilayerStack& s, double lam, double rC) { return csl_psd_multilayer(s, {lam, rC}); }, "stack"_a,
      "lam"_a, "rC"_a);
  m.def("multilayer_j", &multilayer_j, "length"_a, "rC"_a);
  m.def(
      "csl_psd_scan",
      [](const CompositeMass& mass, const std::vector<double>& grid, unsigned workers) {
        std::vector<double> out;
        for (const auto& p : csl_psd_derivative_scan(mass, grid, QuadConfig::default_3d(), workers)) out.push_back(p.psd);
        return out;
      },
      "mass"_a, "rC_grid"_a, "workers"_a = 0, "PSD at lambda = 1 for each rC, in grid order.");
}

void bind_spectral(py::module_& m) {
  py::class_<SpectralModelParams>(m, "SpectralModelParams")
      .def(py::init([](double A, double B, double C, double f0, double f1, double Qprime) {
             return SpectralModelParams{A, B, C, f0, f1, Qprime};
           }),
           "A"_a, "B"_a, "C"_a, "f0"_a, "f1"_a, "Qprime"_a)
      .def_readwrite("A", &SpectralModelParams::A)
      .def_readwrite("B", &SpectralModelParams::B)
      .def_readwrite("C", &SpectralModelParams::C)
      .def_readwrite("f0", &SpectralModelParams::f0)
      .def_readwrite("f1", &SpectralModelParams::f1)
      .def_readwrite("Qprime", &SpectralModelParams::Qprime);

  py::class_<NoiseSpectrum>(m, "NoiseSpectrum")
      .def(py::init<>())
      .def_readwrite("freqs", &NoiseSpectrum::freqs)
      .def_readwrite("psd", &NoiseSpectrum::psd)
      .def_readwrite("n_av", &NoiseSpectrum::n_av)
      .def_readwrite("window", &NoiseSpectrum::window)
      .def_readwrite("sample_rate", &NoiseSpectrum::sample_rate)
      .def_readwrite("n_samples", &NoiseSpectrum::n_samples)
      .def_readwrite("temperature_K", &NoiseSpectrum::temperature_K)
      .def_readwrite("Qprime", &NoiseSpectrum::Qprime)
      .def_readwrite("Q", &NoiseSpectrum::Q);

  py::class_<ResidualCheck>(m, "ResidualCheck")
      .def_readonly("passed", &ResidualCheck::pass)
      .def_readonly("p_value", &ResidualCheck::p_value)
      .def_readonly("statistic", &ResidualCheck::statistic)
      .def_readonly("dof", &ResidualCheck::dof);

  py::class_<SpectralFitResult>(m, "SpectralFitResult")
      .def_readonly("params", &SpectralFitResult::params)
      .def_readonly("covariance", &SpectralFitResult::covariance)
      .def_readonly("chi2", &SpectralFitResult::chi2)
      .def_readonly("dof", &SpectralFitResult::dof)
      .def_readonly("masked_bins", &SpectralFitResult::masked_bins)
      .def_readonly("iterations", &SpectralFitResult::iterations)
      .def_readonly("residual_test", &SpectralFitResult::residual_test)
      .def_readonly("null_directions", &SpectralFitResult::null_directions)
      .def("sigma", &SpectralFitResult::sigma, "k"_a);

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("f_lo", &FitOptions::f_lo)
      .def_readwrite("f_hi", &FitOptions::f_hi)
      .def_readwrite("mask_leakage", &FitOptions::mask_leakage)
      .def_readwrite("max_iterations", &FitOptions::max_iterations)
      .def_readwrite("chi2_rel_tol", &FitOptions::chi2_rel_tol)
      .def_readwrite("residual_check", &FitOptions::residual_check);

  m.def("model_psd", [](double f, const SpectralModelParams& p) { return model_psd(f, p); }, "f"_a, "params"_a);
  m.def(
      "model_psd",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> f, const SpectralModelParams& p) {
        py::array_t<double> out(f.request().shape);
        auto in = f.unchecked();
        double* o = out.mutable_data();
        const double* src = f.data();
        for (py::ssize_t i = 0; i < in.size(); ++i) o[i] = model_psd(src[i], p);
        return out;
      },
      "f"_a, "params"_a);
  m.def("leakage_mask", &leakage_mask, "spectrum"_a, "peak_freq"_a);
  m.def("fit_spectrum", &fit_spectrum, "spectrum"_a, "Qprime"_a, "options"_a = FitOptions{}, "init"_a = py::none());
  m.def("lorentzian_amplitude", &lorentzian_amplitude, "params"_a);
  m.def("lorentzian_amplitude_sigma", &lorentzian_amplitude_sigma, "fit"_a);
  m.def("antiresonance_coupling", &antiresonance_coupling, "f0"_a, "f1"_a, "k"_a, "Phi_x"_a);
}

void bind_thermal(py::module_& m) {
  py::class_<ThermalPoint>(m, "ThermalPoint")
      .def(py::init([](double T, double Q, double B, double sigma_B, double sigma_x) {
             return ThermalPoint{T, Q, B, sigma_B, sigma_x};
           }),
           "T"_a, "Q"_a, "B"_a, "sigma_B"_a, "sigma_x"_a = std::numeric_limits<double>::quiet_NaN())
      .def_readwrite("T", &ThermalPoint::T)
      .def_readwrite("Q", &ThermalPoint::Q)
      .def_readwrite("B", &ThermalPoint::B)
      .def_readwrite("sigma_B", &ThermalPoint::sigma_B)
      .def_readwrite("sigma_x", &ThermalPoint::sigma_x)
      .def("x", &ThermalPoint::x);

  py::class_<ResonatorParams>(m, "ResonatorParams")
      .def(py::init([](double k, double f0, double m_eff, double Phi_x, double sigma_k) {
             return ResonatorParams{k, f0, m_eff, Phi_x, sigma_k};
           }),
           "k"_a, "f0"_a, "m"_a = 0.0, "Phi_x"_a = 0.0, "sigma_k"_a = 0.0)
      .def_readwrite("k", &ResonatorParams::k)
      .def_readwrite("f0", &ResonatorParams::f0)
      .def_readwrite("m", &ResonatorParams::m)
      .def_readwrite("Phi_x", &ResonatorParams::Phi_x)
      .def_readwrite("sigma_k", &ResonatorParams::sigma_k);

  py::class_<LinearFitResult>(m, "LinearFitResult")
      .def(py::init<>())
      .def_readwrite("B0", &LinearFitResult::B0)
      .def_readwrite("B1", &LinearFitResult::B1)
      .def_readwrite("covariance", &LinearFitResult::covariance)
      .def_readwrite("chi2", &LinearFitResult::chi2)
      .def_readwrite("dof", &LinearFitResult::dof);

  py::class_<SaturationFitResult>(m, "SaturationFitResult")
      .def_readonly("B0", &SaturationFitResult::B0)
      .def_readonly("Ba", &SaturationFitResult::Ba)
      .def_readonly("Bb", &SaturationFitResult::Bb)
      .def_readonly("x_co", &SaturationFitResult::x_co)
      .def_readonly("n", &SaturationFitResult::n)
      .def_readonly("covariance", &SaturationFitResult::covariance)
      .def_readonly("chi2", &SaturationFitResult::chi2)
      .def_readonly("dof", &SaturationFitResult::dof)
      .def_readonly("crossover_outside_data", &SaturationFitResult::crossover_outside_data)
      .def_readonly("warning", &SaturationFitResult::warning);

  m.def("fit_linear", &fit_linear, "points"_a, "x_rel_error"_a = kDefaultXRelError);
  m.def("fit_saturation", &fit_saturation, "points"_a, "n"_a = 4.0, "x_rel_error"_a = kDefaultXRelError);
  m.def("restrict_temperature", &restrict_temperature, "points"_a, "T_min"_a);
  m.def(
      "nonthermal_psd",
      [](const LinearFitResult& f, const ResonatorParams& p) {
        const auto e = nonthermal_psd(f, p);
        return py::make_tuple(e.value, e.sigma);
      },
      "fit"_a, "resonator"_a, "(value, sigma) in N^2/Hz.");
  m.def("feldman_cousins_upper", &feldman_cousins_upper, "measured"_a, "sigma"_a, "cl"_a = 0.95,
        "precision"_a = kFeldmanCousinsStep);
  m.def("feldman_cousins_acceptance", &feldman_cousins_acceptance, "mu"_a, "cl"_a = 0.95);
  m.def("kapitza_crossover", &kapitza_crossover, "W"_a, "c_K"_a, "S_area"_a);
  m.def("saturated_temperature", &saturated_temperature, "T"_a, "T_co"_a, "n"_a = 4.0);
  m.def("added_mass_stiffness", &added_mass_stiffness, "f0"_a, "f0_prime"_a, "m_added"_a);
  m.def("thermal_force_psd", &thermal_force_psd, "resonator"_a, "T"_a, "Q"_a);
}

void bind_synth(py::module_& m) {
  py::enum_<SynthMode>(m, "SynthMode").value("psd_scatter", SynthMode::psd_scatter).value("time_domain", SynthMode::time_domain);

  m.def(
      "synth_spectrum",
      [](const SpectralModelParams& truth, double n_av, std::uint64_t seed, SynthMode mode, double f_lo, double f_hi) {
        SynthConfig c;
        c.truth = truth;
        c.n_av = n_av;
        c.seed = seed;
        c.mode = mode;
        c.f_lo = f_lo;
        c.f_hi = f_hi;
        return synth_spectrum(c);
      },
      "truth"_a, "n_av"_a = 60.0, "seed"_a = 0, "mode"_a = SynthMode::psd_scatter,
      "f_lo"_a = std::numeric_limits<double>::quiet_NaN(), "f_hi"_a = std::numeric_limits<double>::quiet_NaN(),
      "Synthetic spectrum at 100 kHz with 2^22 samples per periodogram.");
  m.def(
      "synth_thermal",
      [](const std::vector<double>& x, double B0, double Ba, double Bb, double x_co, double n, double noise_rel,
         std::uint64_t seed) {
        SynthThermalConfig c;
        c.x = x;
        c.B0 = B0;
        c.Ba = Ba;
        c.Bb = Bb;
        c.x_co = x_co;
        c.n = n;
        c.noise_rel = noise_rel;
        c.seed = seed;
        return synth_thermal(c);
      },
      "x"_a, "B0"_a = 0.0, "Ba"_a = 0.0, "Bb"_a = 0.0, "x_co"_a = 0.0, "n"_a = 4.0, "noise_rel"_a = 0.05, "seed"_a = 0);
  m.def("blackman_window", &blackman_window, "n"_a);
}

void bind_exclusion(py::module_& m) {
  py::class_<ExclusionCurve>(m, "ExclusionCurve")
      .def_readonly("rC", &ExclusionCurve::rC)
      .def_readonly("lambda_upper", &ExclusionCurve::lambda_upper)
      .def_readonly("cl", &ExclusionCurve::cl)
      .def_readonly("geometry_tag", &ExclusionCurve::geometry_tag);

  py::class_<AdlerRegion>(m, "AdlerRegion")
      .def_static("standard", &AdlerRegion::standard)
      .def("band", &AdlerRegion::band, "rC"_a)
      .def("contains", &AdlerRegion::contains, "rC"_a, "lam"_a)
      .def("polygon", &AdlerRegion::polygon);

  py::class_<DesignPoint>(m, "DesignPoint")
      .def_readonly("n_lay", &DesignPoint::n_lay)
      .def_readonly("lam", &DesignPoint::lambda);

  m.def(
      "exclusion_curve",
      [](const CompositeMass& mass, double S_upper, const std::vector<double>& grid, double cl, unsigned workers) {
        return exclusion_curve(mass, S_upper, grid, cl, {}, QuadConfig::default_3d(), workers);
      },
      "mass"_a, "S_upper"_a, "rC_grid"_a, "cl"_a = 0.95, "workers"_a = 0);
  m.def("adler_overlap", &adler_overlap, "curve"_a, "region"_a);
  m.def("log_grid", &log_grid, "lo"_a, "hi"_a, "n"_a);
  m.def(
      "design_scan",
      [](const MultilayerStack& base, const std::vector<int>& n_lay, double d, double S_target, double rC) {
        return design_scan(base, n_lay, d, S_target, rC);
      },
      "base"_a, "n_lay"_a, "d"_a, "S_target"_a, "rC"_a = kDesignRc);
  m.def("minimal_layers", &minimal_layers, "scan"_a, "target"_a);
  m.def("optimal_thickness", &optimal_thickness, "rC"_a, "d_lo"_a, "d_hi"_a, "stack"_a = py::none(),
        "resolution"_a = 1e-9);
  m.def("periodic_thickness_merit", &periodic_thickness_merit, "u"_a);
}

void bind_io(py::module_& m) {
  m.def(
      "read_geometry", [](const std::filesystem::path& p) { return io::read_geometry(p).mass; }, "path"_a);
  m.def(
      "parse_geometry", [](const std::string& text) { return io::parse_geometry(text).mass; }, "text"_a);
  m.def("read_spectrum", &io::read_spectrum, "path"_a);
  m.def("write_spectrum", &io::write_spectrum, "spectrum"_a, "path"_a);
  m.def("read_thermal", &io::read_thermal, "path"_a);
  m.def("write_thermal", &io::write_thermal, "points"_a, "path"_a);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CSL force-noise bounds from cantilever spectra";
  m.attr("__version__") = io::tool_version();
  bind_errors(m);
  bind_mass(m);
  bind_csl(m);
  bind_spectral(m);
  bind_thermal(m);
  bind_synth(m);
  bind_exclusion(m);
  bind_io(m);
}
