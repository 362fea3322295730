import math

import numpy as np
import pytest

cslbound = pytest.importorskip("cslbound")


def paper_stack(n_lay=23, d=1e-7):
    return cslbound.MultilayerStack(19300.0, 2330.0, n_lay, d, 5e-6, 5e-6)


def test_stack_mass():
    s = paper_stack()
    expected = 5e-6 * 5e-6 * 1e-7 * (24 * 19300.0 + 23 * 2330.0)
    assert s.mass() == pytest.approx(expected, rel=1e-12)
    assert s.total_thickness() == pytest.approx(47e-7)


def test_multilayer_matches_quadrature():
    s = paper_stack(n_lay=3)
    mass = cslbound.CompositeMass([s])
    a = cslbound.csl_psd_multilayer(s, 1.0, 1e-7)
    b = cslbound.csl_psd_quadrature(mass, 1.0, 1e-7, cslbound.QuadConfig(rel_tol=1e-8))
    assert a == pytest.approx(b, rel=1e-6)


def test_psd_linear_in_lambda():
    s = paper_stack(n_lay=2)
    assert cslbound.csl_psd_multilayer(s, 3.0, 1e-7) == pytest.approx(3.0 * cslbound.csl_psd_multilayer(s, 1.0, 1e-7))
    assert cslbound.csl_psd_multilayer(s, 0.0, 1e-7) == 0.0


def test_geometry_file(geometry_dir):
    mass = cslbound.read_geometry(geometry_dir / "paper.json")
    assert len(mass.components) == 3
    assert mass.total_mass() > 0


def test_model_psd_vector_and_scalar():
    p = cslbound.SpectralModelParams(4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5)
    f = np.linspace(3520.0, 3545.0, 11)
    v = cslbound.model_psd(f, p)
    assert v.shape == f.shape
    assert v[3] == pytest.approx(cslbound.model_psd(float(f[3]), p))


def test_synth_and_fit_round_trip():
    truth = cslbound.SpectralModelParams(4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5)
    s = cslbound.synth_spectrum(truth, seed=11)
    fit = cslbound.fit_spectrum(s, 3.7e5)
    assert len(fit.masked_bins) == 6
    amp = cslbound.lorentzian_amplitude(fit.params)
    sig = cslbound.lorentzian_amplitude_sigma(fit)
    assert abs(amp - cslbound.lorentzian_amplitude(truth)) < 5 * sig
    assert fit.chi2 / fit.dof == pytest.approx(1.0, abs=0.15)


def test_synth_is_deterministic():
    truth = cslbound.SpectralModelParams(4e-13, 6.8e-19, 1e-13, 3532.7, 3532.92, 3.7e5)
    a = cslbound.synth_spectrum(truth, seed=5)
    b = cslbound.synth_spectrum(truth, seed=5)
    c = cslbound.synth_spectrum(truth, seed=6)
    assert a.psd == b.psd
    assert a.psd != c.psd


def test_linear_fit_exact_line():
    pts = [cslbound.ThermalPoint(T, 2.83e6, 1e-20 + 3e-12 * T / 2.83e6, 1e-21) for T in (0.1, 0.2, 0.4, 0.8)]
    f = cslbound.fit_linear(pts)
    assert f.B1 == pytest.approx(3e-12, rel=1e-9)
    assert f.B0 == pytest.approx(1e-20, rel=1e-6)


def test_paper_nonthermal_psd():
    f = cslbound.LinearFitResult()
    f.B0 = -4.64e-21
    f.B1 = 3.29e-12
    f.covariance = np.diag([5.31e-21**2, 0.03e-12**2])
    value, sigma = cslbound.nonthermal_psd(f, cslbound.ResonatorParams(0.43, 3532.7, Phi_x=2.38e7, sigma_k=0.01))
    assert value == pytest.approx(-1.51e-36, rel=0.01)
    assert sigma == pytest.approx(1.73e-36, rel=0.01)


def test_feldman_cousins():
    assert cslbound.feldman_cousins_upper(0.0, 1.0) == pytest.approx(1.96, abs=0.01)
    assert cslbound.feldman_cousins_upper(-1.51e-36, 1.73e-36) == pytest.approx(2.07e-36, rel=0.01)
    with pytest.raises(cslbound.GridResolutionError):
        cslbound.feldman_cousins_upper(0.0, 1.0, 0.95, 1e-4)


def test_design_scan_and_thickness():
    scan = cslbound.design_scan(paper_stack(d=1e-7), list(range(1, 31)), 1e-7, 1e-36)
    assert all(a.lam > b.lam for a, b in zip(scan, scan[1:]))
    d = cslbound.optimal_thickness(1e-7, 1e-8, 1e-6)
    assert 310e-9 < d < 320e-9
    with pytest.raises(cslbound.NoInteriorMaximumError):
        cslbound.optimal_thickness(1e-7, 50e-9, 200e-9)


def test_adler_region():
    r = cslbound.AdlerRegion.standard()
    lo, hi = r.band(1e-7)
    assert math.log10(lo) == pytest.approx(-10.0)
    assert math.log10(hi) == pytest.approx(-6.0)
    assert r.band(1e-9) is None


def test_errors_are_python_exceptions():
    assert issubclass(cslbound.ParseError, cslbound.Error)
    with pytest.raises(cslbound.ParseError):
        cslbound.parse_geometry("{not json")
    with pytest.raises(ValueError):
        cslbound.log_grid(1.0, 0.5, 3)
