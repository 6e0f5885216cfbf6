import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradedcavity.modes import EnvelopeFit
from gradedcavity.spectra import (
    LLData,
    NoThresholdError,
    SpectraError,
    Spectrum,
    beam_sigma_from_area,
    deconvolve_resolution,
    fit_lorentzian,
    fit_threshold,
    lorentzian,
    polarization_fit,
    pump_overlap_scan,
)

from conftest import FIXTURES

LAM = np.linspace(1297.5, 1299.5, 401)


def knee(pump, p_th, slope_below=0.02, slope_above=1.0, offset=0.5):
    pump = np.asarray(pump, dtype=float)
    return offset + slope_below * pump + (slope_above - slope_below) * np.maximum(pump - p_th, 0.0)


def ll_data(p_th, n=30, p_max=None, **kw):
    pump = np.linspace(0, p_max or 3 * p_th, n)
    y = knee(pump, p_th, **kw)
    return LLData(pump, y, np.full(n, 1.0))


# ---------------------------------------------------------------- Lorentzian

def test_exact_lorentzian():
    spec = Spectrum(LAM, lorentzian(LAM, 1298.5, 0.1, 3.0, 0.2))
    fit = fit_lorentzian(spec)
    assert fit.lambda0 == pytest.approx(1298.5, abs=1e-8)
    assert fit.fwhm == pytest.approx(0.1, rel=1e-8)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-8)
    assert fit.offset == pytest.approx(0.2, abs=1e-8)
    assert fit.q_loaded == pytest.approx(12985.0, rel=1e-8)


def test_lorentzian_with_noise(rng):
    clean = lorentzian(LAM, 1298.5, 0.1, 1.0, 0.2)  # offset keeps the noisy power positive
    widths = np.array([
        fit_lorentzian(Spectrum(LAM, clean + 0.02 * rng.normal(size=LAM.size))).fwhm
        for _ in range(200)
    ])
    assert abs(widths.mean() / 0.1 - 1) < 0.01
    assert widths.std() / 0.1 < 0.03


def test_long_half_window():
    spec = Spectrum(LAM, lorentzian(LAM, 1298.5, 0.1, 3.0, 0.2))
    fit = fit_lorentzian(spec, half="long")
    assert fit.fwhm == pytest.approx(0.1, rel=1e-6)
    assert "long-wavelength half-window" in fit.flags


def test_lorentzian_rejects_bad_windows():
    spec = Spectrum(LAM, lorentzian(LAM, 1298.5, 0.1, 3.0, 0.2))
    with pytest.raises(SpectraError, match="7 samples"):
        fit_lorentzian(spec, window=(1298.5, 1298.51))
    with pytest.raises(SpectraError, match="edge"):
        fit_lorentzian(spec, window=(1298.5, 1299.5))
    with pytest.raises(SpectraError):
        Spectrum(LAM[::-1], LAM)
    with pytest.raises(SpectraError):
        Spectrum(LAM, -np.ones_like(LAM))


def test_resolution_deconvolution():
    assert deconvolve_resolution(0.1, 0.0) == (0.1, False)
    assert deconvolve_resolution(0.08, 0.08) == (0.0, True)
    assert deconvolve_resolution(0.1, 0.08)[0] == pytest.approx(0.06)
    assert deconvolve_resolution(0.1, 0.08, "none") == (0.1, False)
    with pytest.raises(SpectraError):
        deconvolve_resolution(0.0, 0.08)


def test_lorentzian_fixture_with_instrument():
    spec = Spectrum.from_csv(FIXTURES / "spectrum_1298p5.csv")
    fit = fit_lorentzian(spec, (1297.5, 1299.5), instrument_fwhm=0.08)
    assert fit.q_loaded == pytest.approx(12985, rel=0.01)
    assert fit.fwhm_corrected == pytest.approx(0.06, rel=0.02)
    narrow = fit_lorentzian(spec, (1297.5, 1299.5), instrument_fwhm=0.2)
    assert narrow.fwhm_corrected is None
    assert any("resolution-limited" in f for f in narrow.flags)


# ----------------------------------------------------------------- threshold

@pytest.mark.parametrize("p_th", [360.0, 120.0])
def test_threshold_exact_knee(p_th):
    fit = fit_threshold(ll_data(p_th))
    assert fit.p_threshold == pytest.approx(p_th, rel=0.03)
    assert fit.above[0] == pytest.approx(1.0, rel=1e-9)


def test_single_line_has_no_threshold():
    pump = np.linspace(0, 1000, 30)
    with pytest.raises(NoThresholdError):
        fit_threshold(LLData(pump, 3 + 0.1 * pump, np.ones(30)))
    with pytest.raises(SpectraError):
        fit_threshold(ll_data(360.0, n=6))
    with pytest.raises(SpectraError, match="mode"):
        fit_threshold(ll_data(360.0), which="both")


@given(st.floats(1e-3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-2, 1e2))
def test_threshold_affine_and_pump_scale_invariant(gain, shift, pump_scale):
    base = ll_data(360.0)
    ref = fit_threshold(base).p_threshold
    moved = LLData(base.pump * pump_scale, gain * base.line_power + shift, base.background_power)
    assert fit_threshold(moved).p_threshold == pytest.approx(ref * pump_scale, rel=1e-9)


def test_background_clamps_at_knee():
    pump = np.linspace(0, 1000, 30)
    bg = np.minimum(pump, 360.0) * 0.01 + 0.1
    fit = fit_threshold(LLData(pump, knee(pump, 360.0), bg), which="background")
    assert fit.p_threshold == pytest.approx(360.0, rel=0.03)
    assert "slope decreases above the knee" in fit.flags


# -------------------------------------------------------------- polarization

def test_polarization_recovery(rng):
    th = np.radians(np.arange(0, 360, 10.0))
    theta0, p_max, p_min = math.radians(10), 20.0, 1.0
    clean = p_max * np.cos(th - theta0) ** 2 + p_min * np.sin(th - theta0) ** 2
    fit = polarization_fit(th, clean * (1 + 0.05 * rng.normal(size=th.size)))
    assert math.degrees(fit.theta0) == pytest.approx(10, abs=2)
    assert fit.extinction_ratio == pytest.approx(20, rel=0.3)


def test_unpolarized_is_flagged():
    th = np.radians(np.arange(0, 181, 15.0))
    fit = polarization_fit(th, np.full(th.size, 4.0))
    assert any("undetermined" in f for f in fit.flags)
    assert fit.p_max == pytest.approx(fit.p_min)


@given(st.floats(-1.5, 1.5), st.floats(1.1, 50.0))
def test_polarization_period_pi(theta0, ratio):
    th = np.radians(np.arange(0, 360, 20.0))
    model = ratio * np.cos(th - theta0) ** 2 + np.sin(th - theta0) ** 2
    a = polarization_fit(th, model)
    b = polarization_fit(th, ratio * np.cos(th - theta0 - math.pi) ** 2 + np.sin(th - theta0 - math.pi) ** 2)
    assert a.theta0 == pytest.approx(b.theta0, abs=1e-9)
    d = (a.theta0 - theta0 + math.pi / 2) % math.pi - math.pi / 2
    assert d == pytest.approx(0.0, abs=1e-9)
    assert a.extinction_ratio == pytest.approx(ratio, rel=1e-9)


def test_polarization_input_checks():
    with pytest.raises(SpectraError):
        polarization_fit([0, 0.1, 0.2, 0.3, 0.4, 0.5], np.ones(6))
    with pytest.raises(SpectraError):
        polarization_fit([0, 1, 2], [1, 2])


# ------------------------------------------------------------------- overlap

ENV = EnvelopeFit(sigma_x=1000.0, sigma_y=600.0, center=(0.0, 0.0), amplitude=1.0, r2=1.0)


def test_overlap_reference_points():
    sb = beam_sigma_from_area(8.0)
    assert sb == pytest.approx(math.sqrt(8 / math.pi) * 500)
    sx = math.hypot(ENV.sigma_x, sb)
    vals = pump_overlap_scan(ENV, sb, [(0, 0), (sx, 0)])
    assert vals[0] == 1.0
    assert vals[1] == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_overlap_monotone_and_wider_than_beam():
    sb = beam_sigma_from_area(8.0)
    xs = np.linspace(0, 4000, 41)
    vals = pump_overlap_scan(ENV, sb, [(x, 0.0) for x in xs])
    assert np.all(np.diff(vals) < 0)
    beam_alone = np.exp(-0.5 * (xs / sb) ** 2)
    assert np.all(vals[1:] > beam_alone[1:])
    with pytest.raises(SpectraError):
        pump_overlap_scan(ENV, 0.0, [(0, 0)])
