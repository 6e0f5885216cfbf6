import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradedcavity.fdtd import FieldRecord, SimConfig, Snapshot, SourceSpec, run
from gradedcavity.geometry import DielectricGrid
from gradedcavity.modes import (
    LIFETIME_FLAG,
    Q_CAP,
    AnalysisError,
    BeatingError,
    consensus_resonances,
    dominant_mode,
    energy_density,
    envelope_gaussian_fit,
    fourier_map,
    harmonic_inversion,
    light_cone_fraction,
    mode_volume,
    phasor,
    pseudo_3d,
    ringdown_q,
)

DT = 1 / 32
N = 2**16
T = np.arange(N) * DT
BAND = (0.2, 0.3)


def damped(f, Q, amp=1.0, phase=0.0, t=T):
    gamma = math.pi * f / Q  # amplitude decay rate for Q = omega tau / 2
    return amp * np.exp(-gamma * t) * np.cos(2 * math.pi * f * t + phase)


# ------------------------------------------------------- harmonic inversion

def test_single_mode_recovered():
    (m,) = harmonic_inversion(damped(0.25, 1e4, phase=0.3), BAND, max_modes=1, dt=DT)
    assert m.Q == pytest.approx(1e4, rel=0.01)
    assert m.freq == pytest.approx(0.25, rel=1e-5)
    assert m.amplitude == pytest.approx(1.0, rel=1e-3)
    assert m.phase == pytest.approx(0.3, abs=1e-3)


def test_unbanded_single_mode():
    x = damped(0.25, 200, t=T[:4096])
    (m,) = harmonic_inversion(x, None, max_modes=1, dt=DT)
    assert m.Q == pytest.approx(200, rel=1e-6)


def test_undamped_mode_hits_cap_with_flag():
    (m,) = harmonic_inversion(np.cos(2 * math.pi * 0.25 * T), BAND, max_modes=1, dt=DT)
    assert m.Q == Q_CAP
    assert LIFETIME_FLAG in m.flags


def test_two_modes_five_linewidths_apart():
    Q = 2000
    f1 = 0.25
    f2 = f1 + 5 * f1 / Q
    x = damped(f1, Q) + 0.7 * damped(f2, Q, phase=1.0)
    est = sorted(harmonic_inversion(x, BAND, max_modes=2, dt=DT), key=lambda m: m.freq)
    assert [m.freq for m in est] == pytest.approx([f1, f2], rel=1e-5)
    for m in est:
        assert m.Q == pytest.approx(Q, rel=0.05)


def test_inversion_accepts_records_and_rejects_bad_input():
    rec = FieldRecord(samples=damped(0.25, 1e4), dt=DT, start_step=0)
    assert harmonic_inversion(rec, BAND)[0].Q == pytest.approx(1e4, rel=0.01)
    with pytest.raises(AnalysisError):
        harmonic_inversion(np.ones(8), dt=DT)
    with pytest.raises(AnalysisError):
        harmonic_inversion(damped(0.25, 1e4), (0.2, 40.0), dt=DT)
    with pytest.raises(AnalysisError, match="dt"):
        harmonic_inversion(damped(0.25, 1e4))
    assert harmonic_inversion(damped(0.25, 1e4), (0.3, 0.3), dt=DT) == []


@given(st.floats(1e-3, 1e3))
def test_inversion_is_scale_invariant(scale):
    x = damped(0.25, 5000, t=T[:8192])
    ref = harmonic_inversion(x, BAND, max_modes=1, dt=DT)[0]
    got = harmonic_inversion(scale * x, BAND, max_modes=1, dt=DT)[0]
    assert got.Q == pytest.approx(ref.Q, rel=1e-9)
    assert got.freq == pytest.approx(ref.freq, rel=1e-12)
    assert got.amplitude == pytest.approx(scale * ref.amplitude, rel=1e-9)


def test_consensus_pools_probes():
    a = harmonic_inversion(damped(0.25, 1e4) + 0.2 * damped(0.27, 300), BAND, dt=DT)
    b = harmonic_inversion(0.5 * damped(0.25, 1e4) + 2 * damped(0.27, 300), BAND, dt=DT)
    pooled = consensus_resonances([a, b])
    top = [m for m in pooled if m.confidence == 2]
    assert sorted(round(m.freq, 4) for m in top) == [0.25, 0.27]
    assert dominant_mode(pooled).freq == pytest.approx(0.25, rel=1e-5)
    assert dominant_mode(pooled, q_min=1e6).freq == pytest.approx(0.27, rel=1e-4)
    with pytest.raises(AnalysisError):
        dominant_mode([])


# ---------------------------------------------------------------- ringdown

def test_ringdown_exact_exponential():
    f, Q = 0.25, 5000
    t = np.linspace(0, 4000, 2000)
    fit = ringdown_q(np.exp(-2 * math.pi * f * t / Q), f, t)
    assert fit.Q == pytest.approx(Q, rel=1e-3)
    assert fit.r2 == pytest.approx(1.0)


def test_ringdown_with_noise(rng):
    f, Q = 0.25, 5000
    t = np.linspace(0, 4000, 2000)
    u = np.exp(-2 * math.pi * f * t / Q)
    qs = np.array([ringdown_q(u * (1 + 0.01 * rng.normal(size=t.size)), f, t).Q for _ in range(100)])
    assert np.all(np.abs(qs / Q - 1) < 0.02)


def test_ringdown_rejects_beating():
    t = np.linspace(0, 2000, 4000)
    u = np.exp(-t / 800) * (1 + 0.5 * np.cos(2 * math.pi * t / 300))
    with pytest.raises(BeatingError):
        ringdown_q(u, 0.25, t)
    with pytest.raises(AnalysisError):
        ringdown_q(u, 0.25)
    with pytest.raises(AnalysisError):
        ringdown_q(-u, 0.25, t)


def test_ringdown_from_record_envelope():
    f, Q = 0.25, 3000
    rec = FieldRecord(samples=damped(f, Q, t=T[:20000]), dt=DT, start_step=0)
    assert ringdown_q(rec, f).Q == pytest.approx(Q, rel=1e-3)


# ------------------------------------------------------ small cavity run

@pytest.fixture(scope="module")
def block_cavity():
    """High-index block in vacuum; narrowband drive of its Q ~ 63 mode."""
    eps = np.ones((100, 100))
    eps[35:65, 35:65] = 12.0
    grid = DielectricGrid(eps=eps, dx=1 / 20, origin=(0.0, 0.0), a=1.0)
    probes = [(2.13, 2.37), (2.9, 2.2), (2.4, 2.95), (3.2, 3.0)]
    cfg = SimConfig(grid=grid, n_steps=20000, sources=[SourceSpec((2.21, 2.33), 0.3333, 0.06)],
                    probes=probes, energy_stride=10)
    return cfg, run(cfg)


def test_cavity_q_invariant_to_probe(block_cavity):
    _, res = block_cavity
    qs = [harmonic_inversion(r, (0.25, 0.42), max_modes=1)[0].Q for r in res.records]
    assert max(qs) / min(qs) - 1 < 0.05


def test_cavity_inversion_agrees_with_ringdown(block_cavity):
    cfg, res = block_cavity
    (m,) = harmonic_inversion(res.records[0], (0.25, 0.42), max_modes=1)
    energy = res.energy[res.energy[:, 0] > cfg.analysis_start_step()]
    for q in (ringdown_q(res.records[0], m.freq).Q, ringdown_q(energy, m.freq).Q):
        assert q == pytest.approx(m.Q, rel=0.10)


# ------------------------------------------------------------- mode volume

def snap_of(ex, ey=None, freq=None):
    ey = np.zeros_like(ex) if ey is None else ey
    return Snapshot(step=0, Hz=np.zeros_like(ex), Ex=ex, Ey=ey, freq=freq)


def test_uniform_rectangle_volume():
    g = DielectricGrid(eps=np.full((50, 40), 4.0), dx=10.0, origin=(0.0, 0.0), a=300.0, n_eff=2.0)
    ex = np.zeros((50, 40))
    ex[10:30, 5:25] = 2.0
    mv = mode_volume(snap_of(ex), g, 0.3)
    assert mv.area_nm2 == pytest.approx(20 * 20 * 100.0)
    lam = 300.0 / 0.3
    assert mv.v_eff_air == pytest.approx(mv.area_nm2 / (lam / 2) ** 2)
    assert mv.v_eff_material == pytest.approx(mv.v_eff_air * 2.0**2)
    assert mv.dimension == 2 and mv.valid


def test_cosine_mode_volume():
    n, dx = 65, 5.0  # odd, so one cell centre sits on the peak
    L = n * dx
    g = DielectricGrid(eps=np.ones((n, n)), dx=dx, origin=(-L / 2, -L / 2), a=300.0)
    x = g.x_centers()
    c = np.cos(math.pi * x / L)
    mv = mode_volume(snap_of(np.outer(c, c)), g, 0.3)
    assert mv.area_nm2 == pytest.approx(L**2 / 4, rel=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e6))
def test_volume_bounds_and_scale_invariance(seed, scale):
    r = np.random.default_rng(seed)
    eps = r.uniform(1.0, 12.0, size=(12, 9))
    g = DielectricGrid(eps=eps, dx=7.0, origin=(0.0, 0.0), a=300.0)
    ex, ey = r.normal(size=(2, 12, 9))
    v = mode_volume(snap_of(ex, ey), g, 0.3).area_nm2
    assert v >= 49.0 * (1 - 1e-12)
    assert mode_volume(snap_of(scale * ex, scale * ey), g, 0.3).area_nm2 == pytest.approx(v, rel=1e-10)


def test_volume_flags_edge_peak_and_pseudo3d():
    g = DielectricGrid(eps=np.ones((20, 20)), dx=10.0, origin=(0.0, 0.0), a=300.0)
    ex = np.zeros((20, 20))
    ex[0, 7] = 1.0
    mv = mode_volume(snap_of(ex), g, 0.3)
    assert not mv.valid and mv.flags
    assert mv.area_nm2 == pytest.approx(100.0)
    v3 = pseudo_3d(mode_volume(snap_of(np.ones((20, 20))), g, 0.3, n_material=3.0), 250.0)
    assert v3.dimension == 3
    assert v3.v_eff_material == pytest.approx(v3.v_eff_air * 27)
    with pytest.raises(AnalysisError):
        pseudo_3d(v3, 250.0)
    with pytest.raises(AnalysisError):
        mode_volume(snap_of(np.zeros((20, 20))), g, 0.3)


# -------------------------------------------------------------- light cone

def cone_grid(n=64, dx=0.1):
    return DielectricGrid(eps=np.ones((n, n)), dx=dx, origin=(0.0, 0.0), a=1.0)


def test_constant_field_is_all_dc():
    g = cone_grid()
    lc = light_cone_fraction(np.ones((64, 64)), g, 0.3, taper=0.0)
    assert lc.fraction == pytest.approx(1.0)
    assert lc.dc_fraction == pytest.approx(1.0)
    assert lc.dc_fraction_untapered == pytest.approx(1.0)


def test_guided_oscillation_is_outside_cone():
    g = cone_grid(128, 0.05)
    freq = 0.3
    k0 = 4 * freq  # cycles per a, four times the light-cone radius
    x = g.x_centers()
    field = np.outer(np.sin(2 * math.pi * k0 * x), np.ones(128))
    assert light_cone_fraction(field, g, freq).fraction < 0.05


def test_light_cone_frequency_must_match_snapshot():
    g = cone_grid()
    snap = snap_of(np.ones((64, 64)), freq=0.3)
    light_cone_fraction(snap, g, 0.3)
    with pytest.raises(AnalysisError, match="inconsistent"):
        light_cone_fraction(snap, g, 0.31)


@given(st.integers(0, 2**32 - 1))
def test_fourier_map_parseval_and_symmetry(seed):
    r = np.random.default_rng(seed)
    field = r.normal(size=(16, 24))
    fm = fourier_map(field, DielectricGrid(eps=np.ones((16, 24)), dx=0.1, origin=(0.0, 0.0), a=1.0),
                     0.3, taper=0.0)
    assert fm.power.sum() / field.size == pytest.approx(np.sum(field**2), rel=1e-10)
    # real field: |F(k)|^2 = |F(-k)|^2 (shifted maps are symmetric away from the Nyquist row)
    p = fm.power[1:, 1:]
    np.testing.assert_allclose(p, p[::-1, ::-1], rtol=1e-9, atol=1e-12 * p.max())


@given(st.floats(1e-6, 1e6))
def test_light_cone_scale_invariant(scale):
    g = cone_grid()
    field = np.random.default_rng(3).normal(size=(64, 64))
    a = light_cone_fraction(field, g, 0.3)
    b = light_cone_fraction(scale * field, g, 0.3)
    assert b.fraction == pytest.approx(a.fraction, rel=1e-10)
    assert b.dc_fraction == pytest.approx(a.dc_fraction, rel=1e-10)


# ---------------------------------------------------------------- envelope

def env_grid(dx=10.0, n=300):
    return DielectricGrid(eps=np.ones((n, n)), dx=dx, origin=(-n * dx / 2, -n * dx / 2), a=305.0)


def gaussian2d(g, sx, sy):
    x, y = g.x_centers(), g.y_centers()
    return np.outer(np.exp(-0.5 * (x / sx) ** 2), np.exp(-0.5 * (y / sy) ** 2))


def test_envelope_exact_gaussian():
    g = env_grid()
    fit = envelope_gaussian_fit(gaussian2d(g, 1000.0, 600.0), g)
    assert fit.sigma_x == pytest.approx(1000.0, rel=1e-6)
    assert fit.sigma_y == pytest.approx(600.0, rel=1e-6)
    assert fit.r2 == pytest.approx(1.0)


def test_envelope_of_lattice_modulated_gaussian():
    g = env_grid()
    x, y = np.meshgrid(g.x_centers(), g.y_centers(), indexing="ij")
    lattice = np.cos(math.pi * x / 305.0) ** 2 * np.cos(math.pi * y / 305.0) ** 2
    fit = envelope_gaussian_fit(gaussian2d(g, 1000.0, 600.0) * lattice, g)
    assert fit.sigma_x == pytest.approx(1000.0, rel=0.10)
    assert fit.sigma_y == pytest.approx(600.0, rel=0.10)


def test_envelope_isotropic_and_scale_invariant():
    g = env_grid()
    dens = gaussian2d(g, 800.0, 800.0)
    fit = envelope_gaussian_fit(dens, g)
    assert fit.sigma_x == pytest.approx(fit.sigma_y, rel=1e-6)
    big = envelope_gaussian_fit(1e5 * dens, g)
    assert big.sigma_x == pytest.approx(fit.sigma_x, rel=1e-6)


def test_phasor_projection_of_standing_wave():
    shape = (4, 5)
    pattern = np.arange(20.0).reshape(shape)
    freq = 0.25
    times = np.arange(64) * 0.5  # 8 whole periods
    snaps = [Snapshot(step=i, time=t, Hz=np.zeros(shape), Ex=pattern * np.cos(2 * math.pi * freq * t + 0.4),
                      Ey=np.zeros(shape)) for i, t in enumerate(times)]
    p = phasor(snaps, freq)
    np.testing.assert_allclose(np.abs(p.Ex), pattern, atol=1e-12)
    assert p.freq == freq
    dens, _ = energy_density(p, DielectricGrid(eps=np.ones(shape), dx=1.0, origin=(0.0, 0.0)))
    np.testing.assert_allclose(dens, pattern**2, atol=1e-10)
