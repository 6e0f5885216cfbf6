"""Resonance extraction and mode-shape analysis for FDTD output.

Frequencies are normalized (a/lambda, i.e. cycles per unit normalized time);
field-decay Q follows Q = omega*tau/2 for an amplitude decaying as
exp(-t/tau), equivalently U(t) = U0 exp(-omega t / Q) for the energy.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage, optimize, signal

from .fdtd import FieldRecord, Snapshot, unfold, unfold_grid
from .geometry import DielectricGrid

#: Reported Q when the decay is unresolved by the record.
Q_CAP = 1e9
#: Singular-value cutoff (relative to the largest) for model-order selection.
SV_THRESHOLD = 1e-8
LIFETIME_FLAG = "lifetime exceeds record"


class AnalysisError(ValueError):
    pass


class BeatingError(AnalysisError):
    """Energy envelope is not monotone; several modes are beating."""


@dataclass
class ResonanceEstimate:
    freq: float
    Q: float
    amplitude: float
    phase: float
    confidence: float
    decay_rate: float = 0.0
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "freq_normalized": self.freq,
            "Q": self.Q,
            "amplitude_arb": self.amplitude,
            "phase_rad": self.phase,
            "decay_rate_per_time": self.decay_rate,
            "confidence_residual": self.confidence,
            "flags": list(self.flags),
        }


def _signal_and_dt(record: FieldRecord | np.ndarray, dt: float | None) -> tuple[np.ndarray, float]:
    if isinstance(record, FieldRecord):
        return np.asarray(record.analysis_segment(), dtype=float), record.dt
    if dt is None:
        raise AnalysisError("dt is required when passing a bare sample array")
    return np.asarray(record), float(dt)


def _pencil_poles(y: np.ndarray, max_order: int, threshold: float) -> tuple[np.ndarray, bool]:
    """Signal poles of ``y`` by the SVD matrix-pencil method."""
    n = len(y)
    L = int(min(n // 3, max_order))
    if L < 1:
        return np.zeros(0, dtype=complex), False
    hank = np.lib.stride_tricks.sliding_window_view(y, L + 1)
    _, s, vh = np.linalg.svd(hank, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(0, dtype=complex), False
    order = int(np.sum(s > threshold * s[0]))
    order = max(1, min(order, L))
    v = vh[:order].T  # rows of v1, v2 span the shifted signal subspaces
    v1, v2 = v[:-1], v[1:]
    a, *_ = np.linalg.lstsq(v1, v2, rcond=None)
    ill = np.linalg.cond(v1) > 1e10
    return np.linalg.eigvals(a), bool(ill)


def _fit_amplitudes(y: np.ndarray, poles: np.ndarray) -> tuple[np.ndarray, float]:
    k = np.arange(len(y))
    with np.errstate(over="ignore", invalid="ignore"):
        vander = np.power(poles[None, :], k[:, None])
    vander = np.nan_to_num(vander, nan=0.0, posinf=0.0, neginf=0.0)
    amps, *_ = np.linalg.lstsq(vander, y, rcond=None)
    resid = np.linalg.norm(y - vander @ amps) / max(np.linalg.norm(y), 1e-300)
    return amps, float(resid)


def harmonic_inversion(
    record: FieldRecord | np.ndarray,
    band: tuple[float, float] | None = None,
    max_modes: int = 10,
    *,
    dt: float | None = None,
    sv_threshold: float = SV_THRESHOLD,
    max_order: int = 400,
) -> list[ResonanceEstimate]:
    """Decompose a ringdown into damped sinusoids.

    With a ``band`` the signal is mixed down to the band centre, low-pass
    filtered with a linear-phase FIR and decimated before the matrix pencil;
    the filter's effect on each pole is divided back out exactly, so
    amplitudes and phases refer to the first sample of the analysed segment.
    Without a band the pencil runs on the raw real samples.
    """
    x, dt = _signal_and_dt(record, dt)
    n = len(x)
    if n < 16:
        raise AnalysisError("record too short for harmonic inversion")
    fs = 1.0 / dt
    if band is not None:
        f_lo, f_hi = sorted(band)
        if f_lo < 0 or f_hi > fs / 2:
            raise AnalysisError(f"band {band} outside [0, Nyquist={fs / 2:g}]")
        if f_hi <= f_lo:
            return []
        f_min = max(f_lo, 1e-300)
        if n * dt < 10.0 / f_min and f_lo > 0:
            raise AnalysisError(
                f"record spans {n * dt:g} time units, fewer than 10 periods of f={f_lo:g}"
            )
        return _banded_inversion(x, dt, (f_lo, f_hi), max_modes, sv_threshold, max_order)

    poles, ill = _pencil_poles(x.astype(float), max_order, sv_threshold)
    amps, resid = _fit_amplitudes(x.astype(complex), poles)
    out = []
    for z, c in zip(poles, amps):
        if z.imag <= 0:
            continue
        s = np.log(z) / dt
        out.append(_estimate(s.imag / (2 * math.pi), -s.real, 2 * abs(c), float(np.angle(c)),
                             resid, ill, n * dt))
    out.sort(key=lambda r: -r.amplitude)
    return out[:max_modes]


def consensus_resonances(
    per_probe: Sequence[Sequence[ResonanceEstimate]],
    freq_tol: float = 2e-4,
) -> list[ResonanceEstimate]:
    """Merge estimates from several probes of one run.

    Estimates whose frequencies agree within ``freq_tol`` are pooled:
    amplitudes add, frequency and Q are medians, and ``confidence`` holds
    the number of probes that saw the mode. Sorted by pooled amplitude.
    """
    groups: list[list[ResonanceEstimate]] = []
    for estimates in per_probe:
        for est in estimates:
            for g in groups:
                if abs(g[0].freq - est.freq) < freq_tol:
                    g.append(est)
                    break
            else:
                groups.append([est])
    out = []
    for g in groups:
        flags = sorted({f for e in g for f in e.flags})
        out.append(ResonanceEstimate(
            freq=float(np.median([e.freq for e in g])),
            Q=float(np.median([e.Q for e in g])),
            amplitude=float(sum(e.amplitude for e in g)),
            phase=g[0].phase,
            confidence=float(len(g)),
            decay_rate=float(np.median([e.decay_rate for e in g])),
            flags=tuple(flags),
        ))
    out.sort(key=lambda r: -r.amplitude)
    return out


def dominant_mode(estimates: Sequence[ResonanceEstimate], q_min: float = 1e3) -> ResonanceEstimate:
    """Largest-amplitude estimate with Q >= ``q_min`` (largest overall if none)."""
    if not estimates:
        raise AnalysisError("no resonances to choose from")
    strong = [e for e in estimates if e.Q >= q_min]
    return max(strong or estimates, key=lambda e: e.amplitude)


def _banded_inversion(x, dt, band, max_modes, sv_threshold, max_order):
    n = len(x)
    fs = 1.0 / dt
    f_lo, f_hi = band
    fc = 0.5 * (f_lo + f_hi)
    width = f_hi - f_lo
    t = np.arange(n) * dt
    y = x * np.exp(-2j * math.pi * fc * t)
    decim = max(1, int(fs / (2.0 * width)))
    if decim > 1:
        numtaps = int(4 * fs / width) | 1
        numtaps = min(numtaps, (n // 4) | 1)
        taps = signal.firwin(numtaps, width, fs=fs)
        yf = signal.oaconvolve(y, taps, mode="valid")
        yd = yf[::decim]
    else:
        taps = np.array([1.0])
        yd = y
    m = len(taps)
    if len(yd) < 16:
        raise AnalysisError("band too narrow for the record length")
    poles, ill = _pencil_poles(yd, max_order, sv_threshold)
    if len(poles) == 0:
        return []
    amps, resid = _fit_amplitudes(yd, poles)
    out = []
    duration = n * dt
    for z, b in zip(poles, amps):
        if z == 0:
            continue
        s = np.log(z) / (decim * dt)  # continuous pole of the demodulated signal
        z0 = np.exp(s * dt)
        resp = np.polyval(taps[::-1], 1.0 / z0)  # sum_k h[k] z0^-k
        with np.errstate(over="ignore", invalid="ignore"):
            c = b / (z0 ** (m - 1) * resp)
        if not np.isfinite(c):
            continue
        f = fc + s.imag / (2 * math.pi)
        if not f_lo <= f <= f_hi:
            continue
        out.append(_estimate(f, -s.real, 2 * abs(c), float(np.angle(c)), resid, ill, duration))
    out.sort(key=lambda r: -r.amplitude)
    return out[:max_modes]


def _estimate(freq, gamma, amp, phase, resid, ill, duration) -> ResonanceEstimate:
    flags = []
    if ill:
        flags.append("ill-conditioned pencil")
    q = math.pi * freq / gamma if gamma > 0 else math.inf
    if not q < Q_CAP:
        q = Q_CAP
        flags.append(LIFETIME_FLAG)
    return ResonanceEstimate(freq=float(freq), Q=float(q), amplitude=float(amp), phase=phase,
                             confidence=resid, decay_rate=float(gamma), flags=tuple(flags))


@dataclass
class RingdownFit:
    Q: float
    r2: float
    slope: float
    intercept: float


def ringdown_q(
    series: FieldRecord | np.ndarray,
    freq: float,
    times: np.ndarray | None = None,
    *,
    blocks: int = 16,
    rise_tol: float = 0.01,
    trim: float = 0.1,
) -> RingdownFit:
    """Q from a log-linear fit to a decaying energy envelope.

    ``series`` is a probe record (the energy envelope is then the squared
    analytic-signal magnitude of the post-source segment, trimmed at both
    ends), a 1-D energy series with ``times``, or an ``(n, 3)`` energy table
    as returned by :func:`gradedcavity.fdtd.run`.
    """
    if freq <= 0:
        raise AnalysisError("freq must be positive")
    if isinstance(series, FieldRecord):
        seg = series.analysis_segment()
        env = np.abs(signal.hilbert(seg)) ** 2
        t = (np.arange(len(seg)) + series.start_step + series.time_offset) * series.dt
        cut = int(trim * len(seg))
        env, t = env[cut : len(seg) - cut], t[cut : len(seg) - cut]
    else:
        arr = np.asarray(series, dtype=float)
        if arr.ndim == 2 and arr.shape[1] == 3:
            t, env = arr[:, 1], arr[:, 2]
        else:
            if times is None:
                raise AnalysisError("times are required with a bare energy series")
            t, env = np.asarray(times, dtype=float), arr
    if len(env) < 2 * blocks:
        raise AnalysisError("energy series too short")
    if np.any(env <= 0):
        raise AnalysisError("energy envelope must be positive")
    block_means = np.array([b.mean() for b in np.array_split(env, blocks)])
    rises = np.diff(np.log(block_means))
    if np.any(rises > rise_tol):
        raise BeatingError(
            "energy envelope is not monotone (beating between modes?); use harmonic_inversion"
        )
    logu = np.log(env)
    fit = np.polyfit(t, logu, 1)
    slope, intercept = fit
    pred = np.polyval(fit, t)
    ss_res = float(np.sum((logu - pred) ** 2))
    ss_tot = float(np.sum((logu - logu.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if slope >= 0:
        return RingdownFit(Q=Q_CAP, r2=r2, slope=float(slope), intercept=float(intercept))
    q = min(-2 * math.pi * freq / slope, Q_CAP)
    return RingdownFit(Q=float(q), r2=float(r2), slope=float(slope), intercept=float(intercept))


def phasor(snapshots: Sequence[Snapshot], freq: float) -> Snapshot:
    """Complex field amplitude at ``freq`` projected from a run of snapshots.

    The snapshots should span (close to) a whole number of periods; the
    result's magnitude is the cycle peak of a standing or slowly decaying
    mode.
    """
    if len(snapshots) < 3:
        raise AnalysisError("need at least three snapshots")
    times = np.array([s.time for s in snapshots])
    w = np.exp(-2j * math.pi * freq * times)  # field = Re(P e^{i w t})
    acc = {}
    for name in ("Hz", "Ex", "Ey"):
        stack = np.stack([s.component(name) for s in snapshots])
        acc[name] = 2.0 * np.tensordot(w, stack, axes=1) / len(snapshots)
    first = snapshots[0]
    return Snapshot(step=first.step, time=first.time, symmetry=first.symmetry,
                    unfolded=first.unfolded, origin=first.origin, dx=first.dx,
                    freq=float(freq), **acc)


def _full_domain(snapshot: Snapshot, grid: DielectricGrid) -> tuple[Snapshot, DielectricGrid]:
    if snapshot.symmetry != ("none", "none") and not snapshot.unfolded:
        return unfold(snapshot), unfold_grid(grid, snapshot.symmetry)
    return snapshot, grid


@dataclass
class ModeVolumeResult:
    area_nm2: float
    v_eff_air: float
    v_eff_material: float
    index: float
    wavelength_nm: float
    peak_location: tuple[float, float]
    dimension: int = 2
    valid: bool = True
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        unit = "(lambda/2)^%d" % self.dimension
        return {
            "area_nm2": self.area_nm2,
            "dimension": self.dimension,
            f"v_eff_air_{unit}": self.v_eff_air,
            f"v_eff_material_(lambda/2n)^{self.dimension}": self.v_eff_material,
            "index": self.index,
            "wavelength_nm": self.wavelength_nm,
            "peak_location_nm": list(self.peak_location),
            "valid": self.valid,
            "flags": list(self.flags),
        }


def mode_volume(
    snapshot: Snapshot,
    grid: DielectricGrid,
    freq: float,
    *,
    n_material: float | None = None,
) -> ModeVolumeResult:
    """2D effective mode area int(eps|E|^2) / max(eps|E|^2).

    The area is reported in nm^2 and in units of (lambda/2)^2 and
    (lambda/2n)^2, labelled two-dimensional. Use :func:`pseudo_3d` for an
    explicit effective-height conversion.
    """
    snap, g = _full_domain(snapshot, grid)
    if snap.Ex.shape != g.eps.shape:
        raise AnalysisError("snapshot and grid are not co-registered")
    dens = g.eps * (np.abs(snap.Ex) ** 2 + np.abs(snap.Ey) ** 2)
    peak = float(dens.max())
    if peak <= 0:
        raise AnalysisError("field is identically zero")
    i, j = np.unravel_index(int(np.argmax(dens)), dens.shape)
    area = float(dens.sum() / peak * g.dx**2)
    unit = float(g.a) if g.a else 1.0
    wavelength = unit / freq
    n = float(n_material if n_material is not None else g.n_eff)
    flags = []
    valid = True
    if i in (0, dens.shape[0] - 1) or j in (0, dens.shape[1] - 1):
        valid = False
        flags.append("peak on grid boundary: mode not localized")
    v_air = area / (wavelength / 2.0) ** 2
    return ModeVolumeResult(
        area_nm2=area,
        v_eff_air=v_air,
        v_eff_material=v_air * n**2,
        index=n,
        wavelength_nm=wavelength,
        peak_location=(float(g.x_centers()[i]), float(g.y_centers()[j])),
        dimension=2,
        valid=valid,
        flags=tuple(flags),
    )


def pseudo_3d(result: ModeVolumeResult, effective_height_nm: float) -> ModeVolumeResult:
    """Multiply a 2D mode area by an explicit effective height."""
    if result.dimension != 2:
        raise AnalysisError("pseudo-3D conversion applies to 2D results only")
    if effective_height_nm <= 0:
        raise AnalysisError("effective height must be positive")
    vol = result.area_nm2 * effective_height_nm
    v_air = vol / (result.wavelength_nm / 2.0) ** 3
    return ModeVolumeResult(
        area_nm2=result.area_nm2,
        v_eff_air=v_air,
        v_eff_material=v_air * result.index**3,
        index=result.index,
        wavelength_nm=result.wavelength_nm,
        peak_location=result.peak_location,
        dimension=3,
        valid=result.valid,
        flags=result.flags + (f"pseudo-3D with effective height {effective_height_nm:g} nm",),
    )


@dataclass
class FourierMap:
    kx: np.ndarray
    ky: np.ndarray
    power: np.ndarray
    light_cone_radius: float

    def save(self, path, meta: dict | None = None):
        from . import io as _io

        info = {
            "kind": "FourierMap",
            "units_k": "2pi/a",
            "kx_min": float(self.kx.min()),
            "ky_min": float(self.ky.min()),
            "dk_x": float(self.kx[1] - self.kx[0]) if len(self.kx) > 1 else 0.0,
            "dk_y": float(self.ky[1] - self.ky[0]) if len(self.ky) > 1 else 0.0,
            "light_cone_radius_2pi_over_a": self.light_cone_radius,
            "axes": ["kx", "ky"],
        }
        info.update(meta or {})
        return _io.write_array(path, self.power, info)


@dataclass
class LightConeResult:
    fraction: float
    dc_fraction: float
    dc_fraction_untapered: float
    dc_power: float
    total_power: float
    fourier: FourierMap = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "light_cone_fraction": self.fraction,
            "dc_fraction": self.dc_fraction,
            "dc_fraction_untapered": self.dc_fraction_untapered,
            "dc_power_arb": self.dc_power,
            "total_power_arb": self.total_power,
            "light_cone_radius_2pi_over_a": self.fourier.light_cone_radius,
        }


def fourier_map(field_2d: np.ndarray, grid: DielectricGrid, freq: float, n_clad: float = 1.0,
                taper: float = 0.1) -> FourierMap:
    """Shifted |FFT|^2 of a (tapered) field, k in units of 2pi/a."""
    arr = np.asarray(field_2d)
    win = _taper(arr.shape, taper)
    spec = np.fft.fftshift(np.fft.fft2(arr * win))
    unit = float(grid.a) if grid.a else 1.0
    d = grid.dx / unit
    kx = np.fft.fftshift(np.fft.fftfreq(arr.shape[0], d=d))
    ky = np.fft.fftshift(np.fft.fftfreq(arr.shape[1], d=d))
    return FourierMap(kx=kx, ky=ky, power=np.abs(spec) ** 2, light_cone_radius=freq * n_clad)


def _taper(shape: tuple[int, int], alpha: float) -> np.ndarray:
    if alpha <= 0:
        return np.ones(shape)
    wx = signal.windows.tukey(shape[0], alpha, sym=True)
    wy = signal.windows.tukey(shape[1], alpha, sym=True)
    return np.outer(wx, wy)


def light_cone_fraction(
    field_or_snapshot: Snapshot | np.ndarray,
    grid: DielectricGrid,
    freq: float,
    n_clad: float = 1.0,
    *,
    component: str = "Ex",
    taper: float = 0.1,
) -> LightConeResult:
    """Share of in-plane Fourier power inside the cladding light cone.

    The light cone is |k| < omega n_clad / c, i.e. radius ``freq*n_clad`` in
    units of 2pi/a. The DC bin is reported both after the taper and for the
    raw field.
    """
    if freq <= 0:
        raise AnalysisError("freq must be positive")
    if isinstance(field_or_snapshot, Snapshot):
        snap = field_or_snapshot
        if snap.freq is not None and abs(snap.freq - freq) > 1e-6 * freq:
            raise AnalysisError(f"freq {freq} inconsistent with snapshot frequency {snap.freq}")
        snap, grid = _full_domain(snap, grid)
        arr = snap.component(component)
    else:
        arr = np.asarray(field_or_snapshot)
    if arr.shape != grid.eps.shape:
        raise AnalysisError("field and grid are not co-registered")
    fmap = fourier_map(arr, grid, freq, n_clad, taper)
    kx, ky = np.meshgrid(fmap.kx, fmap.ky, indexing="ij")
    inside = np.hypot(kx, ky) < fmap.light_cone_radius
    total = float(fmap.power.sum())
    if total == 0:
        raise AnalysisError("field is identically zero")
    i0 = int(np.argmin(np.abs(fmap.kx)))
    j0 = int(np.argmin(np.abs(fmap.ky)))
    dc = float(fmap.power[i0, j0])
    raw = np.fft.fft2(arr)
    raw_power = np.abs(raw) ** 2
    dc_raw = float(raw_power[0, 0] / raw_power.sum())
    return LightConeResult(
        fraction=float(fmap.power[inside].sum() / total),
        dc_fraction=dc / total,
        dc_fraction_untapered=dc_raw,
        dc_power=dc,
        total_power=total,
        fourier=fmap,
    )


@dataclass
class EnvelopeFit:
    sigma_x: float
    sigma_y: float
    center: tuple[float, float]
    amplitude: float
    r2: float
    window_nm: float = 0.0
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "sigma_x_nm": self.sigma_x,
            "sigma_y_nm": self.sigma_y,
            "center_nm": list(self.center),
            "amplitude_arb": self.amplitude,
            "r2": self.r2,
            "window_nm": self.window_nm,
            "flags": list(self.flags),
        }


def _running_max(values: np.ndarray, size: int) -> np.ndarray:
    if size <= 1:
        return values
    return ndimage.maximum_filter1d(values, size=size, mode="nearest")


def _fit_axis(coords: np.ndarray, profile: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    env = _running_max(profile, size)

    def model(x, amp, x0, sigma):
        return _running_max(amp * np.exp(-0.5 * ((x - x0) / sigma) ** 2), size)

    k = int(np.argmax(profile))
    amp0 = float(profile[k])
    half = coords[env >= 0.5 * env.max()]
    width = max(float(half.max() - half.min()) - (size - 1) * (coords[1] - coords[0]),
                2.0 * (coords[1] - coords[0]))
    p0 = [amp0, float(coords[k]), width / 2.3548]
    with warnings.catch_warnings():
        # the covariance is unused; an exact fit leaves it undefined
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        popt, _ = optimize.curve_fit(model, coords, env, p0=p0, maxfev=20000,
                                     ftol=1e-15, xtol=1e-15, gtol=1e-15)
    return popt, env - model(coords, *popt)


def envelope_gaussian_fit(
    energy_density: np.ndarray,
    grid: DielectricGrid,
    window_nm: float | None = None,
) -> EnvelopeFit:
    """Fit Gaussians to the per-axis envelopes of an energy density map.

    The x profile is the maximum over y (and vice versa); its envelope is a
    running maximum over ``window_nm`` (one lattice constant by default),
    which bridges the lattice-period modulation. The model is passed
    through the same running maximum, so sigma refers to the underlying
    Gaussian.
    """
    dens = np.asarray(energy_density, dtype=float)
    if dens.shape != grid.eps.shape:
        raise AnalysisError("density and grid are not co-registered")
    if window_nm is None:
        window_nm = float(grid.a) if grid.a else 0.0
    size = max(1, int(round(window_nm / grid.dx)))
    if size % 2 == 0:
        size += 1
    i, j = np.unravel_index(int(np.argmax(dens)), dens.shape)
    flags = []
    if i in (0, dens.shape[0] - 1) or j in (0, dens.shape[1] - 1):
        flags.append("peak on grid boundary")
    xs, ys = grid.x_centers(), grid.y_centers()
    px, rx = _fit_axis(xs, dens.max(axis=1), size)
    py, ry = _fit_axis(ys, dens.max(axis=0), size)
    env_all = np.concatenate([_running_max(dens.max(axis=1), size), _running_max(dens.max(axis=0), size)])
    res_all = np.concatenate([rx, ry])
    ss_tot = float(np.sum((env_all - env_all.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res_all**2)) / ss_tot if ss_tot > 0 else 0.0
    r2 = min(max(r2, 0.0), 1.0)
    if r2 < 0.5:
        flags.append("poor fit")
    return EnvelopeFit(
        sigma_x=abs(float(px[2])),
        sigma_y=abs(float(py[2])),
        center=(float(px[1]), float(py[1])),
        amplitude=float(0.5 * (px[0] + py[0])),
        r2=r2,
        window_nm=size * grid.dx if size > 1 else 0.0,
        flags=tuple(flags),
    )


def energy_density(snapshot: Snapshot, grid: DielectricGrid) -> tuple[np.ndarray, DielectricGrid]:
    """Electric energy density eps|E|^2 on the full domain."""
    snap, g = _full_domain(snapshot, grid)
    return g.eps * (np.abs(snap.Ex) ** 2 + np.abs(snap.Ey) ** 2), g
