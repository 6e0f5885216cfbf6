"""Fits to measured (or synthetic) spectra, L-L curves and polarization data."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy import optimize

from . import io as _io


class SpectraError(ValueError):
    pass


class NoThresholdError(SpectraError):
    pass


@dataclass
class Spectrum:
    wavelength: np.ndarray  # nm, strictly ascending
    power: np.ndarray  # arb, non-negative
    meta: dict = field(default_factory=dict)  # duty, pump_uW, resolution_nm

    def __post_init__(self) -> None:
        self.wavelength = np.asarray(self.wavelength, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.wavelength.shape != self.power.shape or self.wavelength.ndim != 1:
            raise SpectraError("wavelength and power must be 1-D arrays of equal length")
        if np.any(np.diff(self.wavelength) <= 0):
            raise SpectraError("wavelengths must be strictly ascending")
        if np.any(self.power < 0):
            raise SpectraError("power must be non-negative")

    @classmethod
    def from_csv(cls, path: str | Path, meta: dict | None = None) -> "Spectrum":
        cols = _io.read_csv_columns(path, ("wavelength_nm", "power_arb"))
        return cls(cols["wavelength_nm"], cols["power_arb"], dict(meta or {}))


@dataclass
class LLData:
    pump: np.ndarray  # uW, ascending
    line_power: np.ndarray
    background_power: np.ndarray

    def __post_init__(self) -> None:
        self.pump = np.asarray(self.pump, dtype=float)
        self.line_power = np.asarray(self.line_power, dtype=float)
        self.background_power = np.asarray(self.background_power, dtype=float)
        n = len(self.pump)
        if len(self.line_power) != n or len(self.background_power) != n:
            raise SpectraError("L-L columns must have equal length")
        if np.any(np.diff(self.pump) < 0):
            raise SpectraError("pump must be ascending")

    @classmethod
    def from_csv(cls, path: str | Path) -> "LLData":
        cols = _io.read_csv_columns(path, ("pump_uW", "line_arb", "background_arb"))
        return cls(cols["pump_uW"], cols["line_arb"], cols["background_arb"])


# ---------------------------------------------------------------- Lorentzian

@dataclass
class LorentzianFit:
    lambda0: float
    fwhm: float
    amplitude: float
    offset: float
    residual: float
    flags: tuple[str, ...] = ()
    fwhm_corrected: float | None = None

    @property
    def q_loaded(self) -> float:
        return self.lambda0 / self.fwhm

    @property
    def q_corrected(self) -> float | None:
        if not self.fwhm_corrected:
            return None
        return self.lambda0 / self.fwhm_corrected

    def to_dict(self) -> dict:
        return {
            "lambda0_nm": self.lambda0,
            "fwhm_nm": self.fwhm,
            "amplitude_arb": self.amplitude,
            "offset_arb": self.offset,
            "q_loaded": self.q_loaded,
            "fwhm_corrected_nm": self.fwhm_corrected,
            "q_corrected": self.q_corrected,
            "residual_arb": self.residual,
            "flags": list(self.flags),
        }


def lorentzian(lam, lambda0, fwhm, amplitude, offset):
    return offset + amplitude / (1.0 + (2.0 * (lam - lambda0) / fwhm) ** 2)


def fit_lorentzian(
    spec: Spectrum,
    window: tuple[float, float] | None = None,
    *,
    half: Literal["both", "long"] = "both",
    instrument_fwhm: float | None = None,
    max_nfev: int = 2000,
) -> LorentzianFit:
    """Least-squares Lorentzian with offset.

    ``half="long"`` keeps only the long-wavelength side of the peak (plus
    the peak sample), for thermally skewed lines. ``instrument_fwhm``
    (default: ``spec.meta["resolution_nm"]`` if present) adds a
    quadrature-corrected linewidth alongside the raw one.
    """
    lam, p = spec.wavelength, spec.power
    if window is not None:
        lo, hi = sorted(window)
        sel = (lam >= lo) & (lam <= hi)
        lam, p = lam[sel], p[sel]
    if len(lam) < 7:
        raise SpectraError(f"need at least 7 samples in the window, got {len(lam)}")
    k = int(np.argmax(p))
    if k == 0 or k == len(lam) - 1:
        raise SpectraError("peak sits at the window edge")
    flags = []
    if half == "long":
        lam, p = lam[k:], p[k:]
        flags.append("long-wavelength half-window")
        if len(lam) < 4:
            raise SpectraError("too few samples on the long-wavelength side")
    # centre and scale coordinates for conditioning
    lc = float(lam[0] if half == "long" else lam[k])
    span = float(lam[-1] - lam[0])
    x = (lam - lc) / span
    scale = float(p.max())
    y = p / scale
    base = float(np.min(y))
    peak = float(y.max()) - base
    kk = int(np.argmax(y))
    above = np.flatnonzero(y - base >= 0.5 * peak)
    if half == "long":
        w0 = 2.0 * max(x[above[-1]] - x[kk], x[1] - x[0])
    else:
        w0 = max(x[above[-1]] - x[above[0]], x[1] - x[0])
    p0 = [x[kk], w0, peak, base]
    try:
        res = optimize.least_squares(
            lambda q: lorentzian(x, *q) - y, p0, method="lm",
            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev,
        )
    except (ValueError, RuntimeError) as exc:  # pragma: no cover - defensive
        raise SpectraError(f"Lorentzian fit failed: {exc}") from exc
    if not res.success and res.status <= 0:
        raise SpectraError(f"Lorentzian fit did not converge: {res.message}")
    x0, w, amp, off = res.x
    fwhm = abs(w) * span
    if not math.isfinite(fwhm) or fwhm <= 0:
        raise SpectraError("Lorentzian fit produced a non-positive width")
    spacing = float(np.median(np.diff(lam)))
    if fwhm < 2.0 * spacing:
        flags.append("resolution-limited: FWHM below twice the sample spacing")
    inst = instrument_fwhm if instrument_fwhm is not None else spec.meta.get("resolution_nm")
    corrected = None
    if inst is not None:
        corrected, limited = deconvolve_resolution(fwhm, float(inst), "gaussian-quadrature")
        if limited:
            flags.append("resolution-limited: FWHM at or below instrument resolution")
            corrected = None
    resid = float(np.sqrt(np.mean(res.fun**2)) * scale)
    return LorentzianFit(
        lambda0=lc + x0 * span,
        fwhm=fwhm,
        amplitude=amp * scale,
        offset=off * scale,
        residual=resid,
        flags=tuple(flags),
        fwhm_corrected=corrected,
    )


def deconvolve_resolution(fwhm_measured: float, fwhm_instrument: float,
                          model: Literal["gaussian-quadrature", "none"] = "gaussian-quadrature"
                          ) -> tuple[float, bool]:
    """Remove instrument broadening; returns (fwhm, resolution_limited)."""
    if not fwhm_measured > 0:
        raise SpectraError("measured FWHM must be positive")
    if model == "none":
        return float(fwhm_measured), False
    if model != "gaussian-quadrature":
        raise SpectraError(f"unknown deconvolution model {model!r}")
    if fwhm_measured <= fwhm_instrument:
        return 0.0, True
    return math.sqrt(max(0.0, fwhm_measured**2 - fwhm_instrument**2)), False


# ----------------------------------------------------------------- threshold

@dataclass
class ThresholdFit:
    below: tuple[float, float]  # slope, intercept
    above: tuple[float, float]
    p_threshold: float
    segment_ranges: tuple[tuple[int, int], tuple[int, int]]  # half-open index intervals
    sse: float
    sse_single: float
    which: str = "line"
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "p_threshold_uW": self.p_threshold,
            "below_slope_arb_per_uW": self.below[0],
            "below_intercept_arb": self.below[1],
            "above_slope_arb_per_uW": self.above[0],
            "above_intercept_arb": self.above[1],
            "segment_ranges": [list(r) for r in self.segment_ranges],
            "sse_two_segment_arb2": self.sse,
            "sse_single_line_arb2": self.sse_single,
            "flags": list(self.flags),
        }


class _Sums:
    """Prefix sums for O(1) least-squares lines on any index interval."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        z = np.zeros(1)
        self.n = np.arange(len(x) + 1, dtype=float)
        self.sx = np.concatenate([z, np.cumsum(x)])
        self.sy = np.concatenate([z, np.cumsum(y)])
        self.sxx = np.concatenate([z, np.cumsum(x * x)])
        self.sxy = np.concatenate([z, np.cumsum(x * y)])
        self.syy = np.concatenate([z, np.cumsum(y * y)])

    def line(self, i: int, j: int) -> tuple[float, float, float]:
        """(slope, intercept, sse) of the fit to points i..j-1."""
        n = j - i
        sx, sy = self.sx[j] - self.sx[i], self.sy[j] - self.sy[i]
        sxx, sxy, syy = self.sxx[j] - self.sxx[i], self.sxy[j] - self.sxy[i], self.syy[j] - self.syy[i]
        cxx = sxx - sx * sx / n
        cxy = sxy - sx * sy / n
        cyy = syy - sy * sy / n
        if cxx <= 0:
            return 0.0, sy / n, max(cyy, 0.0)
        slope = cxy / cxx
        return slope, (sy - slope * sx) / n, max(cyy - slope * cxy, 0.0)


def fit_threshold(data: LLData, which: Literal["line", "background"] = "line", *,
                  min_points: int = 4, min_gain: float = 0.05) -> ThresholdFit:
    """Two-segment least-squares threshold from an L-L curve.

    Every split leaving ``min_points`` on each side is tried; the one with
    the smallest total squared residual wins. The threshold is where the
    two fitted lines cross, i.e. the above-threshold line extrapolated back
    onto the below-threshold one. ``line`` mode only accepts splits where
    the slope increases; ``background`` accepts either direction, since
    off-resonance emission flattens once carriers clamp.
    """
    if which not in ("line", "background"):
        raise SpectraError(f"unknown threshold mode {which!r}")
    x = data.pump
    y = data.line_power if which == "line" else data.background_power
    n = len(x)
    if n < 2 * min_points:
        raise SpectraError(f"need at least {2 * min_points} points, got {n}")
    # work in centred, scaled coordinates so the fit is affine-invariant
    x0, xs = float(x.mean()), float(np.ptp(x)) or 1.0
    y0, ys = float(y.mean()), float(np.ptp(y)) or 1.0
    u = (x - x0) / xs
    v = (y - y0) / ys
    sums = _Sums(u, v)
    _, _, sse_single = sums.line(0, n)
    tss = float(np.sum(v * v))
    if sse_single <= 1e-20 * max(tss, 1e-300):
        raise NoThresholdError("no threshold detected: data lie on a single line")
    best = None
    for k in range(min_points, n - min_points + 1):
        s1, b1, e1 = sums.line(0, k)
        s2, b2, e2 = sums.line(k, n)
        if which == "line" and not s2 > s1:
            continue
        if s1 == s2:
            continue
        sse = e1 + e2
        if best is None or sse < best[0]:
            best = (sse, k, (s1, b1), (s2, b2))
    if best is None or best[0] >= (1.0 - min_gain) * sse_single:
        raise NoThresholdError(
            "no threshold detected: two segments do not improve on one line by more than "
            f"{100 * min_gain:g}%"
        )
    sse, k, (s1, b1), (s2, b2) = best
    uc = (b1 - b2) / (s2 - s1)
    p_th = x0 + uc * xs
    flags = []
    if not x[0] <= p_th <= x[-1]:
        flags.append("threshold outside the pump range")
    if which == "background" and s2 < s1:
        flags.append("slope decreases above the knee")

    def back(slope, icpt):
        # v = slope*u + icpt  ->  y = (ys*slope/xs) x + y0 + ys*(icpt - slope*x0/xs)
        return ys * slope / xs, y0 + ys * (icpt - slope * x0 / xs)

    return ThresholdFit(
        below=back(s1, b1),
        above=back(s2, b2),
        p_threshold=float(p_th),
        segment_ranges=((0, k), (k, n)),
        sse=float(sse * ys * ys),
        sse_single=float(sse_single * ys * ys),
        which=which,
        flags=tuple(flags),
    )


# -------------------------------------------------------------- polarization

@dataclass
class PolarizationFit:
    p_max: float
    p_min: float
    theta0: float  # rad, in [-pi/2, pi/2)
    residual: float
    flags: tuple[str, ...] = ()

    @property
    def extinction_ratio(self) -> float:
        return self.p_max / self.p_min if self.p_min > 0 else math.inf

    def to_dict(self) -> dict:
        ratio = self.extinction_ratio
        return {
            "p_max_arb": self.p_max,
            "p_min_arb": self.p_min,
            "theta0_rad": self.theta0,
            "theta0_deg": math.degrees(self.theta0),
            "extinction_ratio": ratio if math.isfinite(ratio) else None,
            "residual_arb": self.residual,
            "flags": list(self.flags),
        }


def polarization_fit(angles: Sequence[float], powers: Sequence[float]) -> PolarizationFit:
    """Fit P(t) = p_max cos^2(t - t0) + p_min sin^2(t - t0).

    The model is linear in (1, cos 2t, sin 2t), so the fit is an ordinary
    least-squares solve.
    """
    th = np.asarray(angles, dtype=float)
    pw = np.asarray(powers, dtype=float)
    if th.shape != pw.shape or th.ndim != 1:
        raise SpectraError("angles and powers must be 1-D arrays of equal length")
    if len(np.unique(np.round(th, 12))) < 5:
        raise SpectraError("need at least 5 distinct angles")
    if np.ptp(th) < math.pi - 1e-9:
        raise SpectraError("angles must span at least pi")
    design = np.column_stack([np.ones_like(th), np.cos(2 * th), np.sin(2 * th)])
    coef, *_ = np.linalg.lstsq(design, pw, rcond=None)
    a, b, c = coef
    amp = math.hypot(b, c)
    flags = []
    theta0 = 0.5 * math.atan2(c, b)
    if amp <= 1e-9 * max(abs(a), 1e-300):
        flags.append("theta0 undetermined: no polarization")
        theta0, amp = 0.0, 0.0
    p_max, p_min = a + amp, a - amp
    if p_min < 0:
        flags.append("p_min clamped to 0")
        p_min = 0.0
    resid = float(np.sqrt(np.mean((design @ coef - pw) ** 2)))
    if theta0 >= math.pi / 2:
        theta0 -= math.pi
    return PolarizationFit(float(p_max), float(p_min), float(theta0), resid, tuple(flags))


# ------------------------------------------------------------------- overlap

def beam_sigma_from_area(area_um2: float) -> float:
    """Intensity sigma (nm) of a Gaussian spot whose 1/e^2 disk has ``area_um2``."""
    if not area_um2 > 0:
        raise SpectraError("spot area must be positive")
    w = math.sqrt(area_um2 / math.pi) * 1e3  # 1/e^2 radius, nm
    return w / 2.0


def pump_overlap_scan(envelope, beam_sigma: float,
                      positions: Sequence[tuple[float, float]]) -> np.ndarray:
    """Relative emitted power for a Gaussian pump at each position.

    ``envelope`` is a :class:`gradedcavity.modes.EnvelopeFit` (anything with
    ``sigma_x``, ``sigma_y`` and ``center`` in nm). The overlap of two
    Gaussians is a Gaussian in the displacement with variance
    sigma_mode^2 + sigma_beam^2 per axis, normalized to 1 at zero offset.
    """
    if not beam_sigma > 0:
        raise SpectraError("beam sigma must be positive")
    sx2 = envelope.sigma_x**2 + beam_sigma**2
    sy2 = envelope.sigma_y**2 + beam_sigma**2
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    dx = pos[:, 0] - envelope.center[0]
    dy = pos[:, 1] - envelope.center[1]
    return np.exp(-0.5 * (dx * dx / sx2 + dy * dy / sy2))


def to_dict(obj) -> dict:
    """JSON-ready dict of any fit result."""
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    return asdict(obj)
