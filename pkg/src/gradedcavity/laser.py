"""Steady-state single-mode rate equations for an optically pumped cavity.

Carrier density N (cm^-3) and photon number S = s * V_a (s being the
modal photon density referred to the active volume) obey

    0 = eta P / (hbar w_p V_a) - N / tau - v_g g(N) S / V_a
    0 = Gamma v_g g(N) S - S / tau_p + beta Gamma N V_a / tau_sp

with 1/tau = 1/tau_sp + 1/tau_nr and tau_p = Q lambda0 / (2 pi c).

Eliminating S through u = 1/tau_p - Gamma v_g g(N) leaves a single
equation in u whose left-hand side is strictly monotone, so a bracketing
Newton/bisection iteration in log(u) converges from any pump level.

Times are expressed in units of ``time_unit_s`` seconds (lifetimes and the
group velocity are read in that unit), which allows consistent rescaling.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import io as _io

H_PLANCK = 6.62607015e-34  # J s
C_CM_S = 2.99792458e10  # cm/s

GainModel = Literal["log", "linear"]


class LaserError(ValueError):
    pass


def active_volume_cm3(spot_area_um2: float, n_wells: int, well_nm: float) -> float:
    """Pumped quantum-well volume: spot area times total well thickness."""
    return spot_area_um2 * 1e-8 * n_wells * well_nm * 1e-7


@dataclass(frozen=True)
class RateEqnParams:
    """Rate-equation coefficients; every default is a modelling choice.

    ``g0_per_cm`` is the logarithmic gain coefficient, ``a_cm2`` the
    differential gain of the linear model. ``n_max_cm3`` bounds the carrier
    density the material can sustain; a threshold above it is reported as
    unreachable gain.
    """

    Q: float = 1e4
    lambda0_nm: float = 1300.0
    beta: float = 1e-2
    Gamma: float = 0.2
    v_g_cm_s: float = C_CM_S / 3.5
    gain_model: GainModel = "log"
    g0_per_cm: float = 1500.0
    a_cm2: float = 5e-16
    N_tr_cm3: float = 1.5e18
    tau_sp_s: float = 2e-9
    tau_nr_s: float | None = 1e-9
    V_active_cm3: float = active_volume_cm3(21.0, 5, 5.0)
    eta_pump: float = 0.7
    lambda_pump_nm: float = 830.0
    duty: float = 10.0 / 300.0
    n_max_cm3: float = 1e21
    time_unit_s: float = 1.0

    def __post_init__(self) -> None:
        positive = ("Q", "lambda0_nm", "beta", "Gamma", "v_g_cm_s", "N_tr_cm3", "tau_sp_s",
                    "V_active_cm3", "eta_pump", "lambda_pump_nm", "duty", "n_max_cm3", "time_unit_s")
        for name in positive:
            if not getattr(self, name) > 0:
                raise LaserError(f"{name} must be positive")
        if self.tau_nr_s is not None and not self.tau_nr_s > 0:
            raise LaserError("tau_nr_s must be positive (or None for no non-radiative decay)")
        if self.beta > 1 or self.eta_pump > 1 or self.Gamma > 1 or self.duty > 1:
            raise LaserError("beta, Gamma, eta_pump and duty must not exceed 1")
        if self.gain_model == "log":
            if not self.g0_per_cm > 0:
                raise LaserError("g0_per_cm must be positive")
        elif self.gain_model == "linear":
            if not self.a_cm2 > 0:
                raise LaserError("a_cm2 must be positive")
        else:
            raise LaserError(f"unknown gain model {self.gain_model!r}")

    # derived rates, all per time unit
    @property
    def tau_p(self) -> float:
        """Photon lifetime Q lambda0 / (2 pi c) in time units."""
        return self.Q * self.lambda0_nm * 1e-7 / (2 * math.pi * C_CM_S) / self.time_unit_s

    @property
    def tau(self) -> float:
        inv = 1.0 / self.tau_sp_s + (1.0 / self.tau_nr_s if self.tau_nr_s else 0.0)
        return 1.0 / inv

    @property
    def photon_energy_pump_J(self) -> float:
        return H_PLANCK * C_CM_S / (self.lambda_pump_nm * 1e-7)

    def pump_rate(self, pump_uW: float) -> float:
        """Carrier generation rate eta P / (hbar w_p V_a), per cm^3 per time unit."""
        return self.eta_pump * pump_uW * 1e-6 / (self.photon_energy_pump_J * self.V_active_cm3) * self.time_unit_s

    def gain(self, N: float) -> float:
        """Material gain g(N) in cm^-1."""
        if self.gain_model == "log":
            return self.g0_per_cm * math.log(N / self.N_tr_cm3) if N > 0 else -math.inf
        return self.a_cm2 * (N - self.N_tr_cm3)

    def carrier_for_gain(self, g: float) -> float:
        """Inverse of :meth:`gain`."""
        if self.gain_model == "log":
            return self.N_tr_cm3 * math.exp(g / self.g0_per_cm)
        return self.N_tr_cm3 + g / self.a_cm2

    def with_time_unit(self, time_unit_s: float) -> "RateEqnParams":
        """Same physics expressed in another time unit."""
        k = time_unit_s / self.time_unit_s
        return replace(
            self,
            tau_sp_s=self.tau_sp_s / k,
            tau_nr_s=None if self.tau_nr_s is None else self.tau_nr_s / k,
            v_g_cm_s=self.v_g_cm_s * k,
            time_unit_s=time_unit_s,
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SteadyStateSolution:
    pump_uW: float
    N_cm3: float
    S_photons: float
    emitted_arb: float  # S / tau_p, photons per second
    residual: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _n_of_u(p: RateEqnParams, u: float) -> float:
    # Gamma v_g g(N) = 1/tau_p - u
    g = (1.0 / p.tau_p - u) / (p.Gamma * p.v_g_cm_s)
    return p.carrier_for_gain(g)


def _u_max(p: RateEqnParams) -> float:
    """Largest admissible u (N = 0); infinite for the log model."""
    if p.gain_model == "log":
        return math.inf
    return 1.0 / p.tau_p + p.Gamma * p.v_g_cm_s * p.a_cm2 * p.N_tr_cm3


def _balance(p: RateEqnParams, R: float, u: float) -> tuple[float, float]:
    """Carrier balance F(u) (increasing in u) and the carrier density."""
    N = _n_of_u(p, u)
    stim = p.beta * N / p.tau_sp_s * (1.0 / (p.tau_p * u) - 1.0)
    return R - N / p.tau - stim, N


def _residuals(p: RateEqnParams, R: float, N: float, S: float) -> float:
    g = p.gain(N) if N > 0 else 0.0
    vg = p.v_g_cm_s
    t1 = (R, N / p.tau, vg * g * S / p.V_active_cm3)
    t2 = (p.Gamma * vg * g * S, S / p.tau_p, p.beta * p.Gamma * N * p.V_active_cm3 / p.tau_sp_s)
    r1 = abs(t1[0] - t1[1] - t1[2]) / max(max(abs(x) for x in t1), 1e-300)
    r2 = abs(t2[0] - t2[1] + t2[2]) / max(max(abs(x) for x in t2), 1e-300)
    return max(r1, r2)


def steady_state(params: RateEqnParams, pump_uW: float, *, tol: float = 1e-10,
                 max_iter: int = 400) -> SteadyStateSolution:
    """Steady state (N, S) at peak external pump power ``pump_uW``."""
    p = params
    if pump_uW < 0:
        raise LaserError("pump power must be non-negative")
    if pump_uW == 0:
        return SteadyStateSolution(0.0, 0.0, 0.0, 0.0, 0.0)
    R = p.pump_rate(pump_uW)
    inv_tp = 1.0 / p.tau_p
    # bracket in x = log(u)
    hi_u = _u_max(p)
    if math.isinf(hi_u):
        hi_u = inv_tp
        while _balance(p, R, hi_u)[0] <= 0:
            hi_u *= 2.0
            if hi_u > 1e300:
                raise LaserError(_diagnostic(p, R))
    lo_u = min(inv_tp, hi_u) * 0.5
    while _balance(p, R, lo_u)[0] >= 0:
        lo_u *= 1e-3
        if lo_u < 1e-300:
            raise LaserError(_diagnostic(p, R))
    lo, hi = math.log(lo_u), math.log(hi_u)
    x = 0.5 * (lo + hi)
    scale = max(R, 1e-300)
    for _ in range(max_iter):
        u = math.exp(x)
        f, N = _balance(p, R, u)
        if f < 0:
            lo = x
        else:
            hi = x
        # Newton step on x using a centred difference
        h = 1e-7
        fp = (_balance(p, R, math.exp(x + h))[0] - _balance(p, R, math.exp(x - h))[0]) / (2 * h)
        x_new = x - f / fp if fp > 0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(f) <= tol * 1e-3 * scale or hi - lo < 1e-15:
            break
        x = x_new
    u = math.exp(x)
    N = _n_of_u(p, u)
    S = p.beta * p.Gamma * N * p.V_active_cm3 / (p.tau_sp_s * u)
    res = _residuals(p, R, N, S)
    if res > tol:
        raise LaserError(f"steady state did not converge at {pump_uW} uW (residual {res:.2e})")
    emitted = S / (p.tau_p * p.time_unit_s)
    return SteadyStateSolution(float(pump_uW), N, S, emitted, res)


def _diagnostic(p: RateEqnParams, R: float) -> str:
    g_lo = p.gain(max(p.N_tr_cm3 * 1e-6, 1.0))
    g_hi = p.gain(p.n_max_cm3)
    need = 1.0 / (p.tau_p * p.Gamma * p.v_g_cm_s)
    return (f"no bracket for pump rate {R:.3e}: gain spans [{g_lo:.3e}, {g_hi:.3e}] cm^-1 "
            f"for N in [N_tr*1e-6, n_max], loss requires {need:.3e} cm^-1")


def threshold_carrier_density(params: RateEqnParams) -> float:
    """N_th from Gamma v_g g(N_th) = 1/tau_p."""
    p = params
    g_th = 1.0 / (p.tau_p * p.Gamma * p.v_g_cm_s)
    n_th = p.carrier_for_gain(g_th)
    if not n_th <= p.n_max_cm3:
        raise LaserError(
            f"cavity loss exceeds material gain: threshold gain {g_th:.3e} cm^-1 needs "
            f"N = {n_th:.3e} cm^-3 > n_max = {p.n_max_cm3:.3e}"
        )
    return n_th


def threshold(params: RateEqnParams) -> float:
    """Threshold peak pump power in uW (stimulated term at S -> 0+)."""
    p = params
    n_th = threshold_carrier_density(p)
    rate = n_th / p.tau  # per cm^3 per time unit
    watts = rate / p.time_unit_s * p.photon_energy_pump_J * p.V_active_cm3 / p.eta_pump
    return watts * 1e6


def transparency_threshold(params: RateEqnParams) -> float:
    """Pump needed to hold N at transparency, the Q -> infinity limit of :func:`threshold`."""
    p = params
    return p.N_tr_cm3 / p.tau / p.time_unit_s * p.photon_energy_pump_J * p.V_active_cm3 / p.eta_pump * 1e6


def transparency_ratio(params: RateEqnParams) -> float:
    """N_tr / N_th."""
    return params.N_tr_cm3 / threshold_carrier_density(params)


@dataclass
class LLCurve:
    solutions: list[SteadyStateSolution]
    log_slope: np.ndarray  # d log S / d log P between consecutive points
    transition_index: int | None  # point nearest the steepest log-log rise (the kink)
    transition_range: tuple[int, int] | None  # between the log-log curvature extrema
    monotone: bool
    flags: tuple[str, ...] = ()

    @property
    def pump_uW(self) -> np.ndarray:
        return np.array([s.pump_uW for s in self.solutions])

    @property
    def N(self) -> np.ndarray:
        return np.array([s.N_cm3 for s in self.solutions])

    @property
    def S(self) -> np.ndarray:
        return np.array([s.S_photons for s in self.solutions])

    @property
    def emitted(self) -> np.ndarray:
        return np.array([s.emitted_arb for s in self.solutions])

    @property
    def kink_uW(self) -> float | None:
        return None if self.transition_index is None else float(self.pump_uW[self.transition_index])

    def to_csv(self, path: str | Path) -> Path:
        rows = [(s.pump_uW, s.N_cm3, s.S_photons, s.emitted_arb) for s in self.solutions]
        return _io.write_csv(path, ("pump_uW", "N_cm3", "S_photons", "emitted_arb"), rows)


def ll_curve(params: RateEqnParams, pump_grid: Sequence[float]) -> LLCurve:
    """Steady states along an ascending pump grid.

    The transition is located on the log-log curve: its centre is where
    d log S / d log P peaks, its extent runs between the points of largest
    positive and negative curvature.
    """
    pumps = np.asarray(pump_grid, dtype=float)
    if pumps.ndim != 1 or len(pumps) == 0:
        raise LaserError("pump grid must be a non-empty 1-D sequence")
    if np.any(np.diff(pumps) < 0):
        raise LaserError("pump grid must be sorted ascending")
    sols = []
    for k, pw in enumerate(pumps):
        try:
            sols.append(steady_state(params, float(pw)))
        except LaserError as exc:
            raise LaserError(f"pump point {k} ({pw} uW): {exc}") from exc
    S = np.array([s.S_photons for s in sols])
    monotone = bool(np.all(np.diff(S) >= 0))
    flags = [] if monotone else ["S not monotone in pump"]
    slope = np.full(max(len(pumps) - 1, 0), np.nan)
    centre = span = None
    pos = (pumps > 0) & (S > 0)
    if pos.sum() >= 2:
        with np.errstate(invalid="ignore", divide="ignore"):
            full = np.full(len(S), np.nan)
            full[pos] = np.log(S[pos])
            slope = np.diff(full) / np.diff(np.log(np.where(pumps > 0, pumps, np.nan)))
    if pos.sum() >= 3:
        lp, ls = np.log(pumps[pos]), np.log(S[pos])
        idx = np.flatnonzero(pos)
        local = np.gradient(ls, lp)
        curv = np.gradient(local, lp)
        centre = int(idx[int(np.argmax(local))])
        span = (int(idx[int(np.argmax(curv))]), int(idx[int(np.argmin(curv))]))
    return LLCurve(sols, slope, centre, span, monotone, tuple(flags))


def load_params(path: str | Path) -> RateEqnParams:
    """Read parameters from an INI ``[laser]`` section (see :mod:`gradedcavity.config`)."""
    from .config import laser_params_from_file

    return laser_params_from_file(path)
