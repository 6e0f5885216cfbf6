"""Two-dimensional TE (Hz, Ex, Ey) Yee-grid FDTD.

Normalized units: lengths in lattice constants (a = 1), c = 1, so a
frequency in 1/time units is directly the normalized frequency a/lambda.
Grid positions in configs are in nm and converted with ``grid.a``.

Layout on an (nx, ny) cell grid::

    Hz[i, j]  cell centre        ((i+1/2) dx, (j+1/2) dx)   shape (nx, ny)
    Ex[i, j]  horizontal edge    ((i+1/2) dx,  j      dx)   shape (nx, ny+1)
    Ey[i, j]  vertical edge      ( i      dx, (j+1/2) dx)   shape (nx+1, ny)

The absorbing layer is a Berenger split-field PML (Hz = Hzx + Hzy) with a
polynomially graded loss rate applied identically to E and H, which keeps it
matched inside dielectric as well as vacuum. Behind the PML (or on every side
when the PML is disabled) the walls are perfect electric conductors.

A mirror-symmetry wall replaces the low-x and/or low-y side. The mode parity
is given as the mirror character of the electric field: ``odd`` about the
plane x = 0 means E(-x, y) = -M_x E(x, y) with M_x the reflection matrix, so
Ey (tangential) is odd, Ex (normal) even and Hz even in x. The A2 cavity mode
is odd about both planes.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, NamedTuple, Sequence

import numpy as np

from . import io as _io
from .geometry import DielectricGrid

Parity = Literal["none", "even", "odd"]
Component = Literal["Hz", "Ex", "Ey"]

#: Yee stability bound for a square 2D grid.
MAX_COURANT = 1.0 / math.sqrt(2.0)
DEFAULT_MAX_SNAPSHOT_MB = 1024.0


class FDTDError(RuntimeError):
    pass


class ConfigError(FDTDError, ValueError):
    pass


class DivergenceError(FDTDError):
    def __init__(self, step: int):
        super().__init__(f"non-finite field detected at step {step}")
        self.step = step


@dataclass(frozen=True)
class PMLParams:
    thickness_cells: int = 12
    sigma_max_scale: float = 1.0
    grading_order: float = 3.0

    def __post_init__(self) -> None:
        if self.thickness_cells < 8:
            raise ConfigError("PML thickness must be at least 8 cells")
        if not 2.0 <= self.grading_order <= 4.0:
            raise ConfigError("PML grading order must lie in [2, 4]")
        if self.sigma_max_scale <= 0:
            raise ConfigError("sigma_max_scale must be positive")


@dataclass(frozen=True)
class SourceSpec:
    """Soft point source with a Gaussian-modulated sinusoid.

    The envelope is ``exp(-((t - t0*dt) * bandwidth)**2 / 2)``, so the source
    is considered off after ``t0*dt + 4/bandwidth`` (normalized time).
    """

    position: tuple[float, float]
    center_freq: float = 0.25
    bandwidth: float = 0.05
    t0: int | None = None
    amplitude: float = 1.0
    component: Component = "Hz"

    def __post_init__(self) -> None:
        if self.bandwidth <= 0:
            raise ConfigError("source bandwidth must be positive")
        if self.component not in ("Hz", "Ex", "Ey"):
            raise ConfigError(f"unknown source component {self.component!r}")

    def peak_step(self, dt: float) -> int:
        if self.t0 is not None:
            return int(self.t0)
        return int(math.ceil(4.0 / self.bandwidth / dt))

    def end_time(self, dt: float) -> float:
        return self.peak_step(dt) * dt + 4.0 / self.bandwidth

    def waveform(self, t: float, dt: float) -> float:
        tau = t - self.peak_step(dt) * dt
        env = math.exp(-0.5 * (tau * self.bandwidth) ** 2)
        return self.amplitude * env * math.sin(2.0 * math.pi * self.center_freq * tau)


@dataclass
class SimConfig:
    grid: DielectricGrid
    n_steps: int
    courant: float = 0.5
    pml: PMLParams | None = field(default_factory=PMLParams)
    pml_axes: str = "xy"
    sources: Sequence[SourceSpec] = ()
    probes: Sequence[tuple[float, float]] = ()
    probe_component: Component = "Hz"
    snapshot_stride: int = 0
    snapshot_start: int = 0
    symmetry_x: Parity = "none"
    symmetry_y: Parity = "none"
    energy_stride: int = 16
    threads: int = 1
    max_snapshot_mb: float = DEFAULT_MAX_SNAPSHOT_MB
    allow_unstable: bool = False
    # Hann-windowed running DFT of all three components; the window runs
    # from dft_start (default: analysis start) to the last step.
    dft_freqs: Sequence[float] = ()
    dft_start: int | None = None

    def validate(self) -> None:
        if self.n_steps <= 0:
            raise ConfigError("n_steps must be positive")
        if not 0 < self.courant <= MAX_COURANT + 1e-12 and not self.allow_unstable:
            raise ConfigError(
                f"courant={self.courant} violates the 2D stability bound {MAX_COURANT:.6f}"
            )
        for name in ("symmetry_x", "symmetry_y"):
            if getattr(self, name) not in ("none", "even", "odd"):
                raise ConfigError(f"{name} must be none, even or odd")
        if self.symmetry_x != "none" and abs(self.grid.origin[0]) > 1e-9 * self.grid.dx:
            raise ConfigError("symmetry_x needs the grid to start on the x = 0 mirror plane")
        if self.symmetry_y != "none" and abs(self.grid.origin[1]) > 1e-9 * self.grid.dx:
            raise ConfigError("symmetry_y needs the grid to start on the y = 0 mirror plane")
        for p in self.probes:
            self.grid.index_of(*p)
        for s in self.sources:
            self.grid.index_of(*s.position)
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for f in self.dft_freqs:
            if not f > 0:
                raise ConfigError("dft frequencies must be positive")
        if self.dft_freqs and self.dft_window()[1] - self.dft_window()[0] < 2:
            raise ConfigError("dft window needs at least two steps")
        if self.pml is not None:
            nx, ny = self.grid.shape
            if not set(self.pml_axes) <= {"x", "y"}:
                raise ConfigError("pml_axes must be a subset of 'xy'")
            sides_x = (1 if self.symmetry_x != "none" else 2) * ("x" in self.pml_axes)
            sides_y = (1 if self.symmetry_y != "none" else 2) * ("y" in self.pml_axes)
            if sides_x * self.pml.thickness_cells >= nx or sides_y * self.pml.thickness_cells >= ny:
                raise ConfigError("grid too small for the requested PML thickness")

    @property
    def length_unit(self) -> float:
        return float(self.grid.a) if self.grid.a else 1.0

    def dft_window(self) -> tuple[int, int]:
        start = self.analysis_start_step() if self.dft_start is None else self.dft_start
        return min(max(start, 0), self.n_steps), self.n_steps

    def analysis_start_step(self) -> int:
        """First step after every source window has closed."""
        dt = self.courant * self.grid.dx / self.length_unit
        if not self.sources:
            return 0
        end = max(s.end_time(dt) for s in self.sources)
        return int(math.ceil(end / dt))


@dataclass
class FieldRecord:
    """Time series of one field component at one probe point."""

    dt: float
    samples: np.ndarray
    start_step: int
    position: tuple[float, float] = (0.0, 0.0)
    component: Component = "Hz"
    time_offset: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self.samples)) + self.time_offset) * self.dt

    def analysis_segment(self) -> np.ndarray:
        return self.samples[self.start_step :]

    def to_csv(self, path: str | Path) -> Path:
        t = self.times
        rows = ((k, t[k], self.samples[k]) for k in range(len(self.samples)))
        return _io.write_csv(path, ["step", "t_normalized", "value"], rows)

    @classmethod
    def from_csv(cls, path: str | Path, *, start_step: int = 0,
                 position: tuple[float, float] = (0.0, 0.0), component: Component = "Hz") -> "FieldRecord":
        cols = _io.read_csv_columns(path, ("step", "t_normalized", "value"))
        steps, t = cols["step"], cols["t_normalized"]
        if len(t) < 2:
            raise FDTDError(f"{path}: need at least two samples")
        dt = float((t[-1] - t[0]) / (steps[-1] - steps[0]))
        offset = float(t[0] / dt - steps[0])
        return cls(dt=dt, samples=cols["value"], start_step=start_step, position=tuple(position),
                   component=component, time_offset=round(offset * 2) / 2)


@dataclass
class Snapshot:
    """Full-field capture, co-registered with the dielectric grid cells.

    E is averaged from the cell edges to the centres; Hz is averaged over
    the two half steps bracketing the E time level. ``unfolded`` records
    whether a symmetry-reduced run was mirrored out to the full domain.
    """

    step: int
    Hz: np.ndarray
    Ex: np.ndarray
    Ey: np.ndarray
    time: float = 0.0
    symmetry: tuple[Parity, Parity] = ("none", "none")
    unfolded: bool = False
    origin: tuple[float, float] = (0.0, 0.0)
    dx: float = 1.0
    freq: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.Hz.shape

    def component(self, name: Component) -> np.ndarray:
        return {"Hz": self.Hz, "Ex": self.Ex, "Ey": self.Ey}[name]

    def save(self, path: str | Path, meta: dict | None = None) -> list[Path]:
        base = Path(path)
        out = []
        for name in ("Hz", "Ex", "Ey"):
            info = {
                "kind": "Snapshot",
                "component": name,
                "step": self.step,
                "t_normalized": self.time,
                "symmetry": list(self.symmetry),
                "unfolded": self.unfolded,
                "origin_nm": list(self.origin),
                "dx_nm": self.dx,
                "freq_normalized": self.freq,
            }
            info.update(meta or {})
            out.extend(_io.write_array(base.with_name(f"{base.name}_{name}"), self.component(name), info))
        return out

    @classmethod
    def load(cls, path: str | Path) -> "Snapshot":
        """Read the three component files written by :meth:`save`."""
        base = Path(path)
        arrays = {}
        meta: dict = {}
        for name in ("Hz", "Ex", "Ey"):
            arrays[name], meta = _io.read_array(base.with_name(f"{base.name}_{name}"))
        freq = meta.get("freq_normalized")
        return cls(step=int(meta.get("step", 0)), time=float(meta.get("t_normalized", 0.0)),
                   symmetry=tuple(meta.get("symmetry", ("none", "none"))),
                   unfolded=bool(meta.get("unfolded", False)),
                   origin=tuple(meta.get("origin_nm", (0.0, 0.0))), dx=float(meta.get("dx_nm", 1.0)),
                   freq=None if freq is None else float(freq), **arrays)


class RunResult(NamedTuple):
    records: list[FieldRecord]
    snapshots: list[Snapshot]
    energy: np.ndarray  # columns: step, normalized time, total energy
    phasors: list[Snapshot] = []  # one complex Snapshot per dft frequency


def _parity_sign(p: Parity) -> int:
    return {"even": 1, "odd": -1, "none": 0}[p]


def field_parities(symmetry_x: Parity, symmetry_y: Parity) -> dict[str, tuple[int, int]]:
    """Reflection sign of each component about x = 0 and y = 0 (0: no symmetry).

    Under x -> -x the E-field character ``s`` gives Ey -> s*Ey, Ex -> -s*Ex
    and the pseudo-scalar Hz -> -s*Hz; the y mirror swaps the roles of Ex
    and Ey.
    """
    sx, sy = _parity_sign(symmetry_x), _parity_sign(symmetry_y)
    return {
        "Hz": (-sx, -sy),
        "Ex": (-sx, sy),
        "Ey": (sx, -sy),
    }


def unfold(snapshot: Snapshot) -> Snapshot:
    """Mirror a quadrant/half-domain snapshot out to the full domain."""
    if snapshot.unfolded or snapshot.symmetry == ("none", "none"):
        return snapshot
    par = field_parities(*snapshot.symmetry)
    arrays = {}
    for name in ("Hz", "Ex", "Ey"):
        arr = snapshot.component(name)
        px, py = par[name]
        if px:
            arr = np.concatenate([px * arr[::-1, :], arr], axis=0)
        if py:
            arr = np.concatenate([py * arr[:, ::-1], arr], axis=1)
        arrays[name] = arr
    ox, oy = snapshot.origin
    if par["Hz"][0]:
        ox -= snapshot.shape[0] * snapshot.dx
    if par["Hz"][1]:
        oy -= snapshot.shape[1] * snapshot.dx
    return Snapshot(
        step=snapshot.step,
        time=snapshot.time,
        symmetry=snapshot.symmetry,
        unfolded=True,
        origin=(ox, oy),
        dx=snapshot.dx,
        **arrays,
    )


def unfold_grid(grid: DielectricGrid, symmetry: tuple[Parity, Parity]) -> DielectricGrid:
    """Full-domain grid matching :func:`unfold` of a quadrant run."""
    eps = grid.eps
    ox, oy = grid.origin
    if symmetry[0] != "none":
        eps = np.concatenate([eps[::-1, :], eps], axis=0)
        ox -= grid.eps.shape[0] * grid.dx
    if symmetry[1] != "none":
        eps = np.concatenate([eps[:, ::-1], eps], axis=1)
        oy -= grid.eps.shape[1] * grid.dx
    return DielectricGrid(eps=eps, dx=grid.dx, origin=(ox, oy), n_eff=grid.n_eff, a=grid.a,
                          meta=dict(grid.meta, unfolded=True))


def total_energy(snapshot: Snapshot, grid: DielectricGrid) -> float:
    """Sum of (eps|E|^2 + |H|^2)/2 times cell area (area in units of a^2)."""
    eps = grid.eps
    for arr in (snapshot.Hz, snapshot.Ex, snapshot.Ey):
        if arr.shape != eps.shape:
            raise ValueError(f"field shape {arr.shape} does not match grid {eps.shape}")
    unit = float(grid.a) if grid.a else 1.0
    area = (grid.dx / unit) ** 2
    dens = eps * (np.abs(snapshot.Ex) ** 2 + np.abs(snapshot.Ey) ** 2) + np.abs(snapshot.Hz) ** 2
    return float(0.5 * np.sum(dens) * area)


def _pml_profile(n_cells: int, thickness: int, params: PMLParams, dx: float,
                 low: bool, high: bool, staggered: bool) -> np.ndarray:
    """Loss rate at the integer (edge) or half-integer (centre) positions."""
    if staggered:
        pos = np.arange(n_cells) + 0.5
    else:
        pos = np.arange(n_cells + 1, dtype=float)
    sigma_max = params.sigma_max_scale * 0.8 * (params.grading_order + 1.0) / dx
    depth = np.zeros_like(pos)
    if low:
        depth = np.maximum(depth, thickness - pos)
    if high:
        depth = np.maximum(depth, pos - (n_cells - thickness))
    depth = np.clip(depth, 0.0, thickness) / thickness
    return sigma_max * depth**params.grading_order


def _decay_coeffs(sigma: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    a = np.exp(-sigma * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(sigma > 0, (1.0 - a) / np.where(sigma > 0, sigma, 1.0), dt)
    return a, b


class Yee2D:
    """Field arrays and precomputed update coefficients for one run."""

    def __init__(self, eps: np.ndarray, dx: float, dt: float, *,
                 pml: PMLParams | None = None,
                 pml_axes: str = "xy",
                 symmetry: tuple[Parity, Parity] = ("none", "none"),
                 threads: int = 1,
                 eps_edges: tuple[np.ndarray, np.ndarray] | None = None):
        self.eps = np.asarray(eps, dtype=float)
        nx, ny = self.eps.shape
        self.nx, self.ny = nx, ny
        self.dx, self.dt = float(dx), float(dt)
        self.symmetry = symmetry
        self.mirror_x = symmetry[0] != "none"
        self.mirror_y = symmetry[1] != "none"
        par = field_parities(*symmetry)
        self.hz_px, self.hz_py = par["Hz"]

        self.hzx = np.zeros((nx, ny))
        self.hzy = np.zeros((nx, ny))
        self.hz = np.zeros((nx, ny))
        self.ex = np.zeros((nx, ny + 1))
        self.ey = np.zeros((nx + 1, ny))
        self.n = 0  # completed steps; E is at time n*dt, Hz at (n - 1/2)*dt

        sx_c, sy_c = np.zeros(nx), np.zeros(ny)
        sx_e, sy_e = np.zeros(nx + 1), np.zeros(ny + 1)
        if pml is not None and "x" in pml_axes:
            t = pml.thickness_cells
            sx_c = _pml_profile(nx, t, pml, dx, not self.mirror_x, True, True)
            sx_e = _pml_profile(nx, t, pml, dx, not self.mirror_x, True, False)
        if pml is not None and "y" in pml_axes:
            t = pml.thickness_cells
            sy_c = _pml_profile(ny, t, pml, dx, not self.mirror_y, True, True)
            sy_e = _pml_profile(ny, t, pml, dx, not self.mirror_y, True, False)
        self.sigma_x_centre, self.sigma_y_centre = sx_c, sy_c

        ahx, bhx = _decay_coeffs(sx_c, dt)
        ahy, bhy = _decay_coeffs(sy_c, dt)
        aex, bex = _decay_coeffs(sx_e, dt)
        aey, bey = _decay_coeffs(sy_e, dt)
        self.ahx = ahx[:, None]
        self.bhx = (bhx / dx)[:, None] * np.ones((1, ny))
        self.ahy = ahy[None, :]
        self.bhy = (bhy / dx)[None, :] * np.ones((nx, 1))

        if eps_edges is not None:
            eps_ex = np.asarray(eps_edges[0], dtype=float)
            eps_ey = np.asarray(eps_edges[1], dtype=float)
            if eps_ex.shape != (nx, ny + 1) or eps_ey.shape != (nx + 1, ny):
                raise ConfigError("edge permittivity maps do not match the cell grid")
        else:
            # permittivity on the edges: mean of the two adjacent cells
            eps_ex = np.empty((nx, ny + 1))
            eps_ex[:, 1:-1] = 0.5 * (self.eps[:, 1:] + self.eps[:, :-1])
            eps_ex[:, 0] = self.eps[:, 0]
            eps_ex[:, -1] = self.eps[:, -1]
            eps_ey = np.empty((nx + 1, ny))
            eps_ey[1:-1, :] = 0.5 * (self.eps[1:, :] + self.eps[:-1, :])
            eps_ey[0, :] = self.eps[0, :]
            eps_ey[-1, :] = self.eps[-1, :]
        self.eps_ex, self.eps_ey = eps_ex, eps_ey

        self.aey = np.broadcast_to(aey[None, :], (nx, ny + 1)).copy()
        self.bey = bey[None, :] / (eps_ex * dx)
        self.aex = np.broadcast_to(aex[:, None], (nx + 1, ny)).copy()
        self.bex = bex[:, None] / (eps_ey * dx)

        # which boundary edges are updated (mirror walls whose tangential E survives)
        self.update_ex_low = self.mirror_y and self.hz_py == -1
        self.update_ey_low = self.mirror_x and self.hz_px == -1
        # energy weights: mirror-plane edges are shared with the image half
        self.w_ex = np.ones((nx, ny + 1))
        self.w_ey = np.ones((nx + 1, ny))
        if self.mirror_y:
            self.w_ex[:, 0] = 0.5
        if self.mirror_x:
            self.w_ey[0, :] = 0.5

        self.threads = max(1, int(threads))
        self._bands = self._make_bands(nx, self.threads)
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self._ex_prev = np.zeros_like(self.ex)
        self._ey_prev = np.zeros_like(self.ey)
        self._prev_valid = -1

    @staticmethod
    def _make_bands(nx: int, k: int) -> list[tuple[int, int]]:
        edges = np.linspace(0, nx, min(k, nx) + 1).round().astype(int)
        return [(int(edges[i]), int(edges[i + 1])) for i in range(len(edges) - 1)]

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # -- update kernels on a band of x-rows [i0, i1) -------------------------
    def _update_h(self, i0: int, i1: int) -> None:
        s = slice(i0, i1)
        dey = self.ey[i0 + 1 : i1 + 1, :] - self.ey[i0:i1, :]
        self.hzx[s] *= self.ahx[s]
        self.hzx[s] -= self.bhx[s] * dey
        dex = self.ex[s, 1:] - self.ex[s, :-1]
        self.hzy[s] *= self.ahy
        self.hzy[s] += self.bhy[s] * dex
        np.add(self.hzx[s], self.hzy[s], out=self.hz[s])

    def _update_e(self, i0: int, i1: int) -> None:
        s = slice(i0, i1)
        hz = self.hz
        # Ex on interior horizontal edges
        self.ex[s, 1:-1] *= self.aey[s, 1:-1]
        self.ex[s, 1:-1] += self.bey[s, 1:-1] * (hz[s, 1:] - hz[s, :-1])
        if self.update_ex_low:
            self.ex[s, 0] *= self.aey[s, 0]
            self.ex[s, 0] += self.bey[s, 0] * 2.0 * hz[s, 0]
        # Ey on interior vertical edges with index in [max(i0,1), min(i1, nx-1)]
        lo, hi = max(i0, 1), i1
        if hi > lo:
            e = slice(lo, hi)
            self.ey[e] *= self.aex[e]
            self.ey[e] -= self.bex[e] * (hz[lo:hi, :] - hz[lo - 1 : hi - 1, :])
        if i0 == 0 and self.update_ey_low:
            self.ey[0] *= self.aex[0]
            self.ey[0] -= self.bex[0] * 2.0 * hz[0]

    def _run_bands(self, fn) -> None:
        if self._pool is None:
            fn(0, self.nx)
        else:
            list(self._pool.map(lambda b: fn(*b), self._bands))

    def step(self, sources: Sequence[tuple[SourceSpec, tuple[int, int]]] = (),
             keep_previous: bool = False) -> None:
        """Advance H by one step (to n+1/2), then E (to n+1).

        ``keep_previous`` retains E^n so that :meth:`energy` and
        :meth:`centred_fields` can be evaluated after the step.
        """
        self._run_bands(self._update_h)
        t_h = (self.n + 0.5) * self.dt
        for src, (i, j) in sources:
            if src.component == "Hz":
                val = src.waveform(t_h, self.dt) * self.dt
                self.hzx[i, j] += val
                self.hz[i, j] += val
        if keep_previous:
            np.copyto(self._ex_prev, self.ex)
            np.copyto(self._ey_prev, self.ey)
            self._prev_valid = self.n + 1
        self._run_bands(self._update_e)
        t_e = (self.n + 1) * self.dt
        for src, (i, j) in sources:
            if src.component == "Ex":
                self.ex[i, j] += src.waveform(t_e, self.dt) * self.dt
            elif src.component == "Ey":
                self.ey[i, j] += src.waveform(t_e, self.dt) * self.dt
        self.n += 1

    def _require_previous(self) -> None:
        if self._prev_valid != self.n:
            raise FDTDError("previous E level not kept; call step(keep_previous=True)")

    def energy(self) -> float:
        """Discrete invariant of the lossless Yee scheme at time (n - 1/2) dt.

        ``Hz^(n-1/2) . Hz^(n-1/2) + eps E^(n-1) . E^n`` summed with cell
        area; exactly conserved in a closed lossless box.
        """
        self._require_previous()
        ue = np.sum(self.w_ex * self.eps_ex * self.ex * self._ex_prev)
        ue += np.sum(self.w_ey * self.eps_ey * self.ey * self._ey_prev)
        uh = np.sum(self.hz * self.hz)
        return 0.5 * float(ue + uh) * self.dx**2

    def finite(self) -> bool:
        return bool(np.isfinite(self.hz).all() and np.isfinite(self.ex).all() and np.isfinite(self.ey).all())

    def centred_fields(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Hz, Ex, Ey at cell centres, all at the Hz time level (n - 1/2) dt."""
        self._require_previous()
        ex = 0.5 * (self.ex + self._ex_prev)
        ey = 0.5 * (self.ey + self._ey_prev)
        ex = 0.5 * (ex[:, 1:] + ex[:, :-1])
        ey = 0.5 * (ey[1:, :] + ey[:-1, :])
        return self.hz.copy(), ex, ey


def step(solver: Yee2D, sources: Sequence[tuple[SourceSpec, tuple[int, int]]] = ()) -> Yee2D:
    """Advance ``solver`` by one leapfrog step; raises on non-finite fields."""
    solver.step(sources)
    if not solver.finite():
        raise DivergenceError(solver.n)
    return solver


def _probe_value(solver: Yee2D, comp: Component, i: int, j: int) -> float:
    if comp == "Hz":
        return solver.hz[i, j]
    if comp == "Ex":
        return 0.5 * (solver.ex[i, j] + solver.ex[i, j + 1])
    return 0.5 * (solver.ey[i, j] + solver.ey[i + 1, j])


def run(config: SimConfig, check_every: int = 64) -> RunResult:
    """Step the configured simulation and collect probes, snapshots, energy."""
    config.validate()
    grid = config.grid
    unit = config.length_unit
    dx = grid.dx / unit
    dt = config.courant * dx
    n_snap = 0
    if config.snapshot_stride > 0:
        n_snap = len(range(config.snapshot_start, config.n_steps, config.snapshot_stride))
    snap_mb = n_snap * 3 * grid.eps.size * 8 / 2**20
    if snap_mb > config.max_snapshot_mb:
        raise FDTDError(
            f"{n_snap} snapshots need {snap_mb:.1f} MB, above the {config.max_snapshot_mb:.1f} MB cap"
        )
    solver = Yee2D(grid.eps, dx, dt, pml=config.pml, pml_axes=config.pml_axes,
                   symmetry=(config.symmetry_x, config.symmetry_y), threads=config.threads,
                   eps_edges=None if grid.eps_ex is None or grid.eps_ey is None
                   else (grid.eps_ex, grid.eps_ey))
    sources = [(s, _source_index(grid, s)) for s in config.sources]
    probes = [grid.index_of(*p) for p in config.probes]
    comp = config.probe_component
    samples = np.zeros((len(probes), config.n_steps))
    energy_rows = []
    snapshots: list[Snapshot] = []
    dft = _DFTAccumulator(config, solver, dt) if config.dft_freqs else None
    try:
        # overflow is reported by the periodic finiteness check, not by numpy
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(config.n_steps):
                want_energy = bool(config.energy_stride) and n % config.energy_stride == 0
                want_snap = config.snapshot_stride > 0 and n >= config.snapshot_start and \
                    (n - config.snapshot_start) % config.snapshot_stride == 0
                solver.step(sources, keep_previous=want_energy or want_snap)
                if (n + 1) % check_every == 0 or n + 1 == config.n_steps:
                    if not solver.finite():
                        raise DivergenceError(solver.n)
                for k, (i, j) in enumerate(probes):
                    samples[k, n] = _probe_value(solver, comp, i, j)
                if dft is not None:
                    dft.add(n)
                if want_energy:
                    energy_rows.append((n, (n + 0.5) * dt, solver.energy()))
                if want_snap:
                    hz, ex, ey = solver.centred_fields()
                    snapshots.append(Snapshot(step=n, Hz=hz, Ex=ex, Ey=ey,
                                              time=(n + 0.5) * dt,
                                              symmetry=(config.symmetry_x, config.symmetry_y),
                                              origin=grid.origin, dx=grid.dx))
    finally:
        solver.close()
    start = config.analysis_start_step()
    offset = 0.5 if comp == "Hz" else 1.0
    records = [
        FieldRecord(dt=dt, samples=samples[k], start_step=start,
                    position=tuple(config.probes[k]), component=comp, time_offset=offset)
        for k in range(len(probes))
    ]
    phasors = dft.snapshots(grid) if dft is not None else []
    return RunResult(records, snapshots, np.asarray(energy_rows, dtype=float).reshape(-1, 3), phasors)


class _DFTAccumulator:
    """Running Fourier sums of the raw Yee fields.

    Hz after step n lives at (n + 1/2) dt and E at (n + 1) dt; each is
    phased at its own time so the result refers to a common clock. E is
    moved to cell centres only at the end since the average is linear.
    """

    def __init__(self, config: SimConfig, solver: Yee2D, dt: float):
        self.solver = solver
        self.dt = dt
        self.start, self.stop = config.dft_window()
        self.freqs = [float(f) for f in config.dft_freqs]
        self.symmetry = (config.symmetry_x, config.symmetry_y)
        self.hz = [np.zeros(solver.hz.shape, complex) for _ in self.freqs]
        self.ex = [np.zeros(solver.ex.shape, complex) for _ in self.freqs]
        self.ey = [np.zeros(solver.ey.shape, complex) for _ in self.freqs]
        self.wsum = 0.0

    def add(self, n: int) -> None:
        if not self.start <= n < self.stop:
            return
        length = self.stop - self.start
        w = math.sin(math.pi * (n - self.start) / (length - 1)) ** 2 if length > 1 else 1.0
        if w == 0.0:
            return
        self.wsum += w
        s = self.solver
        for k, f in enumerate(self.freqs):
            om = 2.0 * math.pi * f
            ph_h = w * complex(math.cos(om * (n + 0.5) * self.dt), -math.sin(om * (n + 0.5) * self.dt))
            ph_e = w * complex(math.cos(om * (n + 1.0) * self.dt), -math.sin(om * (n + 1.0) * self.dt))
            self.hz[k] += ph_h * s.hz
            self.ex[k] += ph_e * s.ex
            self.ey[k] += ph_e * s.ey

    def snapshots(self, grid: DielectricGrid) -> list[Snapshot]:
        norm = 2.0 / self.wsum if self.wsum else 0.0
        out = []
        for k, f in enumerate(self.freqs):
            ex = 0.5 * (self.ex[k][:, 1:] + self.ex[k][:, :-1])
            ey = 0.5 * (self.ey[k][1:, :] + self.ey[k][:-1, :])
            out.append(Snapshot(step=self.stop - 1, Hz=norm * self.hz[k], Ex=norm * ex, Ey=norm * ey,
                                time=0.0, symmetry=self.symmetry, origin=grid.origin,
                                dx=grid.dx, freq=f))
        return out


def _source_index(grid: DielectricGrid, src: SourceSpec) -> tuple[int, int]:
    i, j = grid.index_of(*src.position)
    return i, j
