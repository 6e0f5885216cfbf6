"""Graded square-lattice hole patterns and their rasterized permittivity maps.

Lengths are in nanometres throughout this module. The cavity centre is the
origin: a lattice with an even number of rows has its two central rows at
y = +-a/2 (the mode sits in the dielectric between them); an odd count puts a
row on the axis. Columns follow the same rule along x.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import io as _io

#: Raster sub-samples per cell edge for area-average smoothing.
SUBSAMPLES = 16
#: Default memory cap for a rasterized grid, in megabytes.
DEFAULT_MAX_MEM_MB = 2048.0

Smoothing = Literal["staircase", "area-average"]
Polarization = Literal["TE", "TM"]


class GeometryError(ValueError):
    """Invalid lattice or raster request."""


class GridTooLargeError(GeometryError):
    """Requested raster would exceed the configured memory cap."""


@dataclass(frozen=True)
class LatticeSpec:
    """Parametric graded square lattice.

    The hole radius at site (x, y) is ``f(|x|/X) * g(|y|/Y) / c`` with
    ``f(u) = c + (edge_x - c) u**p`` and ``g`` the analogous y profile, where
    ``X = n_cols*a/2`` and ``Y = n_rows*a/2`` are the half-extents of the
    lattice footprint, ``c`` is ``r_over_a_center`` and ``p`` is
    ``grade_exponent``. Radii are returned in units of ``a``.
    """

    a: float
    n_rows: int
    n_cols: int
    r_over_a_center: float
    r_over_a_edge_x: float
    r_over_a_edge_y: float
    grade_exponent: float = 2.0
    d: float = 252.0
    n_slab: float = 3.4
    n_clad: float = 1.0
    wavelength: float = 1300.0
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise GeometryError("lattice constant a must be positive")
        if self.n_rows < 3 or self.n_cols < 3:
            raise GeometryError("lattice needs at least 3 rows and 3 columns")
        for name in ("r_over_a_center", "r_over_a_edge_x", "r_over_a_edge_y"):
            value = getattr(self, name)
            if not 0.0 < value < 0.5:
                raise GeometryError(f"{name}={value} outside (0, 0.5)")
        if self.grade_exponent <= 0:
            raise GeometryError("grade_exponent must be positive")
        if not self.n_slab > self.n_clad >= 1.0:
            raise GeometryError("need n_slab > n_clad >= 1")
        if self.d <= 0 or self.wavelength <= 0:
            raise GeometryError("slab thickness and wavelength must be positive")

    @property
    def half_extent(self) -> tuple[float, float]:
        """Half-width and half-height of the lattice footprint (nm)."""
        return self.n_cols * self.a / 2.0, self.n_rows * self.a / 2.0

    @property
    def footprint(self) -> tuple[float, float]:
        return self.n_cols * self.a, self.n_rows * self.a

    def r_over_a(self, x: np.ndarray | float, y: np.ndarray | float) -> np.ndarray:
        """Graded r/a at positions (x, y) measured from the cavity centre."""
        x_max, y_max = self.half_extent
        c = self.r_over_a_center
        p = self.grade_exponent
        u = np.abs(np.asarray(x, dtype=float)) / x_max
        v = np.abs(np.asarray(y, dtype=float)) / y_max
        fx = c + (self.r_over_a_edge_x - c) * u**p
        gy = c + (self.r_over_a_edge_y - c) * v**p
        return fx * gy / c

    def site_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        xs = (np.arange(self.n_cols) - (self.n_cols - 1) / 2.0) * self.a
        ys = (np.arange(self.n_rows) - (self.n_rows - 1) / 2.0) * self.a
        return xs, ys

    def effective_index(self, polarization: Polarization = "TE") -> float:
        return effective_index(self.d, self.n_slab, self.n_clad, self.wavelength, polarization)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["offset"] = list(self.offset)
        return out

    def digest(self) -> str:
        return _io.sha256_hex(_io.canonical_json(self.to_dict()))


@dataclass(frozen=True)
class HoleList:
    """Concrete hole set: rows of (x_nm, y_nm, r_nm)."""

    holes: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.holes, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "holes", arr)

    def __len__(self) -> int:
        return len(self.holes)

    @property
    def x(self) -> np.ndarray:
        return self.holes[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.holes[:, 1]

    @property
    def r(self) -> np.ndarray:
        return self.holes[:, 2]

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the union of hole disks."""
        return (
            float(np.min(self.x - self.r)),
            float(np.max(self.x + self.r)),
            float(np.min(self.y - self.r)),
            float(np.max(self.y + self.r)),
        )

    def to_csv(self, path: str | Path) -> Path:
        return _io.write_csv(path, ["x_nm", "y_nm", "r_nm"], self.holes.tolist())

    @classmethod
    def from_csv(cls, path: str | Path) -> "HoleList":
        cols = _io.read_csv_columns(path, ["x_nm", "y_nm", "r_nm"])
        return cls(np.column_stack([cols["x_nm"], cols["y_nm"], cols["r_nm"]]))


@dataclass
class DielectricGrid:
    """Relative permittivity sampled on a uniform square grid.

    ``eps[i, j]`` is cell (i, j) with i along x and j along y. ``origin`` is
    the lower-left corner of cell (0, 0); cell centres sit at
    ``origin + (i + 1/2, j + 1/2) * dx``.

    ``eps_ex`` (shape (nx, ny+1)) and ``eps_ey`` (shape (nx+1, ny)) are the
    optional effective permittivities seen by Ex and Ey on the Yee edges.
    When absent the solver averages neighbouring cells. They are not
    written by :meth:`save`; analysis only needs the cell map.
    """

    eps: np.ndarray
    dx: float
    origin: tuple[float, float]
    n_eff: float = 1.0
    a: float | None = None
    meta: dict = field(default_factory=dict)
    eps_ex: np.ndarray | None = None
    eps_ey: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.eps.shape

    @property
    def extent(self) -> tuple[float, float]:
        return self.eps.shape[0] * self.dx, self.eps.shape[1] * self.dx

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.eps.shape[0]) + 0.5) * self.dx

    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.eps.shape[1]) + 0.5) * self.dx

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        """Cell containing point (x, y)."""
        i = int(math.floor((x - self.origin[0]) / self.dx))
        j = int(math.floor((y - self.origin[1]) / self.dx))
        if not (0 <= i < self.eps.shape[0] and 0 <= j < self.eps.shape[1]):
            raise GeometryError(f"point ({x}, {y}) lies outside the grid")
        return i, j

    def quadrant(self) -> "DielectricGrid":
        """The x >= 0, y >= 0 quarter, used for mirror-symmetric FDTD runs.

        The cavity axes must coincide with cell boundaries.
        """
        i0 = -self.origin[0] / self.dx
        j0 = -self.origin[1] / self.dx
        if abs(i0 - round(i0)) > 1e-9 or abs(j0 - round(j0)) > 1e-9:
            raise GeometryError("cavity axes are not aligned with cell boundaries")
        return self.crop(int(round(i0)), int(round(j0)), quadrant=True)

    def crop(self, i0: int = 0, j0: int = 0, **meta) -> "DielectricGrid":
        """Cells with i >= i0 and j >= j0 (edge maps follow along)."""
        ox = self.origin[0] + i0 * self.dx
        oy = self.origin[1] + j0 * self.dx
        return DielectricGrid(
            eps=self.eps[i0:, j0:].copy(),
            dx=self.dx,
            origin=(0.0 if abs(ox) < 1e-9 * self.dx else ox, 0.0 if abs(oy) < 1e-9 * self.dx else oy),
            n_eff=self.n_eff,
            a=self.a,
            meta=dict(self.meta, **meta),
            eps_ex=None if self.eps_ex is None else self.eps_ex[i0:, j0:].copy(),
            eps_ey=None if self.eps_ey is None else self.eps_ey[i0:, j0:].copy(),
        )

    def sidecar(self) -> dict:
        return {
            "kind": "DielectricGrid",
            "dx_nm": self.dx,
            "origin_nm": list(self.origin),
            "extent_nm": list(self.extent),
            "n_eff": self.n_eff,
            "a_nm": self.a,
            "axes": ["x", "y"],
            **self.meta,
        }

    def save(self, path: str | Path) -> tuple[Path, Path]:
        return _io.write_array(path, self.eps, self.sidecar())

    @classmethod
    def load(cls, path: str | Path) -> "DielectricGrid":
        eps, meta = _io.read_array(path)
        known = {"kind", "dx_nm", "origin_nm", "extent_nm", "n_eff", "a_nm", "axes",
                 "dtype", "order", "shape", "complex_interleaved", "data_file"}
        return cls(
            eps=eps,
            dx=float(meta["dx_nm"]),
            origin=tuple(meta["origin_nm"]),
            n_eff=float(meta["n_eff"]),
            a=meta.get("a_nm"),
            meta={k: v for k, v in meta.items() if k not in known},
        )


def build_graded_lattice(spec: LatticeSpec) -> HoleList:
    """Place every hole of the graded lattice and assign its radius."""
    xs, ys = spec.site_coordinates()
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    r_over_a = spec.r_over_a(gx, gy)
    worst = float(np.max(r_over_a))
    if worst >= 0.5:
        raise GeometryError(
            f"graded r/a reaches {worst:.4f} >= 0.5; neighbouring holes would merge"
        )
    ox, oy = spec.offset
    holes = np.column_stack(
        [gx.ravel() + ox, gy.ravel() + oy, (r_over_a * spec.a).ravel()]
    )
    return HoleList(holes)


def rasterize(
    holes: HoleList,
    spec: LatticeSpec,
    dx: float,
    smoothing: Smoothing = "area-average",
    *,
    pad: float | None = None,
    n_eff: float | None = None,
    max_mem_mb: float = DEFAULT_MAX_MEM_MB,
) -> DielectricGrid:
    """Rasterize ``holes`` onto a grid of pitch ``dx`` centred on the cavity.

    The background is the unpatterned slab at ``n_eff**2`` (computed from
    ``spec`` when not given); holes are air. ``pad`` extends the grid beyond
    the lattice footprint on every side (default ``2a``). The cavity axes fall
    on cell boundaries so the grid has exact mirror symmetry whenever the hole
    list does.

    Area-average smoothing also fills the Yee edge maps with the diagonal
    anisotropic average ``1/eps = n^2 <1/eps> + (1 - n^2)/<eps>`` over a
    cell-sized box around each edge, ``n`` being the component of the hole
    boundary normal along the edge's field. The field component normal to
    an interface thus sees the harmonic mean and the tangential one the
    arithmetic mean, which keeps the resonance error close to second order
    in dx.
    """
    if dx <= 0 or dx > spec.a / 10.0 + 1e-12:
        raise GeometryError(f"dx={dx} nm must satisfy 0 < dx <= a/10 = {spec.a / 10:.4g} nm")
    if smoothing not in ("staircase", "area-average"):
        raise GeometryError(f"unknown smoothing {smoothing!r}")
    if n_eff is None:
        n_eff = spec.effective_index("TE")
    pad = 2.0 * spec.a if pad is None else float(pad)
    half_w, half_h = spec.half_extent
    bx = max(half_w, *np.abs([*holes.bounding_box()[:2]])) + pad
    by = max(half_h, *np.abs([*holes.bounding_box()[2:]])) + pad
    nx_half = int(math.ceil(bx / dx - 1e-9))
    ny_half = int(math.ceil(by / dx - 1e-9))
    nx, ny = 2 * nx_half, 2 * ny_half
    need_mb = nx * ny * 8 / 2**20
    if smoothing == "area-average":
        need_mb *= 4  # coverage accumulator and the two edge maps
    if need_mb > max_mem_mb:
        raise GridTooLargeError(
            f"grid {nx}x{ny} cells needs {need_mb:.1f} MB, above the {max_mem_mb:.1f} MB cap"
        )
    origin = (-nx_half * dx, -ny_half * dx)
    air, _ = _air_coverage(holes, nx, ny, dx, origin, smoothing)
    eps_bg = n_eff**2
    eps = eps_bg + (1.0 - eps_bg) * air
    eps_ex = eps_ey = None
    if smoothing == "area-average":
        # Ex edges are boxes of a grid shifted by -dx/2 in y; Ey likewise in x
        fx, nxx = _air_coverage(holes, nx, ny + 1, dx, (origin[0], origin[1] - dx / 2), smoothing, axis=0)
        fy, nyy = _air_coverage(holes, nx + 1, ny, dx, (origin[0] - dx / 2, origin[1]), smoothing, axis=1)
        eps_ex = _anisotropic_average(fx, nxx, eps_bg)
        eps_ey = _anisotropic_average(fy, nyy, eps_bg)
    meta = {
        "smoothing": smoothing,
        "spec_digest": spec.digest(),
        "grade_profile": "multiplicative power law (approximate; published grade not tabulated)",
        "reduction": "2D effective index, fundamental TE slab mode",
    }
    return DielectricGrid(eps=eps, dx=dx, origin=origin, n_eff=n_eff, a=spec.a, meta=meta,
                          eps_ex=eps_ex, eps_ey=eps_ey)


def _anisotropic_average(air: np.ndarray, normal_sq: np.ndarray, eps_bg: float) -> np.ndarray:
    mean = eps_bg + (1.0 - eps_bg) * air
    mean_inv = (1.0 - air) / eps_bg + air
    return 1.0 / (normal_sq * mean_inv + (1.0 - normal_sq) / mean)


def _air_coverage(
    holes: HoleList,
    nx: int,
    ny: int,
    dx: float,
    origin: tuple[float, float],
    smoothing: Smoothing,
    axis: int | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Air coverage per cell; with ``axis`` also n_axis^2 of the boundary normal."""
    cover = np.zeros((nx, ny))
    normal_sq = np.zeros((nx, ny)) if axis is not None else None
    if smoothing == "staircase":
        offsets = np.array([0.5])
    else:
        offsets = (np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES
    for hx, hy, hr in holes.holes:
        i0 = max(int(math.floor((hx - hr - origin[0]) / dx)), 0)
        i1 = min(int(math.floor((hx + hr - origin[0]) / dx)) + 1, nx)
        j0 = max(int(math.floor((hy - hr - origin[1]) / dx)), 0)
        j1 = min(int(math.floor((hy + hr - origin[1]) / dx)) + 1, ny)
        if i0 >= i1 or j0 >= j1:
            continue
        # sample coordinates relative to the hole centre, shape (cells, sub)
        sx = origin[0] + (np.arange(i0, i1)[:, None] + offsets[None, :]) * dx - hx
        sy = origin[1] + (np.arange(j0, j1)[:, None] + offsets[None, :]) * dx - hy
        inside = (sx[:, None, :, None] ** 2 + sy[None, :, None, :] ** 2) < hr * hr
        frac = inside.mean(axis=(2, 3))
        block = cover[i0:i1, j0:j1]
        if normal_sq is not None:
            # normal from the hole centre to the cell centre, kept where this hole dominates
            cx = origin[0] + (np.arange(i0, i1) + 0.5) * dx - hx
            cy = origin[1] + (np.arange(j0, j1) + 0.5) * dx - hy
            r2 = cx[:, None] ** 2 + cy[None, :] ** 2
            comp = (cx[:, None] if axis == 0 else cy[None, :]) ** 2
            with np.errstate(invalid="ignore", divide="ignore"):
                n2 = np.where(r2 > 0, comp / r2, 0.5)
            nblock = normal_sq[i0:i1, j0:j1]
            np.copyto(nblock, n2, where=frac > block)
        np.maximum(block, frac, out=block)
    return cover, normal_sq


def air_fill_fraction(grid: DielectricGrid) -> float:
    """Fraction of the grid area occupied by air, inferred from eps."""
    eps_bg = grid.n_eff**2
    return float(np.mean((eps_bg - grid.eps) / (eps_bg - 1.0)))


def _slab_terms(n: float, n_slab: float, n_clad: float, k0: float):
    kappa = k0 * math.sqrt(max(n_slab**2 - n**2, 0.0))
    gamma = k0 * math.sqrt(max(n**2 - n_clad**2, 0.0))
    return kappa, gamma


def effective_index(
    d: float,
    n_slab: float,
    n_clad: float,
    wavelength: float,
    polarization: Polarization = "TE",
    rtol: float = 1e-10,
) -> float:
    """Modal index of the fundamental guided mode of a symmetric slab.

    Solves ``kappa*d/2 = atan(rho*gamma/kappa)`` by bisection, with
    ``rho = 1`` for TE and ``(n_slab/n_clad)**2`` for TM.
    """
    if not n_slab > n_clad:
        raise GeometryError("need n_slab > n_clad")
    if d <= 0 or wavelength <= 0:
        raise GeometryError("thickness and wavelength must be positive")
    if polarization not in ("TE", "TM"):
        raise GeometryError(f"unknown polarization {polarization!r}")
    k0 = 2.0 * math.pi / wavelength
    rho = 1.0 if polarization == "TE" else (n_slab / n_clad) ** 2

    def mismatch(n: float) -> float:
        kappa, gamma = _slab_terms(n, n_slab, n_clad, k0)
        if kappa == 0.0:
            return -math.pi / 2
        return kappa * d / 2.0 - math.atan(rho * gamma / kappa)

    lo, hi = n_clad, n_slab  # mismatch(lo) > 0 > mismatch(hi)
    for _ in range(200):
        if hi - lo <= rtol * lo:
            break
        mid = 0.5 * (lo + hi)
        if mismatch(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
