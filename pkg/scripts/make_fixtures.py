"""Regenerate the synthetic fixtures under configs/fixtures (deterministic)."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from gradedcavity import io as _io
from gradedcavity.fdtd import Snapshot
from gradedcavity.geometry import DielectricGrid
from gradedcavity.spectra import lorentzian

OUT = Path(__file__).resolve().parent.parent / "configs" / "fixtures"


def spectrum() -> None:
    lam = np.linspace(1297.5, 1299.5, 401)
    power = lorentzian(lam, 1298.5, 0.100, 1.0, 0.02)
    _io.write_csv(OUT / "spectrum_1298p5.csv", ("wavelength_nm", "power_arb"), zip(lam, power))


def ll_curve() -> None:
    pump = np.linspace(100.0, 900.0, 33)
    line = np.where(pump < 360.0, 0.05 * pump, 0.05 * 360.0 + (pump - 360.0))
    background = np.where(pump < 360.0, 0.2 * pump, 0.2 * 360.0 + 0.05 * (pump - 360.0))
    _io.write_csv(OUT / "ll_knee360.csv", ("pump_uW", "line_arb", "background_arb"),
                  zip(pump, line, background))


def polarization() -> None:
    ang = np.arange(0.0, 361.0, 15.0)
    th = np.radians(ang)
    p = 20.0 * np.cos(th) ** 2 + 1.0 * np.sin(th) ** 2
    _io.write_csv(OUT / "polarization.csv", ("angle_deg", "power_arb"), zip(ang, p))


def envelope() -> None:
    _io.write_json(OUT / "envelope.json",
                   {"sigma_x_nm": 530.0, "sigma_y_nm": 670.0, "center_nm": [0.0, 0.0]})


def odd_snapshot() -> None:
    a, n = 305.0, 64
    dx = a / 16
    origin = (-n / 2 * dx, -n / 2 * dx)
    grid = DielectricGrid(eps=np.full((n, n), 3.0665**2), dx=dx, origin=origin, n_eff=3.0665, a=a)
    x = origin[0] + (np.arange(n) + 0.5) * dx
    X, Y = np.meshgrid(x, x, indexing="ij")
    env = np.exp(-(X**2 + Y**2) / (2 * (1.5 * a) ** 2))
    # odd about both axes: no k = 0 content by construction
    ex = env * np.sin(math.pi * X / a) * np.sin(math.pi * Y / a)
    ey = env * np.sin(2 * math.pi * X / a) * np.sin(math.pi * Y / a) * 0.3
    hz = env * np.cos(math.pi * X / a) * np.cos(math.pi * Y / a)
    snap = Snapshot(step=0, Hz=hz, Ex=ex, Ey=ey, origin=origin, dx=dx, freq=0.29)
    snap.save(OUT / "odd_mode")
    grid.save(OUT / "odd_mode_grid")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    spectrum()
    ll_curve()
    polarization()
    envelope()
    odd_snapshot()
