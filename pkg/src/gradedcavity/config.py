"""INI configuration dialect shared by every CLI subcommand.

Keys carry their unit in the name (``a_nm``, ``tau_sp_s``). Unknown
sections or keys are refused so that typos cannot silently fall back to a
default. Repeated sections such as sources use a dotted suffix:
``[source.1]``, ``[source.2]``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from . import io as _io


class ConfigError(ValueError):
    """Invalid or incomplete configuration (CLI exit status 2)."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "yes", "true", "on"):
        return True
    if low in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _points(text: str) -> list[tuple[float, float]]:
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        vals = _floats(chunk)
        if len(vals) != 2:
            raise ValueError(f"point {chunk.strip()!r} needs exactly two numbers")
        out.append((vals[0], vals[1]))
    return out


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None
    required: bool = False


REQ = True

SCHEMA: dict[str, dict[str, Key]] = {
    "lattice": {
        "a_nm": Key(float, required=REQ),
        "n_rows": Key(int, required=REQ),
        "n_cols": Key(int, required=REQ),
        "r_over_a_center": Key(float, required=REQ),
        "r_over_a_edge_x": Key(float, required=REQ),
        "r_over_a_edge_y": Key(float, required=REQ),
        "grade_exponent": Key(float, 2.0),
        "d_nm": Key(float, 252.0),
        "n_slab": Key(float, 3.4),
        "n_clad": Key(float, 1.0),
        "wavelength_nm": Key(float, 1300.0),
        "offset_x_nm": Key(float, 0.0),
        "offset_y_nm": Key(float, 0.0),
    },
    "raster": {
        "dx_nm": Key(float, required=REQ),
        "smoothing": Key(str, "area-average"),
        "pad_nm": Key(_optional_float, None),
        "n_eff": Key(_optional_float, None),
    },
    "uniform": {
        "width_nm": Key(float, required=REQ),
        "height_nm": Key(float, required=REQ),
        "dx_nm": Key(float, required=REQ),
        "a_nm": Key(float, required=REQ),
        "eps_relative": Key(float, 1.0),
    },
    "simulate": {
        "n_steps": Key(int, required=REQ),
        "courant": Key(float, 0.5),
        "symmetry_x": Key(str, "none"),
        "symmetry_y": Key(str, "none"),
        "pml": Key(_bool, True),
        "pml_thickness_cells": Key(int, 12),
        "pml_sigma_max_scale": Key(float, 1.0),
        "pml_grading_order": Key(float, 3.0),
        "probe_component": Key(str, "Hz"),
        "probes_nm": Key(_points, []),
        "snapshot_stride_steps": Key(int, 0),
        "snapshot_start_step": Key(int, 0),
        "energy_stride_steps": Key(int, 16),
        "dft_freqs_normalized": Key(_floats, []),
        "dft_start_step": Key(lambda s: None if s.strip().lower() in ("", "none") else int(s), None),
        "energy_check": Key(_bool, False),
    },
    "source": {
        "x_nm": Key(float, required=REQ),
        "y_nm": Key(float, required=REQ),
        "component": Key(str, "Hz"),
        "center_freq_normalized": Key(float, 0.25),
        "bandwidth_normalized": Key(float, 0.05),
        "t0_steps": Key(lambda s: None if s.strip().lower() in ("", "none") else int(s), None),
        "amplitude_arb": Key(float, 1.0),
    },
    "modes": {
        "band_lo_normalized": Key(float, 0.2),
        "band_hi_normalized": Key(float, 0.34),
        "max_modes": Key(int, 10),
        "freq_normalized": Key(_optional_float, None),
        "n_clad": Key(float, 1.0),
        "taper_fraction": Key(float, 0.1),
        "component": Key(str, "Ex"),
        "effective_height_nm": Key(_optional_float, None),
        "window_nm": Key(_optional_float, None),
    },
    "laser": {
        "Q": Key(float, 1e4),
        "lambda0_nm": Key(float, 1300.0),
        "beta": Key(float, 1e-2),
        "Gamma": Key(float, 0.2),
        "v_g_cm_s": Key(float, 2.99792458e10 / 3.5),
        "gain_model": Key(str, "log"),
        "g0_per_cm": Key(float, 1500.0),
        "a_cm2": Key(float, 5e-16),
        "N_tr_cm3": Key(float, 1.5e18),
        "tau_sp_s": Key(float, 2e-9),
        "tau_nr_s": Key(_optional_float, 1e-9),
        "V_active_cm3": Key(_optional_float, None),
        "spot_area_um2": Key(float, 21.0),
        "n_wells": Key(int, 5),
        "well_thickness_nm": Key(float, 5.0),
        "eta_pump": Key(float, 0.7),
        "lambda_pump_nm": Key(float, 830.0),
        "duty": Key(float, 10.0 / 300.0),
        "n_max_cm3": Key(float, 1e21),
        "time_unit_s": Key(float, 1.0),
        "pump_uW": Key(_optional_float, None),
        "pump_min_uW": Key(float, 10.0),
        "pump_max_uW": Key(float, 5000.0),
        "n_points": Key(int, 60),
        "spacing": Key(str, "log"),
    },
    "fit": {
        "window_lo_nm": Key(_optional_float, None),
        "window_hi_nm": Key(_optional_float, None),
        "half": Key(str, "both"),
        "instrument_fwhm_nm": Key(_optional_float, None),
        "which": Key(str, "line"),
        "beam_sigma_nm": Key(_optional_float, None),
        "beam_area_um2": Key(_optional_float, None),
        "positions_nm": Key(_points, []),
    },
}


class Config:
    """Parsed, validated configuration: ``cfg.section("lattice")["a_nm"]``."""

    def __init__(self, sections: dict[str, dict[str, Any]], raw: dict[str, dict[str, str]],
                 path: Path | None = None):
        self._sections = sections
        self.raw = raw
        self.path = path

    def has(self, name: str) -> bool:
        return name in self._sections

    def section(self, name: str) -> dict[str, Any]:
        if name not in self._sections:
            raise ConfigError(f"missing required section [{name}]")
        return self._sections[name]

    def section_or_defaults(self, name: str) -> dict[str, Any]:
        if name in self._sections:
            return self._sections[name]
        return _fill(name, {}, where=f"[{name}]")

    def repeated(self, base: str) -> list[dict[str, Any]]:
        names = sorted((n for n in self._sections if n == base or n.startswith(base + ".")),
                       key=_section_order)
        return [self._sections[n] for n in names]

    def digest(self) -> str:
        return _io.sha256_hex(_io.canonical_json(self.raw))


def _section_order(name: str) -> tuple[int, str]:
    _, _, suffix = name.partition(".")
    return (int(suffix) if suffix.isdigit() else -1, name)


def _fill(kind: str, values: dict[str, str], where: str) -> dict[str, Any]:
    schema = SCHEMA[kind]
    out: dict[str, Any] = {}
    for key in values:
        if key not in schema:
            raise ConfigError(f"{where}: unknown key {key!r}")
    for key, spec in schema.items():
        if key in values:
            try:
                out[key] = spec.parse(values[key])
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc
        elif spec.required:
            raise ConfigError(f"{where}: missing required key {key!r}")
        else:
            out[key] = spec.default
    return out


def parse_text(text: str, path: Path | None = None) -> Config:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#",))
    parser.optionxform = str  # keys are case sensitive (Q, N_tr_cm3)
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sections: dict[str, dict[str, Any]] = {}
    raw: dict[str, dict[str, str]] = {}
    for name in parser.sections():
        kind = name.split(".", 1)[0]
        if kind not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        values = dict(parser.items(name))
        raw[name] = values
        sections[name] = _fill(kind, values, where=f"[{name}]")
    return Config(sections, raw, path)


def load(path: str | Path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text, path)


# -------------------------------------------------------------- builders

def lattice_spec(cfg: Config):
    from .geometry import GeometryError, LatticeSpec

    s = cfg.section("lattice")
    try:
        return LatticeSpec(
            a=s["a_nm"], n_rows=s["n_rows"], n_cols=s["n_cols"],
            r_over_a_center=s["r_over_a_center"], r_over_a_edge_x=s["r_over_a_edge_x"],
            r_over_a_edge_y=s["r_over_a_edge_y"], grade_exponent=s["grade_exponent"],
            d=s["d_nm"], n_slab=s["n_slab"], n_clad=s["n_clad"], wavelength=s["wavelength_nm"],
            offset=(s["offset_x_nm"], s["offset_y_nm"]),
        )
    except GeometryError as exc:
        raise ConfigError(f"[lattice]: {exc}") from exc


def laser_params(cfg: Config):
    from .laser import LaserError, RateEqnParams, active_volume_cm3

    s = cfg.section_or_defaults("laser")
    volume = s["V_active_cm3"]
    if volume is None:
        volume = active_volume_cm3(s["spot_area_um2"], s["n_wells"], s["well_thickness_nm"])
    try:
        return RateEqnParams(
            Q=s["Q"], lambda0_nm=s["lambda0_nm"], beta=s["beta"], Gamma=s["Gamma"],
            v_g_cm_s=s["v_g_cm_s"], gain_model=s["gain_model"], g0_per_cm=s["g0_per_cm"],
            a_cm2=s["a_cm2"], N_tr_cm3=s["N_tr_cm3"], tau_sp_s=s["tau_sp_s"], tau_nr_s=s["tau_nr_s"],
            V_active_cm3=volume, eta_pump=s["eta_pump"], lambda_pump_nm=s["lambda_pump_nm"],
            duty=s["duty"], n_max_cm3=s["n_max_cm3"], time_unit_s=s["time_unit_s"],
        )
    except LaserError as exc:
        raise ConfigError(f"[laser]: {exc}") from exc


def laser_params_from_file(path: str | Path):
    return laser_params(load(path))
