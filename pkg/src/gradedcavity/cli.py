"""Command line front end: ``gradedcavity <command> [subcommand] --config FILE --out DIR``.

Exit status: 0 success, 2 configuration error, 3 computation error.
Machine-readable results go to files under ``--out`` (and the report path
to standard output); progress and warnings go to standard error.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from . import config as _cfg
from . import io as _io
from .config import ConfigError

log = logging.getLogger("gradedcavity")

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3


class ComputeError(RuntimeError):
    """Numerical failure (CLI exit status 3)."""


# ------------------------------------------------------------------ helpers

class Run:
    """Output directory bookkeeping and manifest writer."""

    def __init__(self, args: argparse.Namespace, command: str):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.config_hash = None

    def path(self, name: str) -> Path:
        return self.out / name

    def add(self, *paths) -> None:
        for p in paths:
            if isinstance(p, (list, tuple)):
                self.add(*p)
            else:
                self.outputs.append(Path(p))

    def report(self, name: str, payload: dict) -> Path:
        path = _io.write_json(self.path(name), payload)
        self.add(path)
        return path

    def finish(self) -> Path:
        entries = []
        for p in sorted(set(self.outputs), key=lambda q: q.name):
            entries.append({"file": p.relative_to(self.out).as_posix(), "sha256": _io.file_digest(p)})
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "config_hash": self.config_hash,
            "inputs": [{"file": str(p), "sha256": _io.file_digest(p)} for p in self.inputs],
            "outputs": entries,
            "timestamps": {
                "started_utc": self.started,
                "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            },
        }
        return _io.write_json(self.path("manifest.json"), manifest)


def _load_config(args, run: Run | None = None, required: bool = True) -> _cfg.Config:
    path = getattr(args, "config", None)
    if path is None:
        if required:
            raise ConfigError("--config is required for this command")
        return _cfg.parse_text("")
    cfg = _cfg.load(path)
    if run is not None:
        run.inputs.append(Path(path))
        run.config_hash = cfg.digest()
    return cfg


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


# ----------------------------------------------------------------- geometry

def _build_grid(cfg: _cfg.Config, max_mem: float):
    from .geometry import DielectricGrid, GeometryError, build_graded_lattice, rasterize

    if cfg.has("uniform"):
        u = cfg.section("uniform")
        dx = u["dx_nm"]
        nx = int(round(u["width_nm"] / dx / 2)) * 2
        ny = int(round(u["height_nm"] / dx / 2)) * 2
        if nx < 4 or ny < 4:
            raise ConfigError("[uniform]: box must span at least 4 cells per side")
        if nx * ny * 8 / 2**20 > max_mem:
            raise ConfigError(f"[uniform]: grid {nx}x{ny} exceeds the {max_mem} MB cap")
        grid = DielectricGrid(eps=np.full((nx, ny), u["eps_relative"]), dx=dx,
                              origin=(-nx / 2 * dx, -ny / 2 * dx), n_eff=math.sqrt(u["eps_relative"]),
                              a=u["a_nm"], meta={"kind_of_grid": "uniform box"})
        return None, None, grid
    spec = _cfg.lattice_spec(cfg)
    r = cfg.section("raster")
    try:
        holes = build_graded_lattice(spec)
        grid = rasterize(holes, spec, r["dx_nm"], r["smoothing"], pad=r["pad_nm"],
                         n_eff=r["n_eff"], max_mem_mb=max_mem)
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    return spec, holes, grid


def _half_grid(grid, sym_x: str, sym_y: str):
    """Restrict the grid to x >= 0 and/or y >= 0 for mirror-symmetric runs."""
    i0 = j0 = 0
    if sym_x != "none":
        i0 = int(round(-grid.origin[0] / grid.dx))
        if abs(-grid.origin[0] / grid.dx - i0) > 1e-9:
            raise ConfigError("symmetry_x needs the x = 0 axis on a cell boundary")
    if sym_y != "none":
        j0 = int(round(-grid.origin[1] / grid.dx))
        if abs(-grid.origin[1] / grid.dx - j0) > 1e-9:
            raise ConfigError("symmetry_y needs the y = 0 axis on a cell boundary")
    return grid.crop(i0, j0, symmetry=[sym_x, sym_y])


def cmd_lattice(args) -> int:
    from .geometry import air_fill_fraction

    run = Run(args, "lattice")
    cfg = _load_config(args, run)
    spec, holes, grid = _build_grid(cfg, args.max_mem)
    if holes is None:
        raise ConfigError("lattice needs a [lattice] section")
    run.add(holes.to_csv(run.path("holes.csv")))
    run.add(grid.save(run.path("grid")))
    x0, x1, y0, y1 = holes.bounding_box()
    report = {
        "n_holes_count": len(holes),
        "n_rows_count": spec.n_rows,
        "n_cols_count": spec.n_cols,
        "footprint_x_nm": spec.footprint[0],
        "footprint_y_nm": spec.footprint[1],
        "hole_extent_x_nm": x1 - x0,
        "hole_extent_y_nm": y1 - y0,
        "r_min_nm": float(holes.r.min()),
        "r_max_nm": float(holes.r.max()),
        "n_eff_dimensionless": grid.n_eff,
        "grid_cells_x_count": grid.shape[0],
        "grid_cells_y_count": grid.shape[1],
        "dx_nm": grid.dx,
        "air_fill_fraction_dimensionless": air_fill_fraction(grid),
        "spec_digest": spec.digest(),
        "notes": "2D effective-index reduction; grade profile is a documented approximation",
    }
    print(run.report("lattice.json", report))
    run.finish()
    return EXIT_OK


# ------------------------------------------------------------------- fdtd

def cmd_simulate(args) -> int:
    from .fdtd import ConfigError as FDTDConfigError
    from .fdtd import DivergenceError, FDTDError, PMLParams, SimConfig, SourceSpec, run as fdtd_run

    run = Run(args, "simulate")
    cfg = _load_config(args, run)
    s = cfg.section("simulate")
    _, _, grid = _build_grid(cfg, args.max_mem)
    grid = _half_grid(grid, s["symmetry_x"], s["symmetry_y"])
    sources = []
    try:
        for src in cfg.repeated("source"):
            sources.append(SourceSpec(position=(src["x_nm"], src["y_nm"]), component=src["component"],
                                      center_freq=src["center_freq_normalized"],
                                      bandwidth=src["bandwidth_normalized"], t0=src["t0_steps"],
                                      amplitude=src["amplitude_arb"]))
        pml = PMLParams(s["pml_thickness_cells"], s["pml_sigma_max_scale"], s["pml_grading_order"]) \
            if s["pml"] else None
        sim = SimConfig(grid=grid, n_steps=s["n_steps"], courant=s["courant"], pml=pml,
                        sources=sources, probes=s["probes_nm"], probe_component=s["probe_component"],
                        snapshot_stride=s["snapshot_stride_steps"], snapshot_start=s["snapshot_start_step"],
                        symmetry_x=s["symmetry_x"], symmetry_y=s["symmetry_y"],
                        energy_stride=s["energy_stride_steps"], threads=args.threads,
                        max_snapshot_mb=args.max_mem, dft_freqs=s["dft_freqs_normalized"],
                        dft_start=s["dft_start_step"])
        sim.validate()
    except (FDTDConfigError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    log.info("simulating %s cells for %d steps", grid.shape, sim.n_steps)
    try:
        result = fdtd_run(sim)
    except DivergenceError as exc:
        raise ComputeError(str(exc)) from exc
    except FDTDError as exc:
        raise ComputeError(str(exc)) from exc
    run.add(grid.save(run.path("grid")))
    for k, rec in enumerate(result.records):
        run.add(rec.to_csv(run.path(f"probe_{k}.csv")))
    probes_meta = {
        "dt_normalized": result.records[0].dt if result.records else sim.courant * grid.dx / sim.length_unit,
        "analysis_start_step": sim.analysis_start_step(),
        "component": sim.probe_component,
        "positions_nm": [list(p) for p in sim.probes],
        "files": [f"probe_{k}.csv" for k in range(len(result.records))],
    }
    run.report("probes.json", probes_meta)
    if len(result.energy):
        run.add(_io.write_csv(run.path("energy.csv"), ("step", "t_normalized", "energy_arb"),
                              ((int(r[0]), r[1], r[2]) for r in result.energy)))
    for snap in result.snapshots:
        run.add(snap.save(run.path(f"snapshot_{snap.step:07d}")))
    for k, ph in enumerate(result.phasors):
        run.add(ph.save(run.path(f"phasor_{k}")))
    report: dict[str, Any] = {
        "n_steps_count": sim.n_steps,
        "dt_normalized": sim.courant * grid.dx / sim.length_unit,
        "grid_cells_x_count": grid.shape[0],
        "grid_cells_y_count": grid.shape[1],
        "analysis_start_step": sim.analysis_start_step(),
        "symmetry": [sim.symmetry_x, sim.symmetry_y],
        "notes": "2D TE effective-index model; no Q here is a 3D figure",
    }
    status = EXIT_OK
    if s["energy_check"]:
        ok, detail = _energy_check(result.energy, sim)
        report["energy_check_passed"] = ok
        report.update(detail)
        if not ok:
            log.error("energy self-check failed: %s", detail)
            status = EXIT_COMPUTE
    print(run.report("simulate.json", report))
    run.finish()
    return status


def _energy_check(energy: np.ndarray, sim) -> tuple[bool, dict]:
    start = sim.analysis_start_step()
    tail = energy[energy[:, 0] >= start] if len(energy) else energy
    if len(tail) < 2:
        return False, {"energy_check_reason": "no energy samples after the source window"}
    u = tail[:, 2]
    if sim.pml is None:
        drift = float((u.max() - u.min()) / u.mean()) if u.mean() > 0 else 0.0
        return drift < 1e-3, {"energy_relative_drift_dimensionless": drift,
                              "energy_check_rule": "closed box: drift < 0.1%"}
    rises = np.diff(u) / max(float(u[0]), 1e-300)
    worst = float(rises.max()) if len(rises) else 0.0
    return worst <= 1e-12, {"energy_max_relative_rise_dimensionless": worst,
                            "energy_check_rule": "absorbing boundary: non-increasing"}


# ------------------------------------------------------------------ modes

def _records_from(paths: Sequence[str], run: Run):
    import json

    from .fdtd import FieldRecord

    recs = []
    for p in paths:
        p = Path(p)
        meta_path = p.parent / "probes.json"
        start, comp = 0, "Hz"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            start, comp = int(meta.get("analysis_start_step", 0)), meta.get("component", "Hz")
        run.inputs.append(p)
        try:
            recs.append(FieldRecord.from_csv(p, start_step=start, component=comp))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read record {p}: {exc}") from exc
    return recs


def _snapshot_and_grid(args, run: Run):
    from .fdtd import Snapshot
    from .geometry import DielectricGrid

    if not args.snapshot or not args.grid:
        raise ConfigError("--snapshot and --grid are required")
    try:
        snap = Snapshot.load(args.snapshot)
        grid = DielectricGrid.load(args.grid)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read snapshot/grid: {exc}") from exc
    for name in ("Hz", "Ex", "Ey"):
        run.inputs.append(Path(f"{args.snapshot}_{name}.bin"))
    run.inputs.append(Path(str(args.grid) + ".bin"))
    return snap, grid


def _resonance_dict(r) -> dict:
    return {
        "freq_normalized": r.freq,
        "Q_dimensionless": r.Q,
        "amplitude_arb": r.amplitude,
        "phase_rad": r.phase,
        "decay_rate_per_time_normalized": r.decay_rate,
        "confidence_arb": r.confidence,
        "flags": list(r.flags),
    }


def cmd_modes(args) -> int:
    from . import modes as M

    run = Run(args, f"modes {args.sub}")
    cfg = _load_config(args, run, required=False)
    ms = cfg.section_or_defaults("modes")
    try:
        if args.sub == "resonances":
            if not args.records:
                raise ConfigError("--records is required")
            recs = _records_from(args.records, run)
            band = (ms["band_lo_normalized"], ms["band_hi_normalized"])
            per = [M.harmonic_inversion(r, band, ms["max_modes"]) for r in recs]
            merged = M.consensus_resonances(per)
            rows = [(k, e.freq, e.Q, e.amplitude, e.phase) for k, ests in enumerate(per) for e in ests]
            run.add(_io.write_csv(run.path("resonances.csv"),
                                  ("probe_index", "freq_normalized", "Q_dimensionless", "amplitude_arb",
                                   "phase_rad"), rows))
            report = {
                "band_normalized": list(band),
                "per_probe": [[_resonance_dict(e) for e in ests] for ests in per],
                "consensus": [_resonance_dict(e) for e in merged],
                "notes": "2D effective-index Q values; not 3D figures",
            }
            print(run.report("resonances.json", report))
        else:
            snap, grid = _snapshot_and_grid(args, run)
            freq = ms["freq_normalized"] if ms["freq_normalized"] is not None else snap.freq
            if freq is None:
                raise ConfigError("frequency unknown: set [modes] freq_normalized or use a phasor snapshot")
            if args.sub == "volume":
                res = M.mode_volume(snap, grid, freq)
                d = {"area_nm2": res.area_nm2,
                     "v_eff_air_lambda_over_2_pow2": res.v_eff_air,
                     "v_eff_material_lambda_over_2n_pow2": res.v_eff_material,
                     "index_dimensionless": res.index, "wavelength_nm": res.wavelength_nm,
                     "peak_location_nm": list(res.peak_location), "dimension_count": res.dimension,
                     "valid": res.valid, "flags": list(res.flags)}
                if ms["effective_height_nm"] is not None:
                    p3 = M.pseudo_3d(res, ms["effective_height_nm"])
                    d["pseudo3d_v_eff_air_lambda_over_2_pow3"] = p3.v_eff_air
                    d["pseudo3d_v_eff_material_lambda_over_2n_pow3"] = p3.v_eff_material
                print(run.report("volume.json", d))
            elif args.sub == "lightcone":
                res = M.light_cone_fraction(snap, grid, freq, ms["n_clad"], component=ms["component"],
                                            taper=ms["taper_fraction"])
                run.add(res.fourier.save(run.path("fourier_map"), {"component": ms["component"]}))
                d = {"light_cone_fraction_dimensionless": res.fraction,
                     "dc_fraction_dimensionless": res.dc_fraction,
                     "dc_fraction_untapered_dimensionless": res.dc_fraction_untapered,
                     "dc_power_arb": res.dc_power, "total_power_arb": res.total_power,
                     "light_cone_radius_2pi_over_a": res.fourier.light_cone_radius,
                     "freq_normalized": freq, "component": ms["component"]}
                print(run.report("lightcone.json", d))
            elif args.sub == "envelope":
                dens, g = M.energy_density(snap, grid)
                fit = M.envelope_gaussian_fit(dens, g, ms["window_nm"])
                d = {"sigma_x_nm": fit.sigma_x, "sigma_y_nm": fit.sigma_y,
                     "center_nm": list(fit.center), "amplitude_arb": fit.amplitude,
                     "r2_dimensionless": fit.r2, "window_nm": fit.window_nm, "flags": list(fit.flags)}
                print(run.report("envelope.json", d))
            else:  # pragma: no cover - argparse restricts choices
                raise ConfigError(f"unknown modes subcommand {args.sub}")
    except M.AnalysisError as exc:
        raise ComputeError(str(exc)) from exc
    run.finish()
    return EXIT_OK


# ------------------------------------------------------------------ laser

def _solution_dict(s) -> dict:
    return {"pump_uW": s.pump_uW, "N_cm3": s.N_cm3, "S_photons": s.S_photons,
            "emitted_arb": s.emitted_arb, "residual_dimensionless": s.residual}


def cmd_laser(args) -> int:
    from . import laser as L

    run = Run(args, f"laser {args.sub}")
    cfg = _load_config(args, run, required=False)
    params = _cfg.laser_params(cfg)
    ls = cfg.section_or_defaults("laser")
    try:
        if args.sub == "steady":
            pump = args.pump_uW if args.pump_uW is not None else ls["pump_uW"]
            if pump is None:
                raise ConfigError("steady needs --pump-uW or [laser] pump_uW")
            print(run.report("steady.json", _solution_dict(L.steady_state(params, pump))))
        elif args.sub == "ll":
            lo, hi, n = ls["pump_min_uW"], ls["pump_max_uW"], ls["n_points"]
            if not 0 < lo < hi or n < 2:
                raise ConfigError("[laser]: need 0 < pump_min_uW < pump_max_uW and n_points >= 2")
            if ls["spacing"] == "log":
                grid = np.geomspace(lo, hi, n)
            elif ls["spacing"] == "linear":
                grid = np.linspace(lo, hi, n)
            else:
                raise ConfigError("[laser] spacing must be log or linear")
            curve = L.ll_curve(params, grid)
            run.add(curve.to_csv(run.path("ll.csv")))
            report = {"n_points_count": n, "monotone": curve.monotone,
                      "kink_pump_uW": curve.kink_uW, "flags": list(curve.flags),
                      "threshold_uW": L.threshold(params)}
            if curve.transition_range:
                report["transition_range_uW"] = [float(grid[i]) for i in curve.transition_range]
            print(run.report("ll.json", report))
        elif args.sub == "threshold":
            report = {"threshold_uW": L.threshold(params),
                      "threshold_average_uW": L.threshold(params) * params.duty,
                      "N_th_cm3": L.threshold_carrier_density(params),
                      "N_tr_cm3": params.N_tr_cm3,
                      "transparency_ratio_dimensionless": L.transparency_ratio(params),
                      "transparency_limit_uW": L.transparency_threshold(params),
                      "tau_p_s": params.tau_p * params.time_unit_s,
                      "notes": "rate-equation coefficients are modelling defaults, not measured values"}
            print(run.report("threshold.json", report))
    except L.LaserError as exc:
        raise ComputeError(str(exc)) from exc
    run.finish()
    return EXIT_OK


# -------------------------------------------------------------------- fit

def cmd_fit(args) -> int:
    from . import spectra as S

    run = Run(args, f"fit {args.sub}")
    cfg = _load_config(args, run, required=False)
    fs = cfg.section_or_defaults("fit")
    if fs["half"] not in ("both", "long"):
        raise ConfigError(f"[fit] half must be both or long, got {fs['half']!r}")
    if fs["which"] not in ("line", "background"):
        raise ConfigError(f"[fit] which must be line or background, got {fs['which']!r}")
    try:
        if args.sub == "lorentzian":
            path = _need(args.data, "--data spectrum CSV")
            run.inputs.append(Path(path))
            spec = S.Spectrum.from_csv(path)
            window = None
            if fs["window_lo_nm"] is not None and fs["window_hi_nm"] is not None:
                window = (fs["window_lo_nm"], fs["window_hi_nm"])
            fit = S.fit_lorentzian(spec, window, half=fs["half"], instrument_fwhm=fs["instrument_fwhm_nm"])
            d = {"lambda0_nm": fit.lambda0, "fwhm_nm": fit.fwhm, "amplitude_arb": fit.amplitude,
                 "offset_arb": fit.offset, "q_loaded_dimensionless": fit.q_loaded,
                 "fwhm_corrected_nm": fit.fwhm_corrected, "q_corrected_dimensionless": fit.q_corrected,
                 "residual_arb": fit.residual, "flags": list(fit.flags)}
            print(run.report("lorentzian.json", d))
        elif args.sub == "threshold":
            path = _need(args.data, "--data L-L CSV")
            run.inputs.append(Path(path))
            data = S.LLData.from_csv(path)
            fit = S.fit_threshold(data, fs["which"])
            print(run.report("threshold_fit.json", fit.to_dict()))
        elif args.sub == "polarization":
            path = _need(args.data, "--data polarization CSV")
            run.inputs.append(Path(path))
            cols = _io.read_csv_columns(path, ("angle_deg", "power_arb"))
            fit = S.polarization_fit(np.radians(cols["angle_deg"]), cols["power_arb"])
            d = fit.to_dict()
            d["extinction_ratio_dimensionless"] = d.pop("extinction_ratio")
            print(run.report("polarization.json", d))
        elif args.sub == "overlap":
            import json

            from .modes import EnvelopeFit

            path = _need(args.data, "--data envelope JSON")
            run.inputs.append(Path(path))
            env = json.loads(Path(path).read_text(encoding="utf-8"))
            fit = EnvelopeFit(sigma_x=env["sigma_x_nm"], sigma_y=env["sigma_y_nm"],
                              center=tuple(env.get("center_nm", (0.0, 0.0))), amplitude=1.0, r2=1.0)
            if fs["beam_sigma_nm"] is not None:
                sigma = fs["beam_sigma_nm"]
            elif fs["beam_area_um2"] is not None:
                sigma = S.beam_sigma_from_area(fs["beam_area_um2"])
            else:
                raise ConfigError("[fit] needs beam_sigma_nm or beam_area_um2")
            positions = fs["positions_nm"]
            if not positions:
                raise ConfigError("[fit] positions_nm is empty")
            rel = S.pump_overlap_scan(fit, sigma, positions)
            run.add(_io.write_csv(run.path("overlap.csv"), ("x_nm", "y_nm", "relative_power_arb"),
                                  ((p[0], p[1], float(v)) for p, v in zip(positions, rel))))
            print(run.report("overlap.json", {"beam_sigma_nm": sigma, "points_count": len(positions)}))
    except (KeyError, OSError) as exc:
        raise ConfigError(f"bad input: {exc}") from exc
    except S.SpectraError as exc:
        raise ComputeError(str(exc)) from exc
    run.finish()
    return EXIT_OK


def _need(value, what: str):
    if not value:
        raise ConfigError(f"{what} is required")
    return value


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "--param", dest="config", help="INI configuration file")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--threads", type=int, default=1, help="FDTD worker threads")
    common.add_argument("--max-mem", type=float, default=2048.0, dest="max_mem",
                        help="memory cap in MB for grids and snapshots")
    common.add_argument("--verbose", "-v", action="count", default=0)

    parser = argparse.ArgumentParser(prog="gradedcavity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lattice", parents=[common], help="generate holes and the dielectric grid")
    p.set_defaults(func=cmd_lattice)
    p = sub.add_parser("simulate", parents=[common], help="run the 2D FDTD solver")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("modes", help="analyse FDTD output")
    msub = p.add_subparsers(dest="sub", required=True)
    for name in ("resonances", "volume", "lightcone", "envelope"):
        q = msub.add_parser(name, parents=[common])
        q.add_argument("--records", nargs="*", help="probe CSV files (resonances)")
        q.add_argument("--snapshot", help="snapshot base path without _Hz/_Ex/_Ey suffix")
        q.add_argument("--grid", help="grid base path without extension")
        q.set_defaults(func=cmd_modes)

    p = sub.add_parser("laser", help="rate-equation model")
    lsub = p.add_subparsers(dest="sub", required=True)
    for name in ("steady", "ll", "threshold"):
        q = lsub.add_parser(name, parents=[common])
        q.add_argument("--pump-uW", type=float, dest="pump_uW")
        q.set_defaults(func=cmd_laser)

    p = sub.add_parser("fit", help="fit measured or synthetic data")
    fsub = p.add_subparsers(dest="sub", required=True)
    for name in ("lorentzian", "threshold", "polarization", "overlap"):
        q = fsub.add_parser(name, parents=[common])
        q.add_argument("--data", help="input data file")
        q.set_defaults(func=cmd_fit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ComputeError as exc:
        print(f"compute error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
