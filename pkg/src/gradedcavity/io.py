"""File formats shared by the pipeline stages.

Arrays go to disk as little-endian float64, row-major, with a JSON sidecar
holding shape and metadata. Tables are plain CSV with a header row.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def canonical_json(obj: Any) -> str:
    """Stable JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n"


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj), encoding="utf-8")
    return path


def write_array(path: str | Path, array: np.ndarray, meta: dict[str, Any]) -> tuple[Path, Path]:
    """Write ``array`` as ``<path>.bin`` plus ``<path>.json``.

    ``path`` is taken without extension. Complex arrays are stored as
    interleaved (real, imag) pairs and flagged in the sidecar.
    """
    path = Path(path)
    arr = np.ascontiguousarray(array)
    is_complex = np.iscomplexobj(arr)
    if is_complex:
        flat = np.ascontiguousarray(np.stack([arr.real, arr.imag], axis=-1), dtype="<f8")
    else:
        flat = np.ascontiguousarray(arr, dtype="<f8")
    bin_path = path.with_suffix(".bin")
    json_path = path.with_suffix(".json")
    bin_path.write_bytes(flat.tobytes(order="C"))
    sidecar = dict(meta)
    sidecar.update(
        {
            "dtype": "float64-le",
            "order": "row-major",
            "shape": list(arr.shape),
            "complex_interleaved": bool(is_complex),
            "data_file": bin_path.name,
        }
    )
    write_json(json_path, sidecar)
    return bin_path, json_path


def read_array(path: str | Path) -> tuple[np.ndarray, dict[str, Any]]:
    """Inverse of :func:`write_array`; ``path`` may name the .bin, the .json or neither."""
    path = Path(path)
    if path.suffix in (".bin", ".json"):
        path = path.with_suffix("")
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    shape = tuple(meta["shape"])
    if meta.get("complex_interleaved"):
        pairs = raw.reshape(shape + (2,))
        arr = pairs[..., 0] + 1j * pairs[..., 1]
    else:
        arr = raw.reshape(shape).copy()
    return arr, meta


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def read_csv_columns(path: str | Path, required: Sequence[str]) -> dict[str, np.ndarray]:
    """Read named float columns from a CSV file with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in required if c not in fields]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        cols: dict[str, list[float]] = {c: [] for c in required}
        for row in reader:
            for c in required:
                cols[c].append(float(row[c]))
    return {c: np.asarray(v, dtype=float) for c, v in cols.items()}
