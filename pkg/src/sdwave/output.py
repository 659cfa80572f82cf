"""Plot-data CSV, report JSON and binary snapshot files."""
from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .diagnostics import audit_energy_equality, energy_series
from .dynamics import TrajectoryRecord
from .spectral import BasisSpec

CSV_COLUMNS = ("time", "E", "L", "diss_grad", "diss_sigma", "residual", "H1_norm", "H2xH1_norm")
SNAPSHOT_MAGIC = b"SDWAVE01"
_HEADER = struct.Struct("<8sQQQ")


def _cell(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return "%.17g" % x


def write_csv(path, columns: Mapping[str, Sequence[float]]) -> Path:
    """Write the fixed column layout; absent columns become empty cells."""
    unknown = set(columns) - set(CSV_COLUMNS)
    if unknown:
        raise ValueError(f"unknown CSV columns {sorted(unknown)}")
    n = len(columns["time"])
    if n == 0:
        raise ValueError("nothing to write")
    for k, v in columns.items():
        if len(v) != n:
            raise ValueError(f"column {k} has {len(v)} rows, expected {n}")
    lines = [",".join(CSV_COLUMNS)]
    for i in range(n):
        lines.append(",".join(_cell(columns[c][i]) if c in columns else "" for c in CSV_COLUMNS))
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path) -> dict:
    """Inverse of :func:`write_csv`; empty cells read back as NaN."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    rows = text.split("\n")
    header = rows[0].split(",")
    out = {h: [] for h in header}
    for line in rows[1:]:
        if not line:
            continue
        for h, cell in zip(header, line.split(",")):
            out[h].append(float(cell) if cell else math.nan)
    return {h: np.array(v) for h, v in out.items()}


def trajectory_columns(model, rec: TrajectoryRecord, residual: np.ndarray | None = None) -> dict:
    lam = rec.basis.eigenvalues
    axes = tuple(range(1, rec.w.ndim))
    E, L = energy_series(model, rec)
    if residual is None:
        residual = audit_energy_equality(model, rec).residual
    h = np.sqrt(np.sum(lam * rec.w**2, axis=axes) + np.sum(rec.v**2, axis=axes))
    h1 = np.sqrt(np.sum(lam**2 * rec.w**2, axis=axes) + np.sum(lam * rec.v**2, axis=axes))
    return {"time": rec.times, "E": E, "L": L, "diss_grad": rec.diss_grad, "diss_sigma": rec.diss_sigma,
            "residual": residual, "H1_norm": h, "H2xH1_norm": h1}


def emit_plotdata(path, model, rec: TrajectoryRecord) -> Path:
    if len(rec) == 0:
        raise ValueError("empty trajectory")
    return write_csv(path, trajectory_columns(model, rec))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_json_atomic(path, payload: dict) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    write_json(tmp, payload)
    os.replace(tmp, path)
    return path


def write_snapshots(path, rec: TrajectoryRecord) -> Path:
    """32-byte header (magic, d, N, count) then, per snapshot, t, w, v as <f8."""
    b = rec.basis
    count = len(rec)
    body = np.empty((count, 1 + 2 * b.size), dtype="<f8")
    body[:, 0] = rec.times
    body[:, 1:1 + b.size] = rec.w.reshape(count, -1)
    body[:, 1 + b.size:] = rec.v.reshape(count, -1)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, b.dimension, b.modes, count))
        fh.write(body.tobytes())
    return path


def read_snapshots(path, oversampling=None) -> tuple[BasisSpec, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (basis, times, w, v) with w and v shaped (count, N, ..., N)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, d, n, count = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    basis = BasisSpec(int(d), int(n)) if oversampling is None else BasisSpec(int(d), int(n), oversampling)
    width = 1 + 2 * basis.size
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != count * width:
        raise ValueError("snapshot payload size does not match header")
    body = body.reshape(count, width)
    shape = (count,) + basis.shape
    return basis, body[:, 0].copy(), body[:, 1:1 + basis.size].reshape(shape).copy(), \
        body[:, 1 + basis.size:].reshape(shape).copy()
