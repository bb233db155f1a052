"""Binary snapshots, norm tables and JSON reports.

Snapshot layout (little endian)::

    b"BNS1" | n: u32 | L: f64 | time: f64 | 3 * n**3 complex128 coefficients

Coefficients are the forward-normalized Fourier coefficients of the three velocity
components in full FFT index order (component, k1, k2, k3).  Every writer goes
through a temporary file and an atomic rename.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import struct
import tempfile
from typing import Iterable, Tuple

import numpy as np

from .errors import OutputError
from .spectral import Grid3, SpectralVectorField

MAGIC = b"BNS1"
_HEADER = struct.Struct("<4sIdd")


def atomic_write(path: str, payload: bytes):
    folder = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(folder, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def encode_snapshot(f: SpectralVectorField, time: float | None = None) -> bytes:
    g = f.grid
    t = f.time_tag if time is None else time
    t = float("nan") if t is None else float(t)
    full = g.half_to_full(f.half).astype("<c16", copy=False)
    return _HEADER.pack(MAGIC, g.n, g.L, t) + np.ascontiguousarray(full).tobytes()


def decode_snapshot(payload: bytes) -> Tuple[SpectralVectorField, float]:
    if len(payload) < _HEADER.size:
        raise ValueError("snapshot truncated before the end of the header")
    magic, n, L, t = _HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    expected = _HEADER.size + 3 * n**3 * 16
    if len(payload) != expected:
        raise ValueError(f"snapshot has {len(payload)} bytes, expected {expected}")
    full = np.frombuffer(payload, dtype="<c16", offset=_HEADER.size).reshape(3, n, n, n)
    grid = Grid3(n, L)
    tag = None if math.isnan(t) else t
    return SpectralVectorField(grid, grid.full_to_half(full.astype(complex)), tag), t


def write_snapshot(path: str, f: SpectralVectorField, time: float | None = None):
    atomic_write(path, encode_snapshot(f, time))


def read_snapshot(path: str) -> Tuple[SpectralVectorField, float]:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())


def write_trajectory(folder: str, traj, stride: int = 1) -> list:
    """One snapshot file per stored time (every ``stride``-th); returns the paths."""
    paths = []
    for i in range(0, len(traj), max(1, stride)):
        path = os.path.join(folder, f"snapshot_{i:05d}.bns")
        write_snapshot(path, traj.field(i), float(traj.times[i]))
        paths.append(path)
    return paths


def norms_csv(rows: Iterable[Tuple[float, str, float]]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "norm_id", "value"])
    for t, nid, v in rows:
        w.writerow([repr(float(t)), nid, repr(float(v))])
    return buf.getvalue()


def write_norms_csv(path: str, rows: Iterable[Tuple[float, str, float]]):
    atomic_write(path, norms_csv(rows).encode())


def read_norms_csv(path: str) -> list:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        return [(float(row["time"]), row["norm_id"], float(row["value"])) for row in r]


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path: str, obj):
    atomic_write(path, dumps_json(obj).encode())
