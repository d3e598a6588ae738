"""Binary snapshots and CSV time series.

A snapshot is a 256-byte ASCII header followed by the eight field arrays
``rho_d, u1, u2, u3, T, q_v, q_c, q_r`` as little-endian float64 in C
order. The header reads, padded with spaces and ending in a newline::

    MOISTNS-SNAPSHOT version=1 nx=16 ny=16 nz=16 t=0.5 params=<hex digest>
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dynamics import State
from .errors import ParseError
from .grid import Grid

MAGIC = "MOISTNS-SNAPSHOT"
FORMAT_VERSION = 1
HEADER_BYTES = 256
DTYPE = np.dtype("<f8")
TIMESERIES_COLUMNS = ("t", "dt", "min_rho_d", "min_q", "perturbation_norm")


def format_header(grid: Grid, t: float, params_hash: str, version: int = FORMAT_VERSION) -> bytes:
    text = f"{MAGIC} version={version} nx={grid.nx} ny={grid.ny} nz={grid.nz} t={float(t)!r} params={params_hash}"
    if len(text) > HEADER_BYTES - 1:
        raise ValueError("snapshot header too long")
    return (text.ljust(HEADER_BYTES - 1) + "\n").encode("ascii")


def parse_header(raw: bytes) -> dict:
    if len(raw) != HEADER_BYTES:
        raise ParseError("truncated snapshot header")
    try:
        parts = raw.decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise ParseError("snapshot header is not ASCII") from exc
    if not parts or parts[0] != MAGIC:
        raise ParseError("not a snapshot file")
    kv = dict(p.split("=", 1) for p in parts[1:] if "=" in p)
    try:
        hdr = {
            "version": int(kv["version"]),
            "nx": int(kv["nx"]),
            "ny": int(kv["ny"]),
            "nz": int(kv["nz"]),
            "t": float(kv["t"]),
            "params": kv["params"],
        }
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad snapshot header: {exc}") from exc
    if hdr["version"] > FORMAT_VERSION:
        raise ParseError(f"snapshot version {hdr['version']} is newer than {FORMAT_VERSION}")
    return hdr


def write_snapshot(path: str | Path, state: State, params_hash: str) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(format_header(state.grid, state.t, params_hash))
        for a in state.arrays():
            fh.write(np.ascontiguousarray(a, dtype=DTYPE).tobytes())
    return path


def read_snapshot(path: str | Path) -> tuple[dict, State]:
    """``(header, state)``; raises :class:`ParseError` on a malformed file."""
    raw = Path(path).read_bytes()
    hdr = parse_header(raw[:HEADER_BYTES])
    g = Grid(hdr["nx"], hdr["ny"], hdr["nz"])
    body = np.frombuffer(raw, dtype=DTYPE, offset=HEADER_BYTES)
    if body.size != 8 * g.nx * g.ny * g.nz:
        raise ParseError(f"expected {8 * g.nx * g.ny * g.nz} values, found {body.size}")
    arrays = body.reshape((8,) + g.shape).copy()
    return hdr, State.from_arrays(g, list(arrays), t=hdr["t"])


def snapshot_name(index: int) -> str:
    return f"snapshot_{index:06d}.bin"


def write_timeseries(path: str | Path, reports, params_hash: str) -> Path:
    """CSV of step reports; the first line is a ``#`` comment carrying the params hash."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# params={params_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_COLUMNS)
        for r in reports:
            w.writerow([repr(float(r.t)), repr(float(r.dt_used)), repr(float(r.min_rho_d)), repr(float(r.min_q)),
                        repr(float(r.perturbation_norm))])
    return path


def read_timeseries(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or tuple(rows[0]) != TIMESERIES_COLUMNS:
        raise ParseError("unexpected time-series columns")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(TIMESERIES_COLUMNS))
    return {c: data[:, k] for k, c in enumerate(TIMESERIES_COLUMNS)}


def write_table(path: str | Path, header, rows) -> Path:
    """Plain CSV for verify tables."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return path
