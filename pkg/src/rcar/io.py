"""Serialization: trajectory CSV and binary frames, estimate CSVs, JSON reports.

CSV files follow RFC 4180 (CRLF line endings, minimal quoting, header row
always present).  Floats are written with ``repr`` so they read back
bit-for-bit.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import struct
from pathlib import Path

import numpy as np

from .process import Trajectory

MAGIC = b"RCAR1\x00"
FORMAT_VERSION = 1
_NO_SEED = 0xFFFFFFFF


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------


def trajectory_rows(traj: Trajectory):
    if traj.has_driving:
        yield ["0", fmt(traj.x0), "", ""]
        for i, (x, r, e) in enumerate(zip(traj.states, traj.rho, traj.eps), start=1):
            yield [str(i), fmt(x), fmt(r), fmt(e)]
    else:
        yield ["0", fmt(traj.x0)]
        for i, x in enumerate(traj.states, start=1):
            yield [str(i), fmt(x)]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``index, x[, rho, eps]``; row 0 is the initial state."""
    header = ["index", "x", "rho", "eps"] if traj.has_driving else ["index", "x"]
    write_csv(path, header, trajectory_rows(traj))


def read_trajectory_csv(path, seed_id=None) -> Trajectory:
    header, rows = read_csv(path)
    if header[:2] != ["index", "x"]:
        raise ValueError(f"{path}: not a trajectory CSV (header {header})")
    if [int(r[0]) for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: index column must run 0..n")
    x0 = float(rows[0][1])
    states = np.array([float(r[1]) for r in rows[1:]])
    if "rho" in header:
        rho = np.array([float(r[2]) for r in rows[1:]])
        eps = np.array([float(r[3]) for r in rows[1:]])
        return Trajectory(x0, states, rho, eps, seed_id)
    return Trajectory(x0, states, seed_id=seed_id)


def trajectory_to_bytes(traj: Trajectory) -> bytes:
    """Binary frame: magic, version, flags, n, seed id, then little-endian f8 data."""
    flags = 1 if traj.has_driving else 0
    parts = [MAGIC, struct.pack("<BBQ", FORMAT_VERSION, flags, traj.n)]
    if traj.seed_id is None:
        parts.append(struct.pack("<I", _NO_SEED))
    else:
        sid = traj.seed_id.encode("utf-8")
        parts.append(struct.pack("<I", len(sid)) + sid)
    parts.append(struct.pack("<d", traj.x0))
    parts.append(traj.states.astype("<f8").tobytes())
    if traj.has_driving:
        parts.append(traj.rho.astype("<f8").tobytes())
        parts.append(traj.eps.astype("<f8").tobytes())
    return b"".join(parts)


def trajectory_from_bytes(buf: bytes) -> Trajectory:
    if buf[:len(MAGIC)] != MAGIC:
        raise ValueError("bad magic header")
    off = len(MAGIC)
    version, flags, n = struct.unpack_from("<BBQ", buf, off)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported frame version {version}")
    off += struct.calcsize("<BBQ")
    (slen,) = struct.unpack_from("<I", buf, off)
    off += 4
    seed_id = None
    if slen != _NO_SEED:
        seed_id = buf[off:off + slen].decode("utf-8")
        off += slen
    (x0,) = struct.unpack_from("<d", buf, off)
    off += 8
    n_arrays = 3 if flags & 1 else 1
    expected = off + 8 * n * n_arrays
    if len(buf) != expected:
        raise ValueError(f"frame length {len(buf)} does not match header ({expected})")
    data = np.frombuffer(buf, dtype="<f8", offset=off).astype(np.float64)
    states = data[:n]
    if flags & 1:
        return Trajectory(x0, states, data[n:2 * n], data[2 * n:], seed_id)
    return Trajectory(x0, states, seed_id=seed_id)


def write_trajectory_binary(traj: Trajectory, path) -> None:
    Path(path).write_bytes(trajectory_to_bytes(traj))


def read_trajectory_binary(path) -> Trajectory:
    return trajectory_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# Estimates
# --------------------------------------------------------------------------


def transition_rows(estimates):
    for est in estimates:
        for y, v in zip(est.y_grid, est.values):
            yield [est.x, est.h, y, v, est.bin_count, est.empty_bin]


def write_transition_csv(estimates, path) -> None:
    write_csv(path, ["x", "h", "y", "value", "bin_count", "empty"], transition_rows(estimates))


def cf_rows(estimates):
    for est in estimates:
        for t, v, ok in zip(est.t_grid, est.values, est.valid):
            re, im = (v.real, v.imag) if ok else (0.0, 0.0)
            yield [est.x, est.h, t, re, im, bool(ok)]


def write_cf_csv(estimates, path) -> None:
    """Complex values go out as separate ``re``/``im`` columns."""
    write_csv(path, ["x", "h", "t", "re", "im", "valid"], cf_rows(estimates))


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def to_jsonable(obj):
    """Plain-JSON view of reports: non-finite floats become strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")
