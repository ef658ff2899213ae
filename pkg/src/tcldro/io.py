"""CSV and JSON readers/writers.

Matrices are written densely with rows indexed by the destination state and
columns by the origin state, under the header ``to\\from,s0,...``. Floats use
the shortest round-trip representation, so a write/read cycle is exact and
identical inputs give identical files. Every write goes through a temporary
file and an atomic rename.
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .markov import SampleSet, StateSpace, check_stochastic

CORNER = "to\\from"


def _fmt(x) -> str:
    return repr(float(x))


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_rows(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path} is empty")
    return rows[0], rows[1:]


def _floats(values, path) -> list:
    try:
        return [float(v) for v in values]
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from None


def _state_header(n):
    return [f"s{i}" for i in range(n)]


def _matrix_rows(M, prefix=()):
    return [list(prefix) + [f"s{a}"] + [_fmt(v) for v in M[a]] for a in range(M.shape[0])]


def _parse_matrix_block(rows, n, path):
    M = np.empty((n, n))
    for a, row in enumerate(rows):
        if row[0] != f"s{a}":
            raise DataError(f"{path}: expected row label s{a}, got {row[0]!r}")
        vals = _floats(row[1:], path)
        if len(vals) != n:
            raise DataError(f"{path}: row s{a} has {len(vals)} entries, expected {n}")
        M[a] = vals
    return M


def write_matrix_csv(path, M) -> Path:
    M = np.asarray(M, dtype=float)
    return write_text(path, _csv_text([CORNER] + _state_header(M.shape[1]), _matrix_rows(M)))


def read_matrix_csv(path, stochastic: bool = True) -> np.ndarray:
    header, rows = _read_rows(path)
    if header[0] != CORNER:
        raise DataError(f"{path}: matrix CSV must start with {CORNER!r}")
    n = len(header) - 1
    if len(rows) != n:
        raise DataError(f"{path}: expected {n} rows, found {len(rows)}")
    M = _parse_matrix_block(rows, n, path)
    return check_stochastic(M, name=str(path)) if stochastic else M


def write_samples_csv(path, samples) -> Path:
    mats = np.asarray(getattr(samples, "matrices", samples), dtype=float)
    n = mats.shape[1]
    rows = []
    for j, M in enumerate(mats):
        rows.extend(_matrix_rows(M, prefix=(j,)))
    return write_text(path, _csv_text(["sample_id", CORNER] + _state_header(n), rows))


def read_samples_csv(path) -> SampleSet:
    header, rows = _read_rows(path)
    if header[:2] != ["sample_id", CORNER]:
        raise DataError(f"{path}: sample CSV must start with 'sample_id,{CORNER}'")
    n = len(header) - 2
    if n < 1 or len(rows) % n:
        raise DataError(f"{path}: row count {len(rows)} is not a multiple of {n}")
    mats = []
    for j in range(len(rows) // n):
        block = rows[j * n:(j + 1) * n]
        if any(r[0] != str(j) for r in block):
            raise DataError(f"{path}: sample ids must run 0, 1, ... in blocks of {n} rows")
        mats.append(_parse_matrix_block([r[1:] for r in block], n, path))
    return SampleSet(np.array(mats), {"kind": "observed", "source": str(path)})


def write_state_space_json(path, space: StateSpace) -> Path:
    return write_text(path, json.dumps(space.to_dict(), indent=2) + "\n")


def read_state_space_json(path) -> StateSpace:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        data = json.loads(path.read_text())
        return StateSpace.from_dict(data)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed state space JSON ({exc})") from None


def write_trace_csv(path, power) -> Path:
    rows = [[t, _fmt(p)] for t, p in enumerate(np.asarray(power, dtype=float))]
    return write_text(path, _csv_text(["step", "aggregate_power_kw"], rows))


def read_trace_csv(path) -> np.ndarray:
    header, rows = _read_rows(path)
    if header != ["step", "aggregate_power_kw"]:
        raise DataError(f"{path}: trace CSV needs header step,aggregate_power_kw")
    return np.array(_floats([r[1] for r in rows], path))


def write_temperatures_csv(path, theta) -> Path:
    theta = np.asarray(theta, dtype=float)
    rows = [[t, i, _fmt(theta[t, i])] for t in range(theta.shape[0]) for i in range(theta.shape[1])]
    return write_text(path, _csv_text(["step", "device_id", "theta_c"], rows))


def write_policy_csv(path, policy) -> Path:
    policy = np.asarray(policy, dtype=float)
    rows = []
    for t, M in enumerate(policy):
        rows.extend(_matrix_rows(M, prefix=(t,)))
    return write_text(path, _csv_text(["t", CORNER] + _state_header(policy.shape[1]), rows))


def read_policy_csv(path) -> np.ndarray:
    header, rows = _read_rows(path)
    if header[:2] != ["t", CORNER]:
        raise DataError(f"{path}: policy CSV must start with 't,{CORNER}'")
    n = len(header) - 2
    if n < 1 or len(rows) % n:
        raise DataError(f"{path}: row count {len(rows)} is not a multiple of {n}")
    mats = [_parse_matrix_block([r[1:] for r in rows[t * n:(t + 1) * n]], n, path)
            for t in range(len(rows) // n)]
    return check_stochastic(np.array(mats), name=str(path))


def write_value_csv(path, vf) -> Path:
    phi, z = vf.phi, vf.z
    rows = [[t, a, _fmt(phi[t, a]), _fmt(z[t, a])]
            for t in range(phi.shape[0]) for a in range(phi.shape[1])]
    return write_text(path, _csv_text(["t", "state", "phi", "z"], rows))


def write_distribution_csv(path, rho) -> Path:
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    rows = [[t, a, _fmt(rho[t, a])] for t in range(rho.shape[0]) for a in range(rho.shape[1])]
    return write_text(path, _csv_text(["t", "state", "prob"], rows))


def read_distribution_csv(path) -> np.ndarray:
    """Read a ``t,state,prob`` file; returns the rows as a ``(T + 1, n)`` array."""
    header, rows = _read_rows(path)
    if header != ["t", "state", "prob"]:
        raise DataError(f"{path}: distribution CSV needs header t,state,prob")
    t = np.array([int(r[0]) for r in rows])
    a = np.array([int(r[1]) for r in rows])
    out = np.zeros((t.max() + 1, a.max() + 1))
    out[t, a] = _floats([r[2] for r in rows], path)
    return out


def write_rows_csv(path, rows, fieldnames=None) -> Path:
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    body = [[_fmt(r[k]) if isinstance(r[k], (float, np.floating)) else r[k] for k in fieldnames]
            for r in rows]
    return write_text(path, _csv_text(fieldnames, body))


def write_json(path, doc) -> Path:
    return write_text(path, json.dumps(doc, indent=2) + "\n")
