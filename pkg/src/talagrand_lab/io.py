"""Plain-text and binary serialisation.

CSV files start with the schema line ``# talagrand-lab v1`` followed by a
column header; floats are written with 12 significant digits so reruns with
the same seed are byte-identical.  Path ensembles use the ``WPE1`` binary
layout:

    magic  b"WPE1"
    uint64 steps m, dimension n, paths N, seed      (little endian)
    uint8  direction (0 forward, 1 reversed)
    float64 node values, path-major, shape (N, m + 1, n)
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import LabError
from .integrands import DeterministicIntegrand, tabulated_integrand
from .ot_solver import DiscreteMeasure
from .santalo_check import GridFunction1D
from .wiener_engine import FORWARD, REVERSED, PathEnsemble

SCHEMA_LINE = "# talagrand-lab v1"
MAGIC = b"WPE1"
_HEADER = struct.Struct("<4sQQQQB")


def fmt(value):
    """12 significant digits for reals; integers, strings and booleans as-is."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    if value is None:
        return ""
    return str(value)


def csv_text(columns, rows):
    buf = _io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(columns, rows), encoding="utf-8")
    return path


def read_csv(path):
    """Return (columns, rows of strings); checks the schema line."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != SCHEMA_LINE:
        raise LabError(f"{path}: missing schema line {SCHEMA_LINE!r}")
    reader = csv.reader(lines[1:])
    columns = next(reader)
    return columns, [row for row in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return fmt(v)
        return float(format(v, ".12g"))
    return obj


def json_text(doc):
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(doc), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# ensembles


def dump_ensemble(e: PathEnsemble, path):
    path = Path(path)
    direction = 0 if e.direction == FORWARD else 1
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, e.grid.steps, e.dimension, e.num_paths, e.seed & (2**64 - 1), direction))
        for _, _, nodes in e.iter_blocks():
            fh.write(np.ascontiguousarray(nodes, dtype="<f8").tobytes())
    return path


def load_ensemble(path) -> PathEnsemble:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise LabError(f"{path}: truncated ensemble header")
    magic, m, n, N, seed, direction = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise LabError(f"{path}: bad magic {magic!r}")
    expected = N * (m + 1) * n * 8
    if len(raw) - _HEADER.size != expected:
        raise LabError(f"{path}: expected {expected} data bytes, found {len(raw) - _HEADER.size}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(N, m + 1, n)
    return PathEnsemble.from_array(data, seed=seed, direction=REVERSED if direction else FORWARD)


def ensemble_summary_rows(e: PathEnsemble):
    """Per node: t, then mean and variance of each coordinate."""
    from .wiener_engine import node_statistics

    mean, var = node_statistics(e)
    cols = ["t"] + [f"mean_{i}" for i in range(e.dimension)] + [f"var_{i}" for i in range(e.dimension)]
    rows = [[t, *mean[k], *var[k]] for k, t in enumerate(e.grid.nodes)]
    return cols, rows


# ---------------------------------------------------------------------------
# integrands, measures, grid functions


def integrand_rows(f, steps=None):
    """Columns and rows for a tabulated view of a deterministic or regression integrand."""
    from .representation_lab import RegressionIntegrand

    if isinstance(f, RegressionIntegrand):
        H = f.basis.size
        cols = ["t", "hat_lo", "hat_hi"] + [f"coef_{j}" for j in range(H)]
        return cols, f.table_rows().tolist()
    if isinstance(f, DeterministicIntegrand):
        m = steps or f.table_steps or 1000
        table = f.table(m)
        t = np.arange(m + 1) / m
        if f.dim == 1:
            return ["t", "value"], [[t[k], table[k, 0, 0]] for k in range(m + 1)]
        n = f.dim
        cols = ["t"] + [f"v_{i}_{j}" for i in range(n) for j in range(n)]
        return cols, [[t[k], *table[k].ravel()] for k in range(m + 1)]
    raise LabError(f"cannot tabulate integrand of kind {f.kind!r}")


def read_integrand(path, family="tabulated"):
    cols, rows = read_csv(path)
    data = np.array(rows, dtype=float)
    if cols[:2] == ["t", "value"]:
        return tabulated_integrand(data[:, 1], family)
    n = int(round(math.sqrt(len(cols) - 1)))
    if n * n != len(cols) - 1:
        raise LabError(f"{path}: unrecognised integrand columns")
    return tabulated_integrand(data[:, 1:].reshape(-1, n, n), family)


def measure_rows(a: DiscreteMeasure):
    cols = ["weight"] + [f"x{i + 1}" for i in range(a.dim)]
    return cols, [[w, *p] for w, p in zip(a.weights, a.points)]


def read_measure(path) -> DiscreteMeasure:
    _, rows = read_csv(path)
    data = np.array(rows, dtype=float)
    w = data[:, 0]
    return DiscreteMeasure(data[:, 1:], w / w.sum())


def grid_function_rows(f: GridFunction1D):
    return ["x", "value"], [[x, v] for x, v in zip(f.nodes, f.values)]


def read_grid_function(path, label="") -> GridFunction1D:
    _, rows = read_csv(path)
    data = np.array(rows, dtype=float)
    return GridFunction1D(data[:, 0], data[:, 1], label)
