"""Discretised Wiener space on [0, 1].

Paths live on the uniform grid t_k = k/m and are generated lazily in blocks
of paths from the counter-based generator in :mod:`talagrand_lab.rng`, so an
ensemble of 10^5 paths x 10^3 steps never has to sit in memory at once.

Time reversal is an index transform on the same underlying randomness:
B_hat(t_k) = B(1) - B(1 - t_k).  Reversing twice returns the original
ensemble bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import rng
from .errors import DimensionMismatchError, UnsupportedKindError
from .integrands import (
    DeterministicIntegrand,
    Integrand,
    ReversedRepresentation,
    StateFeedbackIntegrand,
)

FORWARD = "forward"
REVERSED = "reversed"
_BLOCK_FLOATS = 1 << 22
_CACHE_FLOATS = 2 * 10**7


@dataclass(frozen=True)
class TimeGrid:
    steps: int = 1000

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError("a time grid needs at least one step")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self):
        return 1.0 / self.steps

    @property
    def nodes(self):
        return np.arange(self.steps + 1) / self.steps

    def index(self, t, tol=1e-12):
        """Grid index of node ``t``; raises ValueError if ``t`` is off-grid."""
        k = int(round(float(t) * self.steps))
        if not 0 <= k <= self.steps or abs(k / self.steps - float(t)) > tol:
            raise ValueError(f"t = {t!r} is not a node of the {self.steps}-step grid")
        return k


def _flip_nodes(nodes):
    """B_hat(t_k) = B(1) - B(1 - t_k) along axis 1."""
    return nodes[:, -1:, :] - nodes[:, ::-1, :]


class _Source:
    """Shared randomness behind an ensemble and its reversal."""

    def __init__(self, grid, dimension, num_paths, seed, data=None, native=FORWARD):
        self.grid = grid
        self.dimension = dimension
        self.num_paths = num_paths
        self.seed = seed
        self.native = native
        self._data = data
        self._cacheable = data is None and num_paths * (grid.steps + 1) * dimension <= _CACHE_FLOATS

    def _generate(self, start, stop):
        m, n = self.grid.steps, self.dimension
        z = rng.standard_normals(self.seed, start, stop, m * n).reshape(stop - start, m, n)
        nodes = np.zeros((stop - start, m + 1, n))
        np.cumsum(z * math.sqrt(self.grid.dt), axis=1, out=nodes[:, 1:, :])
        return nodes

    def native_block(self, start, stop):
        if self._data is None and self._cacheable:
            self._data = self._generate(0, self.num_paths)
            self._data.setflags(write=False)
        if self._data is not None:
            return self._data[start:stop]
        return self._generate(start, stop)


class PathEnsemble:
    """A batch of discretised Brownian paths on a shared grid.

    ``paths`` has shape (num_paths, steps + 1, dimension); prefer
    :meth:`iter_blocks` for large ensembles.
    """

    def __init__(self, source, direction):
        if direction not in (FORWARD, REVERSED):
            raise ValueError(f"unknown direction {direction!r}")
        self._source = source
        self.direction = direction

    grid = property(lambda self: self._source.grid)
    dimension = property(lambda self: self._source.dimension)
    num_paths = property(lambda self: self._source.num_paths)
    seed = property(lambda self: self._source.seed)

    @classmethod
    def from_array(cls, paths, seed=0, direction=FORWARD):
        paths = np.array(paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[:, :, None]
        if paths.ndim != 3 or paths.shape[1] < 2:
            raise ValueError("paths must have shape (N, m + 1, n)")
        if np.any(paths[:, 0, :] != 0.0):
            raise ValueError("every path must start at 0")
        paths.setflags(write=False)
        src = _Source(TimeGrid(paths.shape[1] - 1), paths.shape[2], paths.shape[0], seed,
                      data=paths, native=direction)
        return cls(src, direction)

    def block_nodes(self, start, stop):
        nodes = self._source.native_block(start, stop)
        return nodes if self.direction == self._source.native else _flip_nodes(nodes)

    def default_block_size(self):
        return max(1, _BLOCK_FLOATS // ((self.grid.steps + 1) * self.dimension))

    def iter_blocks(self, block_size=None) -> Iterator[tuple[int, int, np.ndarray]]:
        size = block_size or self.default_block_size()
        for start in range(0, self.num_paths, size):
            stop = min(start + size, self.num_paths)
            yield start, stop, self.block_nodes(start, stop)

    @property
    def paths(self):
        return self.block_nodes(0, self.num_paths)

    def same_randomness(self, other):
        return self._source is other._source

    def __repr__(self):
        return (f"PathEnsemble(steps={self.grid.steps}, dimension={self.dimension}, "
                f"num_paths={self.num_paths}, seed={self.seed}, direction={self.direction!r})")


@dataclass(frozen=True, eq=False)
class SampleVector:
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)

    @property
    def num_paths(self):
        return self.values.shape[0]


def sample_paths(grid, dimension, num_paths, seed) -> PathEnsemble:
    """Brownian ensemble with i.i.d. N(0, dt) increments, reproducible from ``seed``."""
    if isinstance(grid, int):
        grid = TimeGrid(grid)
    if num_paths < 1 or dimension < 1:
        raise ValueError("need at least one path and one dimension")
    return PathEnsemble(_Source(grid, int(dimension), int(num_paths), int(seed)), FORWARD)


def reverse(e: PathEnsemble) -> PathEnsemble:
    return PathEnsemble(e._source, REVERSED if e.direction == FORWARD else FORWARD)


def step_values(f: Integrand, nodes, grid):
    """Integrand values at the left endpoint of every step along each path.

    Returns an array of shape (P, m, n, n) where P is 1 for deterministic
    integrands (broadcast over paths) and the block size otherwise.
    """
    m = grid.steps
    if isinstance(f, DeterministicIntegrand):
        if f.dim != nodes.shape[2]:
            raise DimensionMismatchError(f"integrand dim {f.dim} vs path dim {nodes.shape[2]}")
        return f.table(m)[None, :m]
    if isinstance(f, StateFeedbackIntegrand):
        if nodes.shape[2] != 1:
            raise DimensionMismatchError("state-feedback integrands need 1D paths")
        times = grid.nodes
        path = nodes[:, :, 0]
        vals = np.empty((nodes.shape[0], m))
        if not f.has_drift:
            for k in range(m):
                vals[:, k] = f.at_step(k, times[k], path[:, k])
        else:
            state = np.zeros(nodes.shape[0])
            dt = grid.dt
            for k in range(m):
                vals[:, k], b = f.value_and_drift(times[k], state)
                state = state + (path[:, k + 1] - path[:, k]) + b * dt
        return vals[:, :, None, None]
    raise UnsupportedKindError(f"cannot evaluate integrand of kind {f.kind!r} along paths")


def drifted_states(f: StateFeedbackIntegrand, nodes, grid):
    """Euler-Maruyama state process dX = dB + b(t, X) dt on a block, shape (P, m + 1)."""
    path = nodes[:, :, 0]
    if not f.has_drift:
        return path.copy()
    out = np.zeros_like(path)
    for k in range(grid.steps):
        out[:, k + 1] = out[:, k] + (path[:, k + 1] - path[:, k]) + f.drift(grid.nodes[k], out[:, k]) * grid.dt
    return out


def _contributions(f, nodes, grid):
    vals = step_values(f, nodes, grid)
    dB = np.diff(nodes, axis=1)
    return np.einsum("pkij,qkj->qki", vals, dB) if vals.shape[0] == 1 else np.einsum(
        "pkij,pkj->pki", vals, dB)


def _partial_sums(f, e, indices):
    """Partial Ito sums sum_{k < j} F_k dB_k for each j in ``indices``."""
    if isinstance(f, ReversedRepresentation):
        return _partial_sums(f.inner, reverse(e), indices)
    m = e.grid.steps
    for j in indices:
        if not 0 <= j <= m:
            raise ValueError(f"index {j} outside grid")
    out = {j: np.empty((e.num_paths, e.dimension)) for j in indices}
    for start, stop, nodes in e.iter_blocks():
        c = _contributions(f, nodes, e.grid)
        csum = np.cumsum(c, axis=1)
        for j in indices:
            out[j][start:stop] = 0.0 if j == 0 else csum[:, j - 1, :]
    return out


def ito_integral(f: Integrand, e: PathEnsemble) -> SampleVector:
    """Left-endpoint Ito sum sum_k F(t_k, state_k) (path(t_{k+1}) - path(t_k))."""
    m = e.grid.steps
    vals = _partial_sums(f, e, [m])[m]
    return SampleVector(vals, provenance=f"ito[{f.family}|{e.direction}|seed={e.seed}]")


def martingale_snapshot(f: Integrand, e: PathEnsemble, t) -> SampleVector:
    """E[X | F_t] for X = int F dB, i.e. the partial Ito sum up to node ``t``."""
    j = e.grid.index(t)
    vals = _partial_sums(f, e, [j])[j]
    return SampleVector(vals, provenance=f"snapshot[{f.family}|t={t}]")


def martingale_snapshots(f: Integrand, e: PathEnsemble, times):
    idx = [e.grid.index(t) for t in times]
    sums = _partial_sums(f, e, sorted(set(idx)))
    return [SampleVector(sums[j], provenance=f"snapshot[{f.family}|t={t}]") for t, j in zip(times, idx)]


def second_moment(v: SampleVector):
    """Mean squared Euclidean norm with its standard error, as (value, std_error)."""
    q = np.einsum("pi,pi->p", v.values, v.values)
    if q.size == 0:
        raise ValueError("empty sample")
    value = math.fsum(q) / q.size
    se = float(np.std(q, ddof=1) / math.sqrt(q.size)) if q.size > 1 else 0.0
    return value, se


def increment_moments(e: PathEnsemble):
    """Per-step sample mean and variance of increments, each of shape (m, n)."""
    m, n = e.grid.steps, e.dimension
    s1 = np.zeros((m, n))
    s2 = np.zeros((m, n))
    for _, _, nodes in e.iter_blocks():
        d = np.diff(nodes, axis=1)
        s1 += d.sum(axis=0)
        s2 += (d * d).sum(axis=0)
    N = e.num_paths
    mean = s1 / N
    var = (s2 - N * mean * mean) / max(N - 1, 1)
    return mean, var


def node_statistics(e: PathEnsemble):
    """Per-node sample mean and variance of path values, each (m + 1, n)."""
    m, n = e.grid.steps, e.dimension
    s1 = np.zeros((m + 1, n))
    s2 = np.zeros((m + 1, n))
    for _, _, nodes in e.iter_blocks():
        s1 += nodes.sum(axis=0)
        s2 += (nodes * nodes).sum(axis=0)
    N = e.num_paths
    mean = s1 / N
    var = (s2 - N * mean * mean) / max(N - 1, 1)
    return mean, var
