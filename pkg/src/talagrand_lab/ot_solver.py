"""Independent Wasserstein-2 oracles under the squared Euclidean cost.

* ``w2_squared_1d`` -- exact sorted / CDF-merging formulas for discrete 1D
  measures and refined quantile quadrature for continuous ones.
* ``w2_squared_exact`` -- discrete optimal transport by assignment (uniform
  equal-size) or linear programming (general weights).
* ``brute_force_w2_squared`` -- enumeration of transport-polytope vertices,
  the oracle for the exact solver on tiny instances.
* ``sinkhorn_w2_squared`` -- log-domain entropic transport with epsilon scaling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize, special, stats
from scipy.sparse import coo_matrix, vstack

from .errors import AccuracyError, DimensionMismatchError, InvalidMeasureError, SizeCapError
from .gaussian_analytics import GaussianMeasure

EXACT_CAP = 250_000
WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud; ``points`` has shape (k, n)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InvalidMeasureError("points must be a non-empty (k, n) array")
        if w.shape != (pts.shape[0],):
            raise InvalidMeasureError(f"{w.size} weights for {pts.shape[0]} points")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidMeasureError(f"weights must be nonnegative and sum to 1, got {w.sum()!r}")
        if not np.all(np.isfinite(pts)):
            raise InvalidMeasureError("points must be finite")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points):
        pts = np.asarray(points, dtype=float)
        k = pts.shape[0]
        return cls(pts, np.full(k, 1.0 / k))

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def is_uniform(self):
        return bool(np.all(self.weights == self.weights[0]))

    def scaled(self, factor):
        return DiscreteMeasure(self.points * factor, self.weights)


def _as_discrete(a):
    if isinstance(a, DiscreteMeasure):
        return a
    return DiscreteMeasure.uniform(a)


def cost_matrix(a: DiscreteMeasure, b: DiscreteMeasure):
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension {a.dim} vs {b.dim}")
    diff = a.points[:, None, :] - b.points[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


# ---------------------------------------------------------------------------
# one dimension


def _merge_cdfs(xa, wa, xb, wb):
    """Monotone (north-west corner) plan between sorted 1D supports."""
    oa, ob = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa, xb, wb = xa[oa], wa[oa], xb[ob], wb[ob]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    cuts = np.union1d(ca, cb)
    cuts = cuts[cuts > 0.0]
    mass = np.diff(np.concatenate([[0.0], cuts]))
    ia = np.minimum(np.searchsorted(ca, cuts, side="left"), xa.size - 1)
    ib = np.minimum(np.searchsorted(cb, cuts, side="left"), xb.size - 1)
    return math.fsum(mass * (xa[ia] - xb[ib]) ** 2)


def _continuous(d):
    """Return an object with vectorised ppf and isf for a 1D law."""
    if isinstance(d, GaussianMeasure):
        if d.dim != 1:
            raise DimensionMismatchError("1D oracle needs 1D measures")
        return stats.norm(loc=d.mean[0], scale=math.sqrt(d.covariance[0, 0]))
    if hasattr(d, "ppf") and hasattr(d, "isf"):
        return d
    raise TypeError(f"cannot use {type(d).__name__} as a 1D law")


def _quantile_panel_sum(qa, qb, edges, nodes, weights):
    """Gauss-Legendre panels in z; z maps to probability Phi(z)."""
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    z = (mids[:, None] + half[:, None] * nodes[None, :]).ravel()
    wz = (half[:, None] * weights[None, :]).ravel()
    neg = z < 0
    xa, xb = np.empty_like(z), np.empty_like(z)
    # lower half through ppf, upper half through isf, so neither tail loses digits
    xa[neg], xb[neg] = qa.ppf(special.ndtr(z[neg])), qb.ppf(special.ndtr(z[neg]))
    xa[~neg], xb[~neg] = qa.isf(special.ndtr(-z[~neg])), qb.isf(special.ndtr(-z[~neg]))
    integrand = (xa - xb) ** 2 * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return math.fsum(wz * integrand)


def _w2_continuous_1d(a, b, tol=1e-8, z_max=10.0, max_panels=4096):
    qa, qb = _continuous(a), _continuous(b)
    nodes, weights = np.polynomial.legendre.leggauss(16)
    panels = 8
    prev = _quantile_panel_sum(qa, qb, np.linspace(-z_max, z_max, panels + 1), nodes, weights)
    while panels < max_panels:
        panels *= 2
        cur = _quantile_panel_sum(qa, qb, np.linspace(-z_max, z_max, panels + 1), nodes, weights)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise AccuracyError("quantile quadrature did not settle", estimate=prev)


def w2_squared_1d(a, b, tol=1e-8) -> float:
    """W2^2 between two 1D laws.

    Discrete inputs (``DiscreteMeasure`` or sample arrays) use the sorted
    formula when both are uniform with equal size and CDF merging otherwise.
    Continuous inputs (``GaussianMeasure`` or objects with ``ppf``/``isf``)
    integrate (Q_a(p) - Q_b(p))^2 over p = Phi(z), refining Gauss-Legendre
    panels until successive estimates differ by less than ``tol``.
    """
    discrete = [isinstance(d, (DiscreteMeasure, np.ndarray, list, tuple)) for d in (a, b)]
    if all(discrete):
        a, b = _as_discrete(a), _as_discrete(b)
        if a.dim != 1 or b.dim != 1:
            raise DimensionMismatchError("w2_squared_1d needs 1D measures")
        xa, xb = a.points[:, 0], b.points[:, 0]
        if a.size == b.size and a.is_uniform and b.is_uniform:
            d = np.sort(xa) - np.sort(xb)
            return math.fsum(d * d) / a.size
        return _merge_cdfs(xa, a.weights, xb, b.weights)
    if any(discrete):
        raise TypeError("mixing discrete and continuous inputs is not supported")
    return _w2_continuous_1d(a, b, tol)


def quantile_grid_w2_squared(a, b, points: int) -> float:
    """Midpoint rule on the probability grid (i + 1/2) / points."""
    qa, qb = _continuous(a), _continuous(b)
    p = (np.arange(points) + 0.5) / points
    lower = p <= 0.5
    xa = np.where(lower, qa.ppf(np.where(lower, p, 0.5)), qa.isf(np.where(lower, 0.5, 1.0 - p)))
    xb = np.where(lower, qb.ppf(np.where(lower, p, 0.5)), qb.isf(np.where(lower, 0.5, 1.0 - p)))
    d = xa - xb
    return math.fsum(d * d) / points


# ---------------------------------------------------------------------------
# exact discrete transport


def _check_cap(a, b):
    if a.size * b.size > EXACT_CAP:
        raise SizeCapError(f"k_a * k_b = {a.size * b.size} exceeds the cap {EXACT_CAP}")


def w2_squared_exact(a, b) -> float:
    """Exact optimal transport cost (squared Euclidean ground cost)."""
    a, b = _as_discrete(a), _as_discrete(b)
    _check_cap(a, b)
    C = cost_matrix(a, b)
    if a.size == b.size and a.is_uniform and b.is_uniform:
        rows, cols = optimize.linear_sum_assignment(C)
        return math.fsum(C[rows, cols]) / a.size
    ka, kb = a.size, b.size
    # equality constraints: row sums = a.weights, column sums = b.weights
    row_idx = np.repeat(np.arange(ka), kb)
    col_idx = np.tile(np.arange(kb), ka)
    data = np.ones(ka * kb)
    A_rows = coo_matrix((data, (row_idx, np.arange(ka * kb))), shape=(ka, ka * kb))
    A_cols = coo_matrix((data, (col_idx, np.arange(ka * kb))), shape=(kb, ka * kb))
    A_eq = vstack([A_rows, A_cols]).tocsr()
    b_eq = np.concatenate([a.weights, b.weights])
    res = optimize.linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise AccuracyError(f"transport LP failed: {res.message}")
    return float(res.fun)


def brute_force_w2_squared(a, b) -> float:
    """Minimum cost over all vertices of the transport polytope.

    Vertices are basic feasible solutions: plans supported on at most
    k_a + k_b - 1 cells whose values are pinned by the marginal equations.
    Every subset of that size is tried; only tiny instances are feasible.
    """
    a, b = _as_discrete(a), _as_discrete(b)
    ka, kb = a.size, b.size
    if ka * kb > 16:
        raise SizeCapError("brute-force enumeration is limited to k_a * k_b <= 16")
    C = cost_matrix(a, b).ravel()
    cells = ka * kb
    A = np.zeros((ka + kb, cells))
    for i in range(ka):
        for j in range(kb):
            A[i, i * kb + j] = 1.0
            A[ka + j, i * kb + j] = 1.0
    rhs = np.concatenate([a.weights, b.weights])
    best = math.inf
    basis = min(ka + kb - 1, cells)
    for support in itertools.combinations(range(cells), basis):
        sub = A[:, support]
        if np.linalg.matrix_rank(sub) < basis:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.max(np.abs(sub @ x - rhs)) > 1e-10 or np.min(x) < -1e-12:
            continue
        best = min(best, float(C[list(support)] @ x))
    return best


# ---------------------------------------------------------------------------
# entropic transport


class SinkhornResult(NamedTuple):
    value: float
    residual: float
    epsilon: float
    iterations: int


def _lse(a, axis):
    top = np.max(a, axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    # clamping keeps exp off its slow underflow path; each term lost is below e^-700
    shifted = np.maximum(a - top, -700.0)
    return np.log(np.sum(np.exp(shifted), axis=axis)) + np.squeeze(top, axis=axis)


def _row_residual(f, g, C, la, lb, eps):
    logP = (f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :]
    return float(np.sum(np.abs(np.exp(_lse(logP, 1)) - np.exp(la))))


def _sinkhorn(C, la, lb, epsilon, tol, max_iters, check_every=10):
    f = np.zeros(C.shape[0])
    g = np.zeros(C.shape[1])
    eps = 1.0
    iterations = 0
    residual = math.inf
    while True:
        eps = max(eps, epsilon)
        stage_tol = tol if eps == epsilon else max(tol, 1e-3)
        while iterations < max_iters:
            iterations += 1
            f = -eps * _lse((g[None, :] - C) / eps + lb[None, :], 1)
            g = -eps * _lse((f[:, None] - C) / eps + la[:, None], 0)
            # column marginals are exact after the g update; rows carry the error
            if iterations % check_every == 0:
                residual = _row_residual(f, g, C, la, lb, eps)
                if residual < stage_tol:
                    break
        if eps == epsilon or iterations >= max_iters:
            break
        eps *= 0.5
    residual = _row_residual(f, g, C, la, lb, eps)
    P = np.exp((f[:, None] + g[None, :] - C) / eps + la[:, None] + lb[None, :])
    return float(np.sum(P * C)), residual, iterations


def sinkhorn_w2_squared(a, b, epsilon=1e-3, max_iters=100000, tol=1e-5, debias=False) -> SinkhornResult:
    """Transport cost <P_eps, C> of the entropic optimal plan.

    Log-domain updates with epsilon halved from 1 down to ``epsilon``;
    potentials are warm-started across stages.  ``residual`` is the L1
    error of the row marginal.  With ``debias`` the self-transport costs of
    ``a`` and ``b`` are subtracted (half each), which sends the value to 0
    for identical inputs.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    a, b = _as_discrete(a), _as_discrete(b)

    def solve(p, q):
        C = cost_matrix(p, q)
        with np.errstate(divide="ignore"):
            la, lb = np.log(p.weights), np.log(q.weights)
        value, residual, iters = _sinkhorn(C, la, lb, epsilon, tol, max_iters)
        if not residual < tol:
            raise AccuracyError(f"Sinkhorn did not converge: marginal residual {residual:.3e}",
                                estimate=value)
        return value, residual, iters

    value, residual, iters = solve(a, b)
    if debias:
        va, ra, ia = solve(a, a)
        vb, rb, ib = solve(b, b)
        value = value - 0.5 * (va + vb)
        residual = max(residual, ra, rb)
        iters += ia + ib
    return SinkhornResult(value, residual, epsilon, iters)
