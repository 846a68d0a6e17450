"""Martingale representations of measures and the variational entropy functional.

The functional is

    J(F) = 1/2 * int_0^1 E||F_t - I||^2 / (1 - t) dt,

whose infimum over representations int F dB ~ mu equals D(mu || gamma).
Optimal integrands are available in closed form for centered Gaussians
(deterministic) and for centered 1D Gaussian mixtures (state feedback along
the Foellmer process, built from the heat semigroup applied to d mu / d gamma).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special
from scipy.sparse.linalg import LinearOperator, cg

from .errors import (
    AccuracyError,
    BasisDegeneracyError,
    DimensionMismatchError,
    HypothesisError,
    SizeCapError,
    UnsupportedKindError,
)
from .gaussian_analytics import (
    CENTERED_TOL,
    GaussianMeasure,
    GaussianMixture1D,
    kl_mixture_to_gamma,
    kl_to_gamma,
)
from .integrands import (
    DeterministicIntegrand,
    Integrand,
    ReversedRepresentation,
    StateFeedbackIntegrand,
)
from .wiener_engine import (
    PathEnsemble,
    SampleVector,
    TimeGrid,
    martingale_snapshot,
    reverse,
    step_values,
)

DIVERGENCE_CAP = 1e6
LOG_TINY = math.log(1e-300)


# ---------------------------------------------------------------------------
# optimal integrands


def gaussian_integrand(C) -> DeterministicIntegrand:
    """F_t = C ((1 - t) I + t C)^{-1}, the entropy-optimal representation of N(0, C)."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    lam, vec = np.linalg.eigh(0.5 * (C + C.T))
    if np.min(lam) <= 1e-14 * max(1.0, np.max(np.abs(lam))):
        raise HypothesisError("C must be symmetric positive definite")
    n = lam.size

    def fn(t):
        t = np.asarray(t, dtype=float)[..., None]
        scale = lam / (1.0 - t + lam * t)
        return np.einsum("ij,...j,kj->...ik", vec, scale, vec)

    return DeterministicIntegrand("gaussian_optimal", n, fn=fn, params={"C": C.tolist()})


def _log_heat_terms(m: GaussianMixture1D, s, x):
    """Per-component log P_s h, its x-derivative and second derivative.

    h = d mu / d gamma and P_s is the heat semigroup at time s.  For the
    component N(m_i, v_i) with D_i = v_i + s (1 - v_i):

        log P_s h_i(x) = log w_i - log(D_i)/2
                         + (-(1 - s) m_i^2 + 2 m_i x + (v_i - 1) x^2) / (2 D_i)
    """
    x = np.asarray(x, dtype=float)[..., None]
    w, mu, v = m.weights, m.means, m.variances
    D = v + s * (1.0 - v)
    g = np.log(w) - 0.5 * np.log(D) + (-(1.0 - s) * mu**2 + 2.0 * mu * x + (v - 1.0) * x * x) / (2.0 * D)
    d1 = (mu + (v - 1.0) * x) / D
    d2 = np.broadcast_to((v - 1.0) / D, g.shape)
    return g, d1, d2


def log_heat_h(m: GaussianMixture1D, s, x):
    """log P_s h(x), d/dx log P_s h(x), d^2/dx^2 log P_s h(x) for the mixture m."""
    g, d1, d2 = _log_heat_terms(m, s, x)
    top = np.max(g, axis=-1, keepdims=True)
    r = np.exp(g - top)
    total = np.sum(r, axis=-1, keepdims=True)
    lse = (top + np.log(total))[..., 0]
    if np.any(lse < LOG_TINY):
        raise AccuracyError("P_s h underflows below 1e-300; state left the mixture's support")
    r /= total
    b = np.sum(r * d1, axis=-1)
    second = np.sum(r * (d2 + d1 * d1), axis=-1) - b * b
    return lse, b, second


def follmer_integrand_1d(m: GaussianMixture1D) -> StateFeedbackIntegrand:
    """F_t(x) = 1 + (1 - t) d^2/dx^2 log P_{1-t} h (x) with drift d/dx log P_{1-t} h.

    Integrated along the drifted state dX = dB + b_t(X) dt this represents
    the centered mixture ``m`` and attains the infimum of J.
    """
    if not m.is_centered():
        raise HypothesisError(f"mixture must be centered, mean = {m.mean:.3e}")

    def fn(t, x):
        s = 1.0 - t
        return 1.0 + s * log_heat_h(m, s, x)[2]

    def drift(t, x):
        return log_heat_h(m, 1.0 - t, x)[1]

    def joint(t, x):
        s = 1.0 - t
        _, b, second = log_heat_h(m, s, x)
        return 1.0 + s * second, b

    return StateFeedbackIntegrand("follmer", fn, drift=drift, joint=joint, params={"mixture": m.to_dict()})


def perturbed_gaussian_integrand(alpha, eps, psi_coefficients, tol=1e-10):
    """A suboptimal deterministic representation of N(0, alpha).

    Starts from F* + eps (1 - t) psi(t), psi(t) = sum_j a_j cos(j pi t), then
    rescales the deviation from 1 by the scalar c (found by bisection) that
    restores int F^2 dt = alpha.  F stays equal to 1 at t = 1, so J is finite.
    """
    base = gaussian_integrand([[alpha]])
    a = np.asarray(psi_coefficients, dtype=float)
    freqs = np.arange(a.size)

    def raw(t):
        t = np.asarray(t, dtype=float)
        psi = np.cos(np.pi * t[..., None] * freqs) @ a
        return base(t)[..., 0, 0] + eps * (1.0 - t) * psi

    def quad(fn):
        return integrate.quad(fn, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    lin = quad(lambda t: raw(t) - 1.0)
    sq = quad(lambda t: (raw(t) - 1.0) ** 2)

    def variance_gap(c):
        return 1.0 + 2.0 * c * lin + c * c * sq - alpha

    if sq == 0.0:
        raise HypothesisError("perturbation leaves the integrand equal to 1")
    vertex = -lin / sq
    if variance_gap(vertex) > 0.0:
        raise HypothesisError("no rescaling of this perturbation represents N(0, alpha)")
    step = 1.0 + abs(vertex)
    if vertex <= 1.0:
        lo, hi = vertex, vertex + step
        while variance_gap(hi) < 0.0:
            hi += step
            step *= 2.0
    else:
        lo, hi = vertex - step, vertex
        while variance_gap(lo) < 0.0:
            lo -= step
            step *= 2.0
    c = optimize.bisect(variance_gap, lo, hi, xtol=tol * 1e-2, maxiter=400)

    def fn(t):
        return (1.0 + c * (raw(t) - 1.0))[..., None, None]

    return DeterministicIntegrand(
        "perturbed_gaussian", 1, fn=fn,
        params={"alpha": float(alpha), "eps": float(eps), "psi": a.tolist(), "scale": c},
    )


def reverse_deterministic(f: Integrand) -> DeterministicIntegrand:
    """g(u) = f(1 - u)."""
    if not isinstance(f, DeterministicIntegrand):
        raise UnsupportedKindError(
            f"time flip applies to deterministic integrands only, got {f.kind!r}; "
            "use estimate_reversed_integrand or ReversedRepresentation"
        )
    return f.with_flip()


def discrete_reversal(f: Integrand, steps) -> DeterministicIntegrand:
    """Tabulated G with sum_k G_k dB_hat_k equal to the left-endpoint sum of f.

    Forward step i is reversed step k = m - 1 - i, so G_k = f(t_{m-1-k}),
    i.e. the time flip of f read one node to the right.  The unused last
    node repeats f(0).
    """
    if not isinstance(f, DeterministicIntegrand):
        raise UnsupportedKindError(f"discrete reversal needs a deterministic integrand, got {f.kind!r}")
    table = f.table(steps)
    values = np.concatenate([table[-2::-1], table[:1]])
    g = DeterministicIntegrand(f"discrete_reversal({f.family})", f.dim, table=values)
    g.approximate = False
    return g


def reversed_representation(f: Integrand) -> ReversedRepresentation:
    """Exact stand-in for the reversed-time representation of int f dB."""
    return ReversedRepresentation(f)


# ---------------------------------------------------------------------------
# entropy functional


@dataclass(frozen=True)
class EntropyCertificate:
    j_value: float
    oracle_kl: float
    gap: float
    method: str
    std_error: float = 0.0
    divergent: bool = False
    detail: dict = field(default_factory=dict)

    @property
    def consistent(self):
        """Infimum direction J >= KL, within 3 standard errors (1e-10 if exact)."""
        return self.gap >= -max(3.0 * self.std_error, 1e-10)

    def to_dict(self):
        return {
            "j_value": self.j_value, "oracle_kl": self.oracle_kl, "gap": self.gap,
            "method": self.method, "std_error": self.std_error, "divergent": self.divergent,
            **self.detail,
        }


def oracle_entropy(target):
    if isinstance(target, GaussianMeasure):
        return kl_to_gamma(target)
    if isinstance(target, GaussianMixture1D):
        return kl_mixture_to_gamma(target)
    raise TypeError(f"no entropy oracle for {type(target).__name__}")


def _frobenius_sq_dev(vals):
    n = vals.shape[-1]
    d = vals - np.eye(n)
    return np.sum(d * d, axis=(-2, -1))


def _divergent(oracle, method, reason):
    return EntropyCertificate(math.inf, oracle, math.inf, method, 0.0, True, {"reason": reason})


def entropy_functional(f: Integrand, target, mode="quadrature", ensemble=None, steps=1000):
    """Evaluate J(f) and compare it with D(target || gamma).

    ``mode="quadrature"`` needs a deterministic integrand; closed-form
    families go through adaptive quadrature, tabulated ones through the
    trapezoid rule on their nodes with the t = 1 value extrapolated from
    the left.  ``mode="monte_carlo"`` averages the path-wise left-endpoint
    sums over ``ensemble``.  A functional that blows up is reported with
    ``divergent=True`` rather than raised.
    """
    oracle = oracle_entropy(target)
    if mode == "quadrature":
        if not isinstance(f, DeterministicIntegrand):
            raise UnsupportedKindError("quadrature mode needs a deterministic integrand")
        if f.is_tabulated:
            table = f.table(f.table_steps)
            m = table.shape[0] - 1
            t = np.arange(m + 1) / m
            dev = _frobenius_sq_dev(table)
            if dev[-1] > 1e-8:
                return _divergent(oracle, "quadrature", "integrand does not reach I at t = 1")
            q = np.empty(m + 1)
            q[:-1] = dev[:-1] / (1.0 - t[:-1])
            q[-1] = 2.0 * q[-2] - q[-3] if m >= 2 else q[-2]
            j = 0.5 * float(np.sum(0.5 * (q[1:] + q[:-1])) / m)
        else:
            end = float(_frobenius_sq_dev(f(np.array([1.0])))[0])
            if end > 1e-12:
                return _divergent(oracle, "quadrature", f"||F_1 - I||^2 = {end:.3e} > 0")

            def q(t):
                return float(_frobenius_sq_dev(f(np.array([t])))[0]) / (1.0 - t)

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(q, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=400)
            j = 0.5 * val
            if err > 1e-9:
                raise AccuracyError(f"J quadrature error {err:.2e}", estimate=j)
        if not math.isfinite(j) or j > DIVERGENCE_CAP:
            return _divergent(oracle, "quadrature", "running integral exceeded cap")
        return EntropyCertificate(j, oracle, j - oracle, "quadrature", 0.0)

    if mode == "monte_carlo":
        if ensemble is None:
            raise ValueError("monte_carlo mode needs an ensemble")
        if isinstance(f, ReversedRepresentation):
            raise UnsupportedKindError("J needs explicit integrand values")
        grid = ensemble.grid
        t = grid.nodes[:-1]
        weight = grid.dt / (1.0 - t)
        per_path = np.empty(ensemble.num_paths)
        for start, stop, nodes in ensemble.iter_blocks():
            vals = step_values(f, nodes, grid)
            acc = 0.5 * (_frobenius_sq_dev(vals) @ weight)
            per_path[start:stop] = acc
            if not np.all(np.isfinite(acc)) or np.mean(acc) > DIVERGENCE_CAP:
                return _divergent(oracle, "monte_carlo", "running integral exceeded cap")
        j = math.fsum(per_path) / per_path.size
        se = float(np.std(per_path, ddof=1) / math.sqrt(per_path.size)) if per_path.size > 1 else 0.0
        return EntropyCertificate(j, oracle, j - oracle, "monte_carlo", se,
                                  detail={"paths": ensemble.num_paths, "steps": grid.steps})
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# regression estimate of reversed-time integrands


@dataclass(frozen=True)
class RegressionBasis:
    """Clamped piecewise-linear hats on [-width sqrt(u), width sqrt(u)].

    The hats form a partition of unity, so constants are in their span.  At
    each node the knot range is shrunk to the hats carrying at least
    ``min_support`` units of sample mass; states beyond the outermost active
    knot are clamped onto it.  Sparse edge hats otherwise give near-null
    directions that the joint fit cannot resolve.  ``ridge`` (relative to the
    mean diagonal) only guards the block solves.
    """

    num_hats: int = 16
    width: float = 4.0
    ridge: float = 1e-10
    min_support: float = 30.0
    max_sweeps: int = 500
    tol: float = 1e-12
    max_cells: int = 2 * 10**7

    @property
    def size(self):
        return self.num_hats

    def _scaled(self, u, x):
        half = self.width * math.sqrt(u)
        if half == 0.0:
            return None
        h = 2.0 * half / (self.num_hats - 1)
        return (np.clip(x, -half, half) + half) / h

    def active_range(self, u, x):
        """First and last hat index kept at node ``u`` for the states ``x``."""
        z = self._scaled(u, x)
        H = self.num_hats
        centre = (H - 1) // 2
        if z is None:
            return centre, centre
        j = np.minimum(np.floor(z).astype(np.int64), H - 2)
        frac = z - j
        mass = np.bincount(j, 1.0 - frac, H) + np.bincount(j + 1, frac, H)
        ok = np.flatnonzero(mass >= self.min_support)
        if ok.size < 2:
            return centre, centre
        return int(ok[0]), int(ok[-1])

    def locate(self, u, x, lo, hi):
        """Left-hat index and interpolation weight of each state."""
        x = np.asarray(x, dtype=float)
        z = self._scaled(u, x)
        if z is None or hi <= lo:
            return np.full(x.shape, lo, dtype=np.int64), np.zeros(x.shape)
        z = np.clip(z, lo, hi)
        j = np.minimum(np.floor(z).astype(np.int64), hi - 1)
        return j, z - j

    def features(self, u, x, lo, hi):
        x = np.asarray(x, dtype=float)
        j, frac = self.locate(u, x, lo, hi)
        out = np.zeros(x.shape + (self.size,))
        np.put_along_axis(out, j[..., None], (1.0 - frac)[..., None], axis=-1)
        nxt = np.minimum(j + 1, self.size - 1)
        rows = np.take_along_axis(out, nxt[..., None], axis=-1)
        np.put_along_axis(out, nxt[..., None], rows + frac[..., None], axis=-1)
        return out

    def to_dict(self):
        return {"num_hats": self.num_hats, "width": self.width, "ridge": self.ridge,
                "min_support": self.min_support}


class RegressionIntegrand(StateFeedbackIntegrand):
    """Tabulated state-feedback integrand G(u_k, x) = phi_k(x) . beta_k on a grid."""

    approximate = True

    def __init__(self, basis, coefficients, covariances, se_floor, ranges, diagnostics=None):
        self.basis = basis
        self.coefficients = np.asarray(coefficients)
        self.covariances = np.asarray(covariances)
        self.ranges = np.asarray(ranges, dtype=np.int64)
        self.steps = self.coefficients.shape[0] - 1
        self.se_floor = np.asarray(se_floor)
        self.diagnostics = dict(diagnostics or {})
        super().__init__("regression", self._value, params={"basis": basis.to_dict(), "steps": self.steps})

    def _k(self, t):
        k = int(round(float(t) * self.steps))
        if abs(k / self.steps - float(t)) > 1e-12:
            raise ValueError(f"regression integrand is tabulated on the {self.steps}-step grid only")
        return k

    def _value(self, t, x):
        k = self._k(t)
        return self.at_step(k, t, x)

    def _phi(self, k, x):
        lo, hi = self.ranges[k]
        return self.basis.features(k / self.steps, x, lo, hi)

    def at_step(self, k, t, x):
        k = min(k, self.steps)
        return self._phi(k, x) @ self.coefficients[k]

    def std_error(self, k, x):
        """Pointwise standard error of G(u_k, x)."""
        k = min(k, self.steps - 1)
        phi = self._phi(k, x)
        var = np.einsum("...i,ij,...j->...", phi, self.covariances[k], phi)
        return np.sqrt(np.maximum(var, 0.0)) + self.se_floor[k]

    def mean_value(self, k, x):
        """Sample mean of G(u_k, x) over states ``x`` with its standard error."""
        k = min(k, self.steps - 1)
        phi = self._phi(k, x)
        vals = phi @ self.coefficients[k]
        pbar = phi.mean(axis=0)
        coef_var = float(pbar @ self.covariances[k] @ pbar)
        samp_var = float(np.var(vals, ddof=1) / vals.size) if vals.size > 1 else 0.0
        return float(vals.mean()), math.sqrt(coef_var + samp_var) + float(self.se_floor[k])

    def table_rows(self):
        t = np.arange(self.steps + 1) / self.steps
        return np.column_stack([t, self.ranges, self.coefficients])


def _node_system(basis, j, frac, dB):
    """Normal matrix of the hat design weighted by the node increment."""
    H = basis.size
    w2 = dB * dB
    lo, hi = 1.0 - frac, frac
    nxt = np.minimum(j + 1, H - 1)
    A = np.zeros((H, H))
    diag = np.bincount(j, w2 * lo * lo, H) + np.bincount(nxt, w2 * hi * hi, H)
    off = np.bincount(j, w2 * lo * hi, H)[: H - 1]
    idx = np.arange(H)
    A[idx, idx] = diag
    A[idx[:-1], idx[:-1] + 1] = off
    A[idx[:-1] + 1, idx[:-1]] = off
    return A


def _damped_inverse(A, ridge):
    active = np.diag(A) > 0.0
    inv = np.zeros_like(A)
    if not np.any(active):
        return inv, 1.0
    sub = A[np.ix_(active, active)]
    lam = ridge * float(np.mean(np.diag(sub)))
    damped = sub + lam * np.eye(sub.shape[0])
    cond = float(np.linalg.cond(damped))
    if not math.isfinite(cond) or cond > 1e10:
        raise BasisDegeneracyError(f"normal equations ill-conditioned (condition {cond:.3e})")
    inv[np.ix_(active, active)] = np.linalg.inv(damped)
    return inv, cond


def estimate_reversed_integrand(x: SampleVector, e_rev: PathEnsemble, basis=None) -> RegressionIntegrand:
    """Least-squares estimate of G with X = sum_k G(u_k, B_hat(u_k)) dB_hat_k.

    ``x`` must come from the forward view of the same ensemble that
    ``e_rev`` reverses.  All nodes are fitted jointly: the design column of
    hat i at node k is phi_i(B_hat(u_k)) dB_hat_k, and the normal equations
    are solved by conjugate gradients preconditioned with the per-node
    blocks.  Columns of different nodes are orthogonal in expectation, so
    the preconditioned system is well conditioned.
    """
    basis = basis or RegressionBasis()
    if e_rev.dimension != 1:
        raise DimensionMismatchError("regression estimate supports 1D ensembles only")
    N, m = e_rev.num_paths, e_rev.grid.steps
    if x.num_paths != N:
        raise DimensionMismatchError(f"sample has {x.num_paths} paths, ensemble {N}")
    if N * m > basis.max_cells:
        raise SizeCapError(f"N*m = {N * m} exceeds the regression cap {basis.max_cells}")
    nodes = e_rev.paths[:, :, 0]
    dB = np.diff(nodes, axis=1)
    H = basis.size
    u = e_rev.grid.nodes
    locs, inverses, normals, ranges = [], [], [], []
    max_cond = 1.0
    for k in range(m):
        lo, hi = basis.active_range(u[k], nodes[:, k])
        j, frac = basis.locate(u[k], nodes[:, k], lo, hi)
        A = _node_system(basis, j, frac, dB[:, k])
        inv, cond = _damped_inverse(A, basis.ridge)
        max_cond = max(max_cond, cond)
        locs.append((j, frac, np.minimum(j + 1, H - 1)))
        inverses.append(inv)
        normals.append(A)
        ranges.append((lo, hi))

    J = np.stack([l[0] for l in locs], axis=1) + H * np.arange(m)
    NX = np.stack([l[2] for l in locs], axis=1) + H * np.arange(m)
    FR = np.stack([l[1] for l in locs], axis=1)
    W0, W1 = dB * (1.0 - FR), dB * FR
    size = m * H
    blocks = np.stack(inverses)

    def design(beta):
        flat = beta.ravel()
        return np.sum(flat[J] * W0 + flat[NX] * W1, axis=1)

    def design_t(v):
        out = np.bincount(J.ravel(), (W0 * v[:, None]).ravel(), size)
        out += np.bincount(NX.ravel(), (W1 * v[:, None]).ravel(), size)
        return out.reshape(m, H)

    def precondition(g):
        return np.einsum("kij,kj->ki", blocks, g)

    # block-Jacobi preconditioned conjugate gradients on the normal equations
    target = x.values[:, 0]
    rhs = design_t(target).ravel()
    normal_op = LinearOperator((size, size), matvec=lambda v: design_t(design(v)).ravel())
    precond_op = LinearOperator((size, size), matvec=lambda v: precondition(v.reshape(m, H)).ravel())
    count = [0]

    def tick(_):
        count[0] += 1

    solution, info = cg(normal_op, rhs, rtol=basis.tol, atol=0.0, maxiter=basis.max_sweeps,
                        M=precond_op, callback=tick)
    beta = solution.reshape(m, H)
    sweeps = count[0]
    rel_residual = float(np.linalg.norm(rhs - normal_op.matvec(solution)) / max(np.linalg.norm(rhs), 1e-300))
    r = target - design(beta)
    rss = float(r @ r)
    used = sum(int(np.count_nonzero(np.diag(A) > 0.0)) for A in normals)
    dof = max(1, N - min(used, N // 2))
    sigma2 = rss / dof
    covs = np.stack([sigma2 * np.linalg.pinv(A, rcond=1e-10, hermitian=True) for A in normals])
    # truncation error of the iterative solve, a generous multiple of the stopping tolerance
    floor = np.full(m, 1e3 * basis.tol * (1.0 + float(np.max(np.abs(beta)))))
    coef = np.vstack([beta, beta[-1:]])
    covs = np.concatenate([covs, covs[-1:]])
    floor = np.concatenate([floor, floor[-1:]])
    ranges.append(ranges[-1])
    diag = {"sweeps": sweeps, "relative_residual": rel_residual, "residual_rms": math.sqrt(rss / N),
            "max_condition": max_cond, "converged": info == 0}
    return RegressionIntegrand(basis, coef, covs, floor, ranges, diag)


# ---------------------------------------------------------------------------
# tail energies and the Pythagorean gap


@dataclass(frozen=True)
class TailEnergyProfile:
    """lhs(t) = int_t^1 E||F - I||^2, rhs(t) = int_0^{1-t} E||G - I||^2 on grid nodes."""

    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    std_error: np.ndarray
    mode: str

    def holds(self, n_se=3.0, atol=1e-10):
        return bool(np.all(self.slack >= -(n_se * self.std_error + atol)))

    def to_dict(self):
        return {"mode": self.mode, "t": self.t.tolist(), "lhs": self.lhs.tolist(),
                "rhs": self.rhs.tolist(), "slack": self.slack.tolist(),
                "std_error": self.std_error.tolist(), "min_slack": float(np.min(self.slack))}


def _right_tail_trapezoid(q, dt):
    """out[k] = trapezoid integral of q over nodes k..m, accumulated from the right."""
    terms = 0.5 * (q[1:] + q[:-1]) * dt
    out = np.zeros(q.size)
    out[:-1] = np.cumsum(terms[::-1])[::-1]
    return out


def _left_trapezoid(q, dt):
    terms = 0.5 * (q[1:] + q[:-1]) * dt
    out = np.zeros(q.size)
    out[1:] = np.cumsum(terms)
    return out


def tail_energy_profile(f: Integrand, g: Integrand, mode="quadrature", ensemble=None, steps=1000):
    """Slack profile of int_t^1 E||F_s - I||^2 ds >= int_0^{1-t} E||G_s - I||^2 ds.

    ``quadrature`` mode takes deterministic f and g and uses the trapezoid
    rule, under which a pair related by a time flip has identically zero
    slack.  ``monte_carlo`` mode evaluates F along ``ensemble`` (forward) and
    G along its reversal with left-endpoint step energies; forward step i
    pairs with reversed step m - 1 - i, which is how a discrete Ito sum
    rewrites against the reversed increments.
    """
    if mode == "quadrature":
        if not (isinstance(f, DeterministicIntegrand) and isinstance(g, DeterministicIntegrand)):
            raise UnsupportedKindError("quadrature mode needs deterministic integrands")
        m = steps
        t = np.arange(m + 1) / m
        qf = _frobenius_sq_dev(f.table(m))
        qg = _frobenius_sq_dev(g.table(m))
        lhs = _right_tail_trapezoid(qf, 1.0 / m)
        rhs = _left_trapezoid(qg, 1.0 / m)[::-1]
        return TailEnergyProfile(t, lhs, rhs, lhs - rhs, np.zeros(m + 1), mode)

    if mode == "monte_carlo":
        if ensemble is None:
            raise ValueError("monte_carlo mode needs an ensemble")
        grid = ensemble.grid
        m, N = grid.steps, ensemble.num_paths
        e_rev = reverse(ensemble)
        s_l = np.zeros(m + 1)
        s_r = np.zeros(m + 1)
        s_d = np.zeros(m + 1)
        s_d2 = np.zeros(m + 1)
        for start, stop, nodes in ensemble.iter_blocks():
            rnodes = e_rev.block_nodes(start, stop)
            ef = _frobenius_sq_dev(step_values(f, nodes, grid)) * grid.dt
            eg = _frobenius_sq_dev(step_values(g, rnodes, grid)) * grid.dt
            P = stop - start
            ef = np.broadcast_to(ef, (P, m))
            eg = np.broadcast_to(eg, (P, m))
            lhs = np.zeros((P, m + 1))
            lhs[:, :-1] = np.cumsum(ef[:, ::-1], axis=1)[:, ::-1]
            rhs = np.zeros((P, m + 1))
            rhs[:, :-1] = np.cumsum(eg, axis=1)[:, ::-1]
            d = lhs - rhs
            s_l += lhs.sum(axis=0)
            s_r += rhs.sum(axis=0)
            s_d += d.sum(axis=0)
            s_d2 += (d * d).sum(axis=0)
        mean_d = s_d / N
        var = np.maximum(s_d2 - N * mean_d * mean_d, 0.0) / max(N - 1, 1)
        extra = np.zeros(m + 1)
        if isinstance(g, RegressionIntegrand):
            extra = _regression_energy_se(g, e_rev, m)
        se = np.sqrt(var / N) + extra
        return TailEnergyProfile(grid.nodes, s_l / N, s_r / N, mean_d, se, mode)
    raise ValueError(f"unknown mode {mode!r}")


def _regression_energy_se(g: RegressionIntegrand, e_rev: PathEnsemble, m):
    """Delta-method error of the reversed-side cumulative energies from coefficient noise."""
    nodes = e_rev.paths[:, :, 0]
    per_step = np.zeros(m)
    for k in range(m):
        vals = g.at_step(k, k / m, nodes[:, k])
        se = g.std_error(k, nodes[:, k])
        per_step[k] = float(np.mean(2.0 * np.abs(vals - 1.0) * se + se * se)) / m
    out = np.zeros(m + 1)
    out[:-1] = np.cumsum(per_step)[::-1]
    return out


@dataclass(frozen=True)
class PythagoreanGap:
    t: float
    value: float
    std_error: float
    residual_energy: float
    reversed_energy: float

    def holds(self, n_se=3.0, atol=1e-9):
        return self.value >= -(n_se * self.std_error + atol)

    def to_dict(self):
        return {"t": self.t, "value": self.value, "std_error": self.std_error,
                "residual_energy": self.residual_energy, "reversed_energy": self.reversed_energy}


def pythagorean_gap(x: SampleVector, f: Integrand, e: PathEnsemble, t, fit=None, basis=None) -> PythagoreanGap:
    """Estimate E||X - E[X|F_t]||^2 - E||E[X|F+_{1-t}]||^2.

    The forward conditional expectation is the partial Ito sum of f; the
    reversed one is the partial sum of a regression estimate of the reversed
    representation (pass ``fit`` to reuse one across several t).
    """
    m = e.grid.steps
    j = e.grid.index(t)
    X = x.values
    if j == 0:
        q = np.einsum("pi,pi->p", X, X)
        return PythagoreanGap(float(t), float(np.mean(q - q)), 0.0, float(q.mean()), float(q.mean()))
    if j == m:
        return PythagoreanGap(float(t), 0.0, 0.0, 0.0, 0.0)
    M = martingale_snapshot(f, e, t).values
    e_rev = reverse(e)
    if fit is None:
        fit = estimate_reversed_integrand(x, e_rev, basis)
    Nhat = martingale_snapshot(fit, e_rev, (m - j) / m).values
    a = np.einsum("pi,pi->p", X - M, X - M)
    b = np.einsum("pi,pi->p", Nhat, Nhat)
    d = a - b
    se = float(np.std(d, ddof=1) / math.sqrt(d.size))
    return PythagoreanGap(float(t), float(d.mean()), se, float(a.mean()), float(b.mean()))


def mean_preservation(f: Integrand, e: PathEnsemble, g: RegressionIntegrand):
    """Node-wise sample means of F_t against G at the mirrored reversed node.

    Returns a dict of arrays (t, mean_f, mean_g, se) for forward steps
    i = 0..m-1 paired with reversed steps m-1-i.
    """
    grid = e.grid
    m = grid.steps
    paths = e.paths
    vals = step_values(f, paths, grid)[..., 0, 0]
    vals = np.broadcast_to(vals, (e.num_paths, m))
    mean_f = vals.mean(axis=0)
    se_f = vals.std(axis=0, ddof=1) / math.sqrt(e.num_paths)
    rnodes = reverse(e).paths[:, :, 0]
    mean_g = np.empty(m)
    se_g = np.empty(m)
    for i in range(m):
        k = m - 1 - i
        mean_g[i], se_g[i] = g.mean_value(k, rnodes[:, k])
    return {"t": grid.nodes[:-1], "mean_f": mean_f, "mean_g": mean_g, "se": np.hypot(se_f, se_g)}
