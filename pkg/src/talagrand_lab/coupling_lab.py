"""Couplings of (mu, nu) built from stochastic integrals, and their costs.

Two constructions are compared:

* the time-reversal coupling, X = int G dB_hat and Y = int H dB_hat against
  one reversed Brownian path, where G is the reversed-time representation
  of mu and H the entropy-optimal representation of nu;
* the linear coupling of two Gaussians, X = int F dB^1 and Y = int G dB^2
  with d<B^1, B^2> = sigma dt.

Every cost comes with a lower oracle (W2^2) and an upper oracle
(2 D(mu || gamma) + 2 D(nu || gamma)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DimensionMismatchError, HypothesisError, LabError, MarginalMismatchError
from .gaussian_analytics import (
    GaussianMeasure,
    GaussianMixture1D,
    bures_w2_squared,
    kl_mixture_to_gamma,
    kl_to_gamma,
)
from .integrands import DeterministicIntegrand, Integrand, ReversedRepresentation
from .ot_solver import DiscreteMeasure, w2_squared_1d, w2_squared_exact
from .representation_lab import (
    RegressionIntegrand,
    _frobenius_sq_dev,
    discrete_reversal,
    estimate_reversed_integrand,
    gaussian_integrand,
    reverse_deterministic,
)
from .wiener_engine import PathEnsemble, ito_integral, reverse, step_values

DET_TOL = 1e-10
MC_SIGMAS = 3.0


# ---------------------------------------------------------------------------
# oracles


@dataclass(frozen=True)
class OracleValue:
    value: float
    source: str


def w2_oracle(mu, nu) -> OracleValue:
    """W2^2 from the strongest available oracle for the pair."""
    if isinstance(mu, GaussianMeasure) and isinstance(nu, GaussianMeasure):
        return OracleValue(bures_w2_squared(mu, nu), "bures")
    one_d = (GaussianMeasure, GaussianMixture1D)
    if isinstance(mu, one_d) and isinstance(nu, one_d):
        if any(isinstance(m, GaussianMeasure) and m.dim != 1 for m in (mu, nu)):
            raise DimensionMismatchError("mixtures pair only with 1D Gaussians")
        return OracleValue(w2_squared_1d(mu, nu), "quantile_1d")
    if isinstance(mu, DiscreteMeasure) and isinstance(nu, DiscreteMeasure):
        return OracleValue(w2_squared_exact(mu, nu), "discrete_exact")
    raise HypothesisError(f"no W2 oracle for {type(mu).__name__} vs {type(nu).__name__}")


def entropy_oracle(m) -> OracleValue:
    if isinstance(m, GaussianMeasure):
        return OracleValue(kl_to_gamma(m), "closed_form")
    if isinstance(m, GaussianMixture1D):
        if m.weights.size == 1:
            return OracleValue(kl_mixture_to_gamma(m), "closed_form")
        return OracleValue(kl_mixture_to_gamma(m), "quadrature")
    raise HypothesisError(f"no entropy oracle for {type(m).__name__}")


def upper_oracle(mu, nu) -> OracleValue:
    a, b = entropy_oracle(mu), entropy_oracle(nu)
    return OracleValue(2.0 * a.value + 2.0 * b.value, f"{a.source}+{b.source}")


def _second_moment_target(m):
    if isinstance(m, GaussianMeasure):
        return m.second_moment
    if isinstance(m, GaussianMixture1D):
        return m.second_moment
    if isinstance(m, DiscreteMeasure):
        return float(m.weights @ np.einsum("ij,ij->i", m.points, m.points))
    return None


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class CouplingReport:
    cost: float
    std_error: float
    lower_oracle: float | None = None
    lower_source: str = ""
    upper_oracle: float | None = None
    upper_source: str = ""
    detail: dict = field(default_factory=dict)

    @property
    def slack_lower(self):
        return None if self.lower_oracle is None else self.cost - self.lower_oracle

    @property
    def slack_upper(self):
        return None if self.upper_oracle is None else self.upper_oracle - self.cost

    def _tol(self, n_se, atol):
        return n_se * self.std_error + atol

    def lower_holds(self, n_se=MC_SIGMAS, atol=DET_TOL):
        return self.slack_lower is None or self.slack_lower >= -self._tol(n_se, atol)

    def upper_holds(self, n_se=MC_SIGMAS, atol=DET_TOL):
        return self.slack_upper is None or self.slack_upper >= -self._tol(n_se, atol)

    def sandwich_holds(self, n_se=MC_SIGMAS, atol=DET_TOL):
        return self.lower_holds(n_se, atol) and self.upper_holds(n_se, atol)

    def to_dict(self):
        return {"cost": self.cost, "std_error": self.std_error,
                "lower_oracle": self.lower_oracle, "lower_source": self.lower_source,
                "upper_oracle": self.upper_oracle, "upper_source": self.upper_source,
                "slack_lower": self.slack_lower, "slack_upper": self.slack_upper, **self.detail}


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    mean = math.fsum(v) / v.size
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return mean, se


def _check_marginal(name, sample, target, tol):
    if target is None or target == 0.0:
        return None
    est = float(np.mean(np.einsum("pi,pi->p", sample, sample)))
    rel = est / target - 1.0
    if abs(rel) > tol:
        raise MarginalMismatchError(
            f"{name}: sample second moment {est:.6g} vs target {target:.6g} ({rel:+.2%})",
            estimate=est)
    return est


def _steps_of(f):
    if isinstance(f, RegressionIntegrand):
        return f.steps
    if isinstance(f, ReversedRepresentation):
        return _steps_of(f.inner)
    if isinstance(f, DeterministicIntegrand) and f.is_tabulated:
        return f.table_steps
    return None


def time_reversal_coupling(g_mu: Integrand, h_nu: Integrand, e_rev: PathEnsemble, mu=None, nu=None,
                           marginal_tol=0.05) -> CouplingReport:
    """Cost E||X - Y||^2 of X = int g_mu dB_hat, Y = int h_nu dB_hat on the same paths.

    ``e_rev`` is the reversed view of an ensemble.  When ``mu``/``nu`` are
    given, the sample second moments of X and Y must match theirs within
    ``marginal_tol`` (relative), and the W2^2 and 2D + 2D oracles are attached.
    """
    m = e_rev.grid.steps
    for f in (g_mu, h_nu):
        steps = _steps_of(f)
        if steps is not None and steps != m:
            raise DimensionMismatchError(f"integrand tabulated on {steps} steps, ensemble has {m}")
    X = ito_integral(g_mu, e_rev).values
    Y = ito_integral(h_nu, e_rev).values
    if X.shape != Y.shape:
        raise DimensionMismatchError(f"X has shape {X.shape}, Y has {Y.shape}")
    mx = _check_marginal("X", X, _second_moment_target(mu), marginal_tol)
    my = _check_marginal("Y", Y, _second_moment_target(nu), marginal_tol)
    d = X - Y
    cost, se = _mean_se(np.einsum("pi,pi->p", d, d))
    lower = w2_oracle(mu, nu) if mu is not None and nu is not None else None
    upper = upper_oracle(mu, nu) if mu is not None and nu is not None else None
    return CouplingReport(
        cost, se,
        lower.value if lower else None, lower.source if lower else "",
        upper.value if upper else None, upper.source if upper else "",
        detail={"paths": e_rev.num_paths, "steps": m, "second_moment_x": mx, "second_moment_y": my,
                "construction": "time_reversal"},
    )


# ---------------------------------------------------------------------------
# linear coupling


def _x_over_sinh(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, safe / np.sinh(safe))


def linear_coupling_cost(alpha, sigma):
    """E|X - Y|^2 for the linear coupling of N(0, alpha) and N(0, 1/alpha).

    (alpha + 1/alpha) - 4 sigma log(alpha) / (alpha - 1/alpha), written with
    x = log(alpha) as 2 cosh(x) - 2 sigma x / sinh(x); the second form is
    continuous through alpha = 1 where it equals 2 (1 - sigma).
    """
    alpha = np.asarray(alpha, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(alpha <= 0):
        raise HypothesisError("alpha must be positive")
    if np.any(np.abs(sigma) > 1.0):
        raise HypothesisError("correlation sigma must lie in [-1, 1]")
    x = np.log(alpha)
    out = 2.0 * np.cosh(x) - 2.0 * sigma * _x_over_sinh(x)
    return float(out) if out.ndim == 0 else out


def linear_coupling_cost_quadrature(alpha, sigma):
    """int_0^1 (F_t^2 + G_t^2 - 2 sigma F_t G_t) dt by adaptive quadrature."""
    f = lambda t: alpha / (1.0 - t + alpha * t)
    g = lambda t: 1.0 / (alpha * (1.0 - t) + t)
    val, _ = integrate.quad(lambda t: f(t) ** 2 + g(t) ** 2 - 2.0 * sigma * f(t) * g(t), 0.0, 1.0,
                            epsabs=1e-13, epsrel=1e-13)
    return val


def linear_coupling_cost_discrete(alpha, sigma, steps):
    """Expected cost of the left-endpoint Ito sums on ``steps`` uniform steps."""
    t = np.arange(steps) / steps
    f = alpha / (1.0 - t + alpha * t)
    g = 1.0 / (alpha * (1.0 - t) + t)
    return math.fsum(f * f + g * g - 2.0 * sigma * f * g) / steps


def correlation_root(sigma):
    """Symmetric square root [[a, b], [b, a]] of [[1, sigma], [sigma, 1]]."""
    if abs(sigma) > 1.0:
        raise HypothesisError("correlation sigma must lie in [-1, 1]")
    p, q = math.sqrt(1.0 + sigma), math.sqrt(1.0 - sigma)
    return 0.5 * (p + q), 0.5 * (p - q)


def _linear_integrands(alpha):
    f = gaussian_integrand([[alpha]])
    g = DeterministicIntegrand(
        "linear_partner", 1, fn=lambda t: (1.0 / (alpha * (1.0 - np.asarray(t)) + np.asarray(t)))[..., None, None],
        params={"alpha": float(alpha)},
    )
    return f, g


def _linear_report(alpha, sigma, cost, se, e):
    mu, nu = GaussianMeasure.scalar(alpha), GaussianMeasure.scalar(1.0 / alpha)
    up = upper_oracle(mu, nu)
    return CouplingReport(
        cost, se, bures_w2_squared(mu, nu), "bures", up.value, up.source,
        detail={"alpha": float(alpha), "sigma": float(sigma), "paths": e.num_paths,
                "steps": e.grid.steps, "construction": "linear",
                "cost_closed_form": linear_coupling_cost(alpha, sigma),
                "cost_discrete_grid": linear_coupling_cost_discrete(alpha, sigma, e.grid.steps)},
    )


def linear_coupling_sweep(alphas, sigmas, e: PathEnsemble):
    """Monte Carlo linear-coupling costs for every (alpha, sigma) in one pass.

    With independent W^1, W^2 and B^1 = a W^1 + b W^2, B^2 = b W^1 + a W^2,
    X = a int F dW^1 + b int F dW^2 and Y = b int G dW^1 + a int G dW^2, so
    four Ito sums per alpha serve all sigma.  Returns a dict keyed by
    (alpha, sigma) of CouplingReport.
    """
    if e.dimension != 2:
        raise DimensionMismatchError("linear coupling needs a 2-dimensional ensemble")
    alphas = [float(a) for a in alphas]
    sigmas = [float(s) for s in sigmas]
    roots = {s: correlation_root(s) for s in sigmas}
    m = e.grid.steps
    tables = {}
    for a in alphas:
        f, g = _linear_integrands(a)
        tables[a] = (f.table(m)[:m, 0, 0], g.table(m)[:m, 0, 0])
    sq = {(a, s): np.empty(e.num_paths) for a in alphas for s in sigmas}
    for start, stop, nodes in e.iter_blocks():
        dW = np.diff(nodes, axis=1)
        for a in alphas:
            fv, gv = tables[a]
            F1, F2 = dW[:, :, 0] @ fv, dW[:, :, 1] @ fv
            G1, G2 = dW[:, :, 0] @ gv, dW[:, :, 1] @ gv
            for s in sigmas:
                ra, rb = roots[s]
                d = (ra * F1 + rb * F2) - (rb * G1 + ra * G2)
                sq[(a, s)][start:stop] = d * d
    out = {}
    for (a, s), v in sq.items():
        cost, se = _mean_se(v)
        out[(a, s)] = _linear_report(a, s, cost, se, e)
    return out


def linear_coupling_simulate(alpha, sigma, e: PathEnsemble) -> CouplingReport:
    """Monte Carlo cost of the linear coupling at one (alpha, sigma)."""
    correlation_root(sigma)
    if not alpha > 0:
        raise HypothesisError("alpha must be positive")
    return linear_coupling_sweep([alpha], [sigma], e)[(float(alpha), float(sigma))]


@dataclass(frozen=True)
class MinLinearCost:
    sigma_star: float
    cost: float
    w2sq: float
    verdict: str

    def to_dict(self):
        return {"sigma_star": self.sigma_star, "cost": self.cost, "w2sq": self.w2sq,
                "verdict": self.verdict}


def min_linear_cost(alpha, tol=1e-12) -> MinLinearCost:
    """Minimum of the affine-in-sigma cost over [-1, 1] (always at sigma = 1)."""
    lo, hi = linear_coupling_cost(alpha, -1.0), linear_coupling_cost(alpha, 1.0)
    sigma_star, cost = (1.0, hi) if hi <= lo else (-1.0, lo)
    w2sq = alpha + 1.0 / alpha - 2.0
    if cost < w2sq - tol:
        verdict = "violation"
    elif abs(cost - w2sq) <= tol:
        verdict = "equal"
    else:
        verdict = "strict"
    return MinLinearCost(sigma_star, cost, w2sq, verdict)


SWEEP_COLUMNS = ("alpha", "sigma", "cost_closed_form", "cost_mc", "std_error", "w2sq", "upper")


def sweep_rows(reports):
    rows = []
    for (a, s), r in sorted(reports.items()):
        rows.append((a, s, r.detail["cost_closed_form"], r.cost, r.std_error, r.lower_oracle, r.upper_oracle))
    return rows


# ---------------------------------------------------------------------------
# the proof chain


@dataclass(frozen=True)
class ChainCertificate:
    """Slacks of each inequality in the chain

        cost = int E||G - H||^2                                  (isometry)
             <= int E||G - I||^2 / u + E||H - I||^2 / (1 - u)     (split, per node)
             <= int E||F - I||^2 / (1 - t) + int E||H - I||^2 / (1 - u)  (weighted tails)
    """

    weighted_g: float
    weighted_f: float
    tail_slack: float
    tail_se: float
    split_u: np.ndarray
    split_slack: np.ndarray
    split_se: np.ndarray
    weighted_h: float
    cost: float
    cost_se: float
    isometry_energy: float
    isometry_residual: float
    isometry_se: float
    sandwich_slack: float
    sandwich_se: float
    mode: str
    det_tol: float = DET_TOL
    n_se: float = MC_SIGMAS
    notes: tuple = ()

    def _ok(self, slack, se):
        return slack >= -(self.n_se * se + self.det_tol)

    @property
    def checks(self):
        split_ok = bool(np.all(self.split_slack >= -(self.n_se * self.split_se + self.det_tol)))
        return {
            "tail": self._ok(self.tail_slack, self.tail_se),
            "split": split_ok,
            "isometry": abs(self.isometry_residual) <= self.n_se * self.isometry_se + self.det_tol,
            "sandwich": self._ok(self.sandwich_slack, self.sandwich_se),
        }

    @property
    def verdict(self):
        return "pass" if all(self.checks.values()) else "fail"

    def to_dict(self):
        return {
            "mode": self.mode, "verdict": self.verdict, "checks": self.checks,
            "weighted_g": self.weighted_g, "weighted_f": self.weighted_f,
            "tail_slack": self.tail_slack, "tail_se": self.tail_se,
            "split_min_slack": float(np.min(self.split_slack)) if self.split_slack.size else None,
            "split_nodes": int(self.split_u.size),
            "weighted_h": self.weighted_h, "cost": self.cost, "cost_se": self.cost_se,
            "isometry_energy": self.isometry_energy, "isometry_residual": self.isometry_residual,
            "isometry_se": self.isometry_se, "sandwich_slack": self.sandwich_slack,
            "sandwich_se": self.sandwich_se, "notes": list(self.notes),
        }


def _weighted_quad(fn, weight):
    val, _ = integrate.quad(lambda s: float(_frobenius_sq_dev(fn(np.array([s])))[0]) * weight(s),
                            0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=400)
    return val


def _deterministic_chain(f, g, h, det_tol, n_se):
    """Closed-form integrands: quadrature for the integrals, no sampling noise."""
    with np.errstate(divide="ignore", invalid="ignore"):
        wg = _weighted_quad(g, lambda s: 1.0 / s if s > 0 else 0.0)
        wf = _weighted_quad(f, lambda s: 1.0 / (1.0 - s) if s < 1 else 0.0)
        wh = _weighted_quad(h, lambda s: 1.0 / (1.0 - s) if s < 1 else 0.0)
    cost, _ = integrate.quad(lambda u: float(_frobenius_sq_dev_pair(g(np.array([u])), h(np.array([u])))[0]),
                             0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=400)
    u = np.linspace(0.0, 1.0, 1001)[1:-1]
    dg = _frobenius_sq_dev(g(u))
    dh = _frobenius_sq_dev(h(u))
    gh = _frobenius_sq_dev_pair(g(u), h(u))
    split = dg / u + dh / (1.0 - u) - gh
    return ChainCertificate(
        wg, wf, wf - wg, 0.0, u, split, np.zeros_like(split), wh, cost, 0.0, cost, 0.0, 0.0,
        wg + wh - cost, 0.0, "quadrature", det_tol, n_se,
        notes=("split checked at interior nodes only; weights degenerate at u = 0 and u = 1",),
    )


def _frobenius_sq_dev_pair(a, b):
    d = a - b
    return np.sum(d * d, axis=(-2, -1))


def theorem_chain_certificate(f_mu: Integrand, h_nu: Integrand, e: PathEnsemble | None = None,
                              g_mu: Integrand | None = None, det_tol=DET_TOL, n_se=MC_SIGMAS,
                              basis=None) -> ChainCertificate:
    """Per-step slacks of the chain from the coupling cost to 2J(F) + 2J(H).

    ``f_mu`` forward-represents mu; ``h_nu`` represents nu against the
    reversed motion.  For deterministic f_mu and h_nu without an ensemble the
    certificate is computed by quadrature with G = f_mu(1 - u).  Otherwise G
    is ``g_mu`` if given, the time flip of a deterministic f_mu, or a
    regression estimate from X = int f_mu dB, and every expectation is a
    sample mean over ``e`` with its standard error.  In discrete time
    forward step i pairs with reversed step k = m - 1 - i, so the forward
    weight 1 / (1 - t_i) becomes 1 / u_{k+1} on the reversed side.
    """
    deterministic = isinstance(f_mu, DeterministicIntegrand) and isinstance(h_nu, DeterministicIntegrand)
    if e is None:
        if not deterministic or g_mu is not None and not isinstance(g_mu, DeterministicIntegrand):
            raise LabError("an ensemble is needed unless both integrands are deterministic")
        g = g_mu if g_mu is not None else reverse_deterministic(f_mu)
        return _deterministic_chain(f_mu, g, h_nu, det_tol, n_se)

    if e.dimension != 1 and not deterministic:
        raise DimensionMismatchError("state-feedback chains are 1D")
    e_rev = reverse(e)
    m, dt = e.grid.steps, e.grid.dt
    notes = ["split checked at interior nodes only; weights degenerate at u = 0 and u = 1"]
    if g_mu is None:
        if isinstance(f_mu, DeterministicIntegrand):
            g_mu = discrete_reversal(f_mu, m)
            notes.append("G from the exact discrete time flip of F")
        else:
            g_mu = estimate_reversed_integrand(ito_integral(f_mu, e), e_rev, basis)
            notes.append("G from the regression estimate of the reversed representation")
    t = e.grid.nodes
    w_f = dt / (1.0 - t[:-1])          # forward step i
    w_g = dt / t[1:]                    # reversed step k, weight 1 / u_{k+1}
    w_h = dt / (1.0 - t[:-1])
    N = e.num_paths
    tail = np.empty(N)
    wg_p = np.empty(N)
    wh_p = np.empty(N)
    energy_p = np.empty(N)
    cost_p = np.empty(N)
    iso_p = np.empty(N)
    s1 = np.zeros(m - 1)
    s2 = np.zeros(m - 1)
    for start, stop, nodes in e.iter_blocks():
        rnodes = e_rev.block_nodes(start, stop)
        P = stop - start
        fv = step_values(f_mu, nodes, e.grid)
        gv = step_values(g_mu, rnodes, e.grid)
        hv = step_values(h_nu, rnodes, e.grid)
        qf = np.broadcast_to(_frobenius_sq_dev(fv), (P, m))
        qg = np.broadcast_to(_frobenius_sq_dev(gv), (P, m))
        qh = np.broadcast_to(_frobenius_sq_dev(hv), (P, m))
        qgh = np.broadcast_to(_frobenius_sq_dev_pair(gv, hv), (P, m))
        wf_block = qf @ w_f
        wg_block = qg @ w_g
        tail[start:stop] = wf_block - wg_block
        wg_p[start:stop] = wg_block
        wh_p[start:stop] = qh @ w_h
        energy_p[start:stop] = qgh.sum(axis=1) * dt
        dB = np.diff(rnodes, axis=1)
        gv_full = np.broadcast_to(gv, (P,) + gv.shape[1:])
        hv_full = np.broadcast_to(hv, (P,) + hv.shape[1:])
        xy = np.einsum("pkij,pkj->pi", gv_full - hv_full, dB)
        cost_p[start:stop] = np.einsum("pi,pi->p", xy, xy)
        iso_p[start:stop] = cost_p[start:stop] - energy_p[start:stop]
        u = t[1:-1]
        split = qg[:, 1:] / u + qh[:, 1:] / (1.0 - u) - qgh[:, 1:]
        s1 += split.sum(axis=0)
        s2 += (split * split).sum(axis=0)

    wf_mean = _mean_se(tail + wg_p)[0]
    tail_mean, tail_se = _mean_se(tail)
    wg_mean = _mean_se(wg_p)[0]
    wh_mean = _mean_se(wh_p)[0]
    cost, cost_se = _mean_se(cost_p)
    iso, iso_se = _mean_se(iso_p)
    sandwich, sandwich_se = _mean_se(wg_p + wh_p - cost_p)
    split_mean = s1 / N
    split_se = np.sqrt(np.maximum(s2 / N - split_mean**2, 0.0) * N / max(N - 1, 1) / N)
    if isinstance(g_mu, RegressionIntegrand):
        notes.append("regression coefficient noise is not propagated into the tail standard error")
    return ChainCertificate(
        wg_mean, wf_mean, tail_mean, tail_se, t[1:-1], split_mean, split_se, wh_mean, cost, cost_se,
        _mean_se(energy_p)[0], iso, iso_se, sandwich, sandwich_se, "monte_carlo", det_tol, n_se,
        tuple(notes),
    )
