"""Closed-form Gaussian quantities and 1D Gaussian mixtures.

Everything here is a pure function of immutable inputs.  Matrix square roots
go through a symmetric eigendecomposition so that tiny negative eigenvalues
produced by round-off are clamped instead of turning into NaNs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .errors import (
    AccuracyError,
    DimensionMismatchError,
    HypothesisError,
    InvalidMeasureError,
)

CENTERED_TOL = 1e-9
EIG_FLOOR = 1e-14
EIG_NEGATIVE_TOL = 1e-10
LOG_2PI = math.log(2.0 * math.pi)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def sym_eigh(a):
    """Eigendecomposition of a symmetric matrix with round-off clamping.

    Raises InvalidMeasureError if a genuinely negative eigenvalue is found
    (below ``-EIG_NEGATIVE_TOL`` times the spectral norm).
    """
    a = np.asarray(a, dtype=float)
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    scale = max(np.max(np.abs(w)), 1.0) if w.size else 1.0
    if np.any(w < -EIG_NEGATIVE_TOL * scale):
        raise InvalidMeasureError(f"matrix is not positive semidefinite: eigenvalues {w}")
    return np.maximum(w, EIG_FLOOR), v


def sqrtm_psd(a):
    w, v = sym_eigh(a)
    return (v * np.sqrt(w)) @ v.T


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """N(mean, covariance) on R^n."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise InvalidMeasureError(
                f"mean of length {mean.size} does not match covariance shape {cov.shape}"
            )
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise InvalidMeasureError("covariance is not symmetric")
        if not np.all(np.isfinite(cov)) or not np.all(np.isfinite(mean)):
            raise InvalidMeasureError("non-finite parameters")
        if np.min(np.linalg.eigvalsh(cov)) <= 0.0:
            raise InvalidMeasureError("covariance is not positive definite")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "covariance", _frozen(cov))

    @classmethod
    def standard(cls, n=1):
        return cls(np.zeros(n), np.eye(n))

    @classmethod
    def scalar(cls, variance, mean=0.0):
        return cls([mean], [[variance]])

    @property
    def dim(self):
        return self.mean.size

    @property
    def second_moment(self):
        """E||x||^2 = tr C + ||theta||^2."""
        return float(np.trace(self.covariance) + self.mean @ self.mean)

    def is_centered(self, tol=CENTERED_TOL):
        return float(np.linalg.norm(self.mean)) <= tol

    def translated(self, shift):
        return GaussianMeasure(self.mean + np.asarray(shift, dtype=float), self.covariance)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "covariance": self.covariance.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["mean"], doc["covariance"])

    def __eq__(self, other):
        if not isinstance(other, GaussianMeasure):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.covariance, other.covariance)
        )

    def __repr__(self):
        return f"GaussianMeasure(mean={self.mean.tolist()}, covariance={self.covariance.tolist()})"


@dataclass(frozen=True, eq=False)
class GaussianMixture1D:
    """Finite mixture sum_i w_i N(m_i, v_i) on the real line.

    Exposes the scipy.stats-like methods (pdf, cdf, sf, ppf, isf) used by the
    1D quantile Wasserstein oracle.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        if not (w.shape == m.shape == v.shape) or w.ndim != 1 or w.size == 0:
            raise InvalidMeasureError("weights, means and variances must be equal-length vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidMeasureError(f"weights must be nonnegative and sum to 1, got {w.sum()!r}")
        if np.any(v <= 0) or not np.all(np.isfinite(np.concatenate([m, v]))):
            raise InvalidMeasureError("variances must be positive and finite")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "means", _frozen(m))
        object.__setattr__(self, "variances", _frozen(v))

    @classmethod
    def from_gaussian(cls, g):
        if g.dim != 1:
            raise DimensionMismatchError("only 1D Gaussians convert to a 1D mixture")
        return cls([1.0], [g.mean[0]], [g.covariance[0, 0]])

    @property
    def mean(self):
        return float(self.weights @ self.means)

    @property
    def second_moment(self):
        return float(self.weights @ (self.means**2 + self.variances))

    def is_centered(self, tol=CENTERED_TOL):
        return abs(self.mean) <= tol

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        comp = (
            np.log(self.weights)
            - 0.5 * (LOG_2PI + np.log(self.variances))
            - 0.5 * (x - self.means) ** 2 / self.variances
        )
        return special.logsumexp(comp, axis=-1)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.weights * special.ndtr((x - self.means) / np.sqrt(self.variances)), axis=-1)

    def sf(self, x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(self.weights * special.ndtr((self.means - x) / np.sqrt(self.variances)), axis=-1)

    def _invert(self, fn, p, increasing):
        """Vectorised bisection of a monotone tail function down to float resolution."""
        p = np.asarray(p, dtype=float)
        flat = p.ravel()
        span = float(np.max(np.abs(self.means)) + 40.0 * np.sqrt(np.max(self.variances)))
        lo = np.full(flat.shape, -span)
        hi = np.full(flat.shape, span)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = (fn(mid) < flat) if increasing else (fn(mid) > flat)
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(mid))):
                break
        out = 0.5 * (lo + hi)
        edge = -np.inf if increasing else np.inf
        out = np.where(flat <= 0.0, edge, np.where(flat >= 1.0, -edge, out))
        out = out.reshape(p.shape)
        return out if out.ndim else float(out)

    def ppf(self, p):
        return self._invert(self.cdf, p, increasing=True)

    def isf(self, p):
        return self._invert(self.sf, p, increasing=False)

    def truncation_radius(self, tail_mass=1e-12):
        """Radius R with mixture mass outside [-R, R] below ``tail_mass``."""
        z = -special.ndtri(0.5 * tail_mass / self.weights.size)
        return float(np.max(np.abs(self.means) + z * np.sqrt(self.variances)))

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["weights"], doc["means"], doc["variances"])

    def __repr__(self):
        return (
            f"GaussianMixture1D(weights={self.weights.tolist()}, means={self.means.tolist()}, "
            f"variances={self.variances.tolist()})"
        )


def measure_from_dict(doc):
    if "covariance" in doc:
        return GaussianMeasure.from_dict(doc)
    if "weights" in doc:
        return GaussianMixture1D.from_dict(doc)
    raise InvalidMeasureError(f"unrecognised measure document with keys {sorted(doc)}")


def kl_to_gamma(m: GaussianMeasure) -> float:
    """Relative entropy D(N(theta, C) || N(0, I))."""
    w, _ = sym_eigh(m.covariance)
    if np.min(np.linalg.eigvalsh(m.covariance)) <= 0:
        raise InvalidMeasureError("covariance is not positive definite")
    val = 0.5 * (float(m.mean @ m.mean) + float(np.sum(w - 1.0 - np.log(w))))
    return max(val, 0.0)


def kl_mixture_to_gamma(m: GaussianMixture1D, accuracy=1e-8) -> float:
    """Relative entropy of a 1D mixture to the standard Gaussian by adaptive quadrature.

    Uses QUADPACK's adaptive Gauss-Kronrod rule on [-R, R] with R chosen so
    the neglected tail mass is below 1e-12.  Raises AccuracyError carrying
    the achieved estimate if the reported error exceeds ``accuracy``.
    """
    if m.weights.size == 1:
        g = GaussianMeasure.scalar(m.variances[0], m.means[0])
        return kl_to_gamma(g)
    radius = m.truncation_radius(1e-12)

    def integrand(x):
        lp = float(m.logpdf(x))
        return math.exp(lp) * (lp + 0.5 * (LOG_2PI + x * x))

    breaks = sorted(set(np.clip(m.means, -radius, radius).tolist()))
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(
                integrand, -radius, radius, points=breaks, epsabs=1e-12, epsrel=1e-12, limit=500
            )
        except integrate.IntegrationWarning as exc:
            value, err = integrate.quad(integrand, -radius, radius, points=breaks, limit=500)
            raise AccuracyError(f"mixture KL quadrature did not converge: {exc}", estimate=value)
    if err > accuracy:
        raise AccuracyError(f"mixture KL quadrature error {err:.3e} exceeds {accuracy:.1e}", estimate=value)
    return max(value, 0.0)


def bures_w2_squared(a: GaussianMeasure, b: GaussianMeasure) -> float:
    """Squared 2-Wasserstein distance between Gaussians (Bures formula)."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimensions differ: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    rb = sqrtm_psd(b.covariance)
    cross = sqrtm_psd(rb @ a.covariance @ rb)
    val = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(cross))
    return max(val, 0.0)


def equality_pair(C, theta=None):
    """The extremal pair (N(0, C), N(theta, C^{-1}))."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = C.shape[0]
    theta = np.zeros(n) if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    w, v = np.linalg.eigh(0.5 * (C + C.T))
    if np.min(w) <= 1e-14 * max(1.0, np.max(np.abs(w))):
        raise InvalidMeasureError("C is singular or not positive definite")
    inv = (v / w) @ v.T
    inv = 0.5 * (inv + inv.T)
    return GaussianMeasure(np.zeros(n), C), GaussianMeasure(theta, inv)


@dataclass(frozen=True)
class TalagrandGapReport:
    w2_squared: float
    entropy_mu: float
    entropy_nu: float
    gap: float
    nu_shift: list = field(default_factory=list)

    @property
    def upper(self):
        return 2.0 * self.entropy_mu + 2.0 * self.entropy_nu

    def to_dict(self):
        return {
            "w2_squared": self.w2_squared,
            "entropy_mu": self.entropy_mu,
            "entropy_nu": self.entropy_nu,
            "upper": self.upper,
            "gap": self.gap,
            "nu_shift": list(self.nu_shift),
        }


def talagrand_gap(mu: GaussianMeasure, nu: GaussianMeasure) -> TalagrandGapReport:
    """Slack 2 D(mu||gamma) + 2 D(nu||gamma) - W2(mu, nu)^2 for Gaussian inputs.

    ``mu`` must be centered.  ``nu`` may carry any mean: the slack is
    invariant under translating nu, and the applied shift is recorded.
    """
    if mu.dim != nu.dim:
        raise DimensionMismatchError(f"dimensions differ: {mu.dim} vs {nu.dim}")
    if not mu.is_centered():
        raise HypothesisError(
            f"hypothesis 'mu centered' violated: |mean| = {np.linalg.norm(mu.mean):.3e} > {CENTERED_TOL}"
        )
    shift = nu.mean.copy()
    nu_c = nu.translated(-shift)
    w2 = bures_w2_squared(mu, nu_c)
    d_mu = kl_to_gamma(mu)
    d_nu = kl_to_gamma(nu_c)
    return TalagrandGapReport(
        w2_squared=w2, entropy_mu=d_mu, entropy_nu=d_nu, gap=2.0 * d_mu + 2.0 * d_nu - w2,
        nu_shift=shift.tolist(),
    )
