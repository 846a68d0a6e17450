"""Integrand processes F_t used in stochastic integrals against Brownian paths.

Two kinds exist:

* ``DeterministicIntegrand`` -- a map t -> n x n matrix, either a closed-form
  family evaluated at any t, or a table of node values.
* ``StateFeedbackIntegrand`` -- a 1D map (t, x) -> real evaluated along a
  state process.  When a drift is attached the state follows
  dX = dB + b(t, X) dt (Euler-Maruyama); otherwise the state is the path.

``ReversedRepresentation`` wraps a forward integrand F and stands for the
integrand G with int G dB_hat = int F dB, without ever tabulating G.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, UnsupportedKindError


class Integrand:
    kind = "abstract"
    dim = 1
    approximate = False
    family = "abstract"

    @property
    def params(self):
        return {}

    def describe(self):
        return {"kind": self.kind, "family": self.family, "dim": self.dim,
                "approximate": self.approximate, "params": self.params}


def _as_times(t):
    return np.asarray(t, dtype=float)


class DeterministicIntegrand(Integrand):
    """Matrix-valued deterministic integrand.

    Parameters
    ----------
    family : str
        Tag of the closed-form family (``"identity"``, ``"gaussian_optimal"``,
        ...) or ``"tabulated"``.
    fn : callable, optional
        Vectorised map from an array of times with shape ``s`` to matrices
        with shape ``s + (n, n)``.  Required unless ``table`` is given.
    table : ndarray, optional
        Node values with shape ``(m + 1, n, n)`` on the uniform grid k/m.
    flipped : bool
        If set, the integrand is u -> base(1 - u).
    """

    kind = "deterministic_matrix"

    def __init__(self, family, dim, fn=None, table=None, params=None, flipped=False):
        if (fn is None) == (table is None):
            raise ValueError("exactly one of fn or table is required")
        self.family = family
        self.dim = int(dim)
        self._fn = fn
        self._table = None
        if table is not None:
            table = np.array(table, dtype=float)
            if table.ndim == 1:
                table = table[:, None, None]
            if table.shape[1:] != (self.dim, self.dim) or table.shape[0] < 2:
                raise DimensionMismatchError(f"table shape {table.shape} does not match dim {dim}")
            table.setflags(write=False)
            self._table = table
        self._params = dict(params or {})
        self.flipped = bool(flipped)

    @property
    def params(self):
        return dict(self._params, flipped=self.flipped)

    @property
    def is_tabulated(self):
        return self._table is not None

    @property
    def table_steps(self):
        return None if self._table is None else self._table.shape[0] - 1

    def _base(self, t):
        if self._fn is not None:
            return np.asarray(self._fn(t), dtype=float)
        m = self._table.shape[0] - 1
        grid = np.linspace(0.0, 1.0, m + 1)
        flat = self._table.reshape(m + 1, -1)
        tt = np.clip(np.ravel(t), 0.0, 1.0)
        out = np.empty((tt.size, flat.shape[1]))
        for j in range(flat.shape[1]):
            out[:, j] = np.interp(tt, grid, flat[:, j])
        return out.reshape(np.shape(t) + (self.dim, self.dim))

    def __call__(self, t):
        t = _as_times(t)
        return self._base(1.0 - t if self.flipped else t)

    def table(self, steps):
        """Node values on the grid k/steps, shape (steps + 1, n, n)."""
        if self._table is not None and self.table_steps == steps:
            return self._table[::-1] if self.flipped else self._table
        return self(np.arange(steps + 1) / steps)

    def with_flip(self):
        return DeterministicIntegrand(
            self.family, self.dim, fn=self._fn, table=self._table, params=self._params,
            flipped=not self.flipped,
        )

    def __eq__(self, other):
        if not isinstance(other, DeterministicIntegrand):
            return NotImplemented
        same_source = self._fn is other._fn and (
            (self._table is None and other._table is None)
            or (self._table is not None and other._table is not None
                and np.array_equal(self._table, other._table))
        )
        return same_source and self.family == other.family and self.flipped == other.flipped

    __hash__ = None

    def __repr__(self):
        return f"DeterministicIntegrand(family={self.family!r}, dim={self.dim}, flipped={self.flipped})"


def identity_integrand(n=1):
    eye = np.eye(n)
    return DeterministicIntegrand(
        "identity", n, fn=lambda t: np.broadcast_to(eye, np.shape(t) + (n, n)).copy()
    )


def constant_integrand(value):
    value = np.atleast_2d(np.asarray(value, dtype=float))
    n = value.shape[0]
    return DeterministicIntegrand(
        "constant", n, fn=lambda t: np.broadcast_to(value, np.shape(t) + (n, n)).copy(),
        params={"value": value.tolist()},
    )


def polynomial_integrand(coefficients):
    """Scalar integrand sum_j c_j t^j (coefficients in ascending order)."""
    coeffs = np.asarray(coefficients, dtype=float)

    def fn(t):
        return np.polynomial.polynomial.polyval(t, coeffs)[..., None, None]

    return DeterministicIntegrand("polynomial", 1, fn=fn, params={"coefficients": coeffs.tolist()})


def tabulated_integrand(values, family="tabulated", approximate=False):
    """Deterministic integrand from node values on a uniform grid (first axis = nodes)."""
    values = np.asarray(values, dtype=float)
    dim = 1 if values.ndim == 1 else values.shape[1]
    f = DeterministicIntegrand(family, dim, table=values)
    f.approximate = approximate
    return f


class StateFeedbackIntegrand(Integrand):
    """Scalar integrand F(t, x) evaluated along a 1D state process."""

    kind = "state_feedback_1d"
    dim = 1

    def __init__(self, family, fn, drift=None, params=None, joint=None):
        self.family = family
        self._fn = fn
        self._drift = drift
        self._joint = joint
        self._params = dict(params or {})

    @property
    def params(self):
        return dict(self._params)

    @property
    def has_drift(self):
        return self._drift is not None

    def __call__(self, t, x):
        return np.asarray(self._fn(t, np.asarray(x, dtype=float)), dtype=float)

    def drift(self, t, x):
        if self._drift is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.asarray(self._drift(t, np.asarray(x, dtype=float)), dtype=float)

    def value_and_drift(self, t, x):
        """(F(t, x), b(t, x)); families sharing work between the two override via ``joint``."""
        if self._joint is not None:
            v, b = self._joint(t, np.asarray(x, dtype=float))
            return np.asarray(v, dtype=float), np.asarray(b, dtype=float)
        return self(t, x), self.drift(t, x)

    def at_step(self, k, t, x):
        """Value at grid step ``k`` (time ``t``); tabulated subclasses use ``k``."""
        return self(t, x)

    def __repr__(self):
        return f"StateFeedbackIntegrand(family={self.family!r}, drift={self.has_drift})"


def linear_state_integrand(slope, intercept=0.0):
    """F(t, x) = slope * x + intercept along the driving path (no drift).

    With slope 2 the Ito integral is B_1^2 - 1.
    """
    return StateFeedbackIntegrand(
        "linear_state", lambda t, x: slope * x + intercept,
        params={"slope": float(slope), "intercept": float(intercept)},
    )


class ReversedRepresentation(Integrand):
    """Representation of int F dB with respect to the time-reversed motion.

    Integrating this object against an ensemble ``e`` means integrating the
    wrapped forward integrand against ``reverse(e)``; the two stochastic
    integrals are the same random variable.
    """

    kind = "reversed_representation"

    def __init__(self, inner):
        if isinstance(inner, ReversedRepresentation):
            raise UnsupportedKindError("nested reversed representations are not supported")
        self.inner = inner
        self.dim = inner.dim
        self.family = f"reversed({inner.family})"

    @property
    def params(self):
        return {"inner": self.inner.describe()}

    def __repr__(self):
        return f"ReversedRepresentation({self.inner!r})"
