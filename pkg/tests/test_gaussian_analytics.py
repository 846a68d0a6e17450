import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from talagrand_lab import (
    GaussianMeasure,
    GaussianMixture1D,
    bures_w2_squared,
    equality_pair,
    kl_mixture_to_gamma,
    kl_to_gamma,
    measure_from_dict,
    talagrand_gap,
)
from talagrand_lab.errors import DimensionMismatchError, HypothesisError, InvalidMeasureError

# high-precision quadrature (mpmath, 30 digits) of the KL divergence of
# 0.5 N(-1, 1/2) + 0.5 N(1, 1/2) from the standard Gaussian
MIXTURE_KL = 0.09650145421312771

variances = st.floats(0.05, 20.0)


def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + 0.3 * np.eye(n)


def test_kl_scalar_closed_form():
    for a in (0.25, 0.5, 1.0, 2.0, 4.0):
        assert kl_to_gamma(GaussianMeasure.scalar(a)) == pytest.approx(0.5 * (a - 1 - math.log(a)), abs=1e-15)


def test_kl_matrix_with_mean():
    C = np.array([[2.0, 0.3], [0.3, 0.7]])
    m = np.array([0.5, -1.0])
    expected = 0.5 * (np.trace(C) + m @ m - 2 - math.log(np.linalg.det(C)))
    assert kl_to_gamma(GaussianMeasure(m, C)) == pytest.approx(expected, abs=1e-14)


def test_bures_commuting_and_mean_shift():
    a = GaussianMeasure([1.0, 0.0], np.diag([4.0, 1.0]))
    b = GaussianMeasure([0.0, 2.0], np.diag([1.0, 9.0]))
    # commuting covariances: sum of squared sqrt-differences plus mean distance
    assert bures_w2_squared(a, b) == pytest.approx(5.0 + 1.0 + 4.0, abs=1e-12)


def test_bures_noncommuting_matches_trace_formula():
    rng = np.random.default_rng(3)
    A, B = random_spd(rng, 3), random_spd(rng, 3)
    # independent route: the optimal map T = A^{-1/2}(A^{1/2} B A^{1/2})^{1/2} A^{-1/2}
    w, v = np.linalg.eigh(A)
    ra = v @ np.diag(np.sqrt(w)) @ v.T
    ira = v @ np.diag(1 / np.sqrt(w)) @ v.T
    w2, v2 = np.linalg.eigh(ra @ B @ ra)
    T = ira @ (v2 @ np.diag(np.sqrt(w2)) @ v2.T) @ ira
    cost = np.trace((T - np.eye(3)) @ A @ (T - np.eye(3)).T)
    assert bures_w2_squared(GaussianMeasure(np.zeros(3), A), GaussianMeasure(np.zeros(3), B)) == pytest.approx(cost, rel=1e-10)


@given(variances, variances)
def test_bures_scalar(a, b):
    got = bures_w2_squared(GaussianMeasure.scalar(a), GaussianMeasure.scalar(b))
    assert got == pytest.approx((math.sqrt(a) - math.sqrt(b)) ** 2, abs=1e-10 * (1 + a + b))


@given(variances, variances, st.floats(-3, 3))
def test_symmetrised_inequality_scalar(a, b, theta):
    rep = talagrand_gap(GaussianMeasure.scalar(a), GaussianMeasure.scalar(b, theta))
    assert rep.gap >= -1e-10
    assert rep.nu_shift == pytest.approx([theta])


@given(st.integers(0, 10_000))
def test_symmetrised_inequality_matrix(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    mu = GaussianMeasure(np.zeros(n), random_spd(rng, n))
    nu = GaussianMeasure(rng.normal(size=n), random_spd(rng, n))
    assert talagrand_gap(mu, nu).gap >= -1e-9


@given(variances, st.floats(-3, 3))
def test_equality_pair_scalar(a, theta):
    mu, nu = equality_pair([[a]], [theta])
    assert abs(talagrand_gap(mu, nu).gap) < 1e-10


def test_equality_pair_matrix():
    mu, nu = equality_pair(np.diag([2.0, 0.5]), [1.0, 0.0])
    rep = talagrand_gap(mu, nu)
    assert abs(rep.gap) < 1e-10
    assert rep.nu_shift == pytest.approx([1.0, 0.0])


def test_gap_translation_invariant_but_raw_w2_is_not():
    mu, nu = equality_pair([[4.0]], [2.0])
    rep = talagrand_gap(mu, nu)
    raw = bures_w2_squared(mu, nu)
    assert raw == pytest.approx(rep.w2_squared + 4.0)
    assert rep.upper - rep.w2_squared == pytest.approx(rep.gap)


def test_uncentered_mu_rejected():
    with pytest.raises(HypothesisError):
        talagrand_gap(GaussianMeasure.scalar(1.0, 0.5), GaussianMeasure.scalar(1.0))


def test_invalid_measures():
    with pytest.raises(InvalidMeasureError):
        GaussianMeasure([0.0], [[-1.0]])
    with pytest.raises(InvalidMeasureError):
        GaussianMeasure([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidMeasureError):
        equality_pair([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(DimensionMismatchError):
        bures_w2_squared(GaussianMeasure.standard(1), GaussianMeasure.standard(2))


def test_mixture_kl_against_high_precision_value():
    mix = GaussianMixture1D([0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])
    assert kl_mixture_to_gamma(mix) == pytest.approx(MIXTURE_KL, abs=1e-9)


def test_single_component_mixture_kl_matches_closed_form():
    mix = GaussianMixture1D([1.0], [0.3], [2.5])
    assert kl_mixture_to_gamma(mix) == pytest.approx(kl_to_gamma(GaussianMeasure.scalar(2.5, 0.3)), abs=1e-9)


def test_mixture_quantiles_invert_cdf():
    mix = GaussianMixture1D([0.2, 0.8], [-2.0, 0.5], [0.3, 1.5])
    p = np.array([1e-9, 0.01, 0.3, 0.5, 0.97])
    assert mix.cdf(mix.ppf(p)) == pytest.approx(p, rel=1e-7)
    assert mix.sf(mix.isf(p)) == pytest.approx(p, rel=1e-7)
    assert mix.mean == pytest.approx(0.2 * -2.0 + 0.8 * 0.5)


def test_mixture_validation():
    with pytest.raises(InvalidMeasureError):
        GaussianMixture1D([0.5, 0.6], [0, 0], [1, 1])
    with pytest.raises(InvalidMeasureError):
        GaussianMixture1D([1.0], [0.0], [0.0])


def test_dict_round_trip():
    g = GaussianMeasure([1.0, 2.0], [[2.0, 0.1], [0.1, 1.0]])
    back = measure_from_dict(g.to_dict())
    assert np.array_equal(back.covariance, g.covariance) and np.array_equal(back.mean, g.mean)
    mix = GaussianMixture1D([0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])
    assert np.array_equal(measure_from_dict(mix.to_dict()).means, mix.means)


@given(st.integers(0, 10_000))
def test_equality_pair_sweep_well_conditioned(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = np.exp(rng.uniform(0, math.log(100.0), size=n))
    eig[0] = 1.0
    C = (q * eig) @ q.T
    mu, nu = equality_pair(0.5 * (C + C.T), rng.normal(size=n))
    assert abs(talagrand_gap(mu, nu).gap) <= 1e-9
