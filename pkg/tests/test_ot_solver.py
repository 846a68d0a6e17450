import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from talagrand_lab import (
    DiscreteMeasure,
    GaussianMeasure,
    GaussianMixture1D,
    brute_force_w2_squared,
    quantile_grid_w2_squared,
    sinkhorn_w2_squared,
    w2_squared_1d,
    w2_squared_exact,
)
from talagrand_lab.errors import AccuracyError, InvalidMeasureError, SizeCapError

# 0.5 N(-1, 1/2) + 0.5 N(1, 1/2) against N(0, 1/2), quantile quadrature at tol 1e-8
MIXTURE_W2SQ = 0.28356454632763156


def random_measure(rng, k, n, uniform):
    pts = rng.normal(size=(k, n))
    w = np.full(k, 1.0 / k) if uniform else rng.dirichlet(np.ones(k))
    return DiscreteMeasure(pts, w)


@pytest.mark.parametrize("ka,kb", list(itertools.product(range(1, 5), repeat=2)))
def test_exact_matches_vertex_enumeration(ka, kb):
    rng = np.random.default_rng(100 * ka + kb)
    for n in (1, 2):
        for uniform in (True, False):
            a = random_measure(rng, ka, n, uniform)
            b = random_measure(rng, kb, n, uniform)
            assert w2_squared_exact(a, b) == pytest.approx(brute_force_w2_squared(a, b), abs=1e-9)


def test_brute_force_cap():
    a = DiscreteMeasure.uniform(np.arange(5.0))
    with pytest.raises(SizeCapError):
        brute_force_w2_squared(a, a)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.integers(0, 1000))
def test_sorted_formula_matches_exact(xs, seed):
    ys = np.random.default_rng(seed).normal(size=len(xs))
    assert w2_squared_1d(np.array(xs), ys) == pytest.approx(w2_squared_exact(np.array(xs), ys), abs=1e-9)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 1000))
def test_cdf_merge_matches_lp(ka, kb, seed):
    rng = np.random.default_rng(seed)
    a = random_measure(rng, ka, 1, False)
    b = random_measure(rng, kb, 1, False)
    assert w2_squared_1d(a, b) == pytest.approx(w2_squared_exact(a, b), abs=1e-9)


def test_continuous_gaussians_match_closed_form():
    for va, vb, m in ((4.0, 0.25, 0.0), (1.0, 2.0, 1.5), (0.1, 9.0, -2.0)):
        got = w2_squared_1d(GaussianMeasure.scalar(va, m), GaussianMeasure.scalar(vb))
        assert got == pytest.approx((math.sqrt(va) - math.sqrt(vb)) ** 2 + m * m, abs=1e-8)


def test_mixture_against_gaussian_reference_value():
    mix = GaussianMixture1D([0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])
    assert w2_squared_1d(mix, GaussianMeasure.scalar(0.5)) == pytest.approx(MIXTURE_W2SQ, abs=1e-8)


def test_mixture_route_agrees_with_scipy_distribution():
    # a one-component mixture and scipy's frozen normal are two routes to the same law
    mix = GaussianMixture1D([1.0], [0.5], [2.0])
    got = w2_squared_1d(mix, stats.norm(0.0, 0.5))
    assert got == pytest.approx((math.sqrt(2.0) - 0.5) ** 2 + 0.25, abs=1e-8)


def test_quantile_grid_convergence():
    a, b = GaussianMeasure.scalar(4.0), GaussianMeasure.scalar(0.25)
    errs = [abs(quantile_grid_w2_squared(a, b, n) - 2.25) for n in (100, 1000, 10000)]
    assert errs[0] > errs[1] > errs[2]
    assert abs(quantile_grid_w2_squared(a, b, 10**6) - 2.25) < 1e-4


def test_sinkhorn_close_to_exact_small():
    rng = np.random.default_rng(0)
    a = DiscreteMeasure.uniform(rng.normal(size=(24, 1)))
    b = DiscreteMeasure.uniform(1.5 * rng.normal(size=(24, 1)) + 0.3)
    exact = w2_squared_exact(a, b)
    res = sinkhorn_w2_squared(a, b, epsilon=1e-2)
    assert res.residual < 1e-5
    # the entropic plan is feasible, so its cost is never below the optimum
    assert exact - 1e-6 <= res.value <= exact * 1.05


def test_sinkhorn_debias_zero_on_identical_inputs():
    a = DiscreteMeasure.uniform(np.linspace(-1, 1, 12)[:, None])
    res = sinkhorn_w2_squared(a, a, epsilon=0.05, debias=True)
    assert abs(res.value) < 1e-6


def test_sinkhorn_reports_nonconvergence():
    rng = np.random.default_rng(1)
    a = DiscreteMeasure.uniform(rng.normal(size=(30, 1)))
    b = DiscreteMeasure.uniform(rng.normal(size=(30, 1)) * 3)
    with pytest.raises(AccuracyError) as info:
        sinkhorn_w2_squared(a, b, epsilon=1e-3, max_iters=20)
    assert info.value.estimate is not None


def test_measure_validation():
    with pytest.raises(InvalidMeasureError):
        DiscreteMeasure([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(InvalidMeasureError):
        DiscreteMeasure([[0.0], [np.nan]], [0.5, 0.5])


@given(st.integers(0, 10_000))
def test_exact_w2_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_measure(rng, int(rng.integers(1, 7)), 2, bool(rng.integers(2))) for _ in range(3))
    ab, ac, cb = (math.sqrt(w2_squared_exact(p, q)) for p, q in ((a, b), (a, c), (c, b)))
    assert ab <= ac + cb + 1e-9


@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_exact_solvers_scale_quadratically(seed, lam):
    rng = np.random.default_rng(seed)
    a = random_measure(rng, 5, 2, False)
    b = random_measure(rng, 4, 2, False)
    base = w2_squared_exact(a, b)
    assert w2_squared_exact(a.scaled(lam), b.scaled(lam)) == pytest.approx(lam**2 * base, rel=1e-10, abs=1e-10)
    x, y = rng.normal(size=9), rng.normal(size=9)
    assert w2_squared_1d(lam * x, lam * y) == pytest.approx(lam**2 * w2_squared_1d(x, y), rel=1e-10)
