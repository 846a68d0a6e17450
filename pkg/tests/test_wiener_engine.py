import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from talagrand_lab import (
    PathEnsemble,
    TimeGrid,
    constant_integrand,
    discrete_reversal,
    ito_integral,
    linear_state_integrand,
    martingale_snapshot,
    martingale_snapshots,
    polynomial_integrand,
    reverse,
    sample_paths,
    second_moment,
)
from talagrand_lab import rng
from talagrand_lab.errors import DimensionMismatchError
from talagrand_lab.io import dump_ensemble, load_ensemble
from talagrand_lab.wiener_engine import increment_moments, node_statistics, step_values


def test_normals_are_block_independent():
    whole = rng.standard_normals(7, 0, 50, 13)
    parts = np.vstack([rng.standard_normals(7, a, b, 13) for a, b in ((0, 9), (9, 30), (30, 50))])
    assert np.array_equal(whole, parts)


def test_normals_distribution():
    z = rng.standard_normals(1, 0, 4000, 25).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(z.mean()) < 4 / math.sqrt(z.size)


def test_seeds_differ_and_repeat():
    a = sample_paths(20, 1, 100, 5).paths
    b = sample_paths(20, 1, 100, 5).paths
    c = sample_paths(20, 1, 100, 6).paths
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_grid_index():
    g = TimeGrid(8)
    assert g.index(0.25) == 2 and g.index(1.0) == 8
    with pytest.raises(ValueError):
        g.index(0.3)


def test_increments_have_brownian_moments():
    e = sample_paths(10, 2, 20000, 3)
    mean, var = increment_moments(e)
    assert np.all(np.abs(mean) < 4 * math.sqrt(0.1 / 20000))
    assert np.allclose(var, 0.1, rtol=0.05)
    _, node_var = node_statistics(e)
    assert np.allclose(node_var[-1], 1.0, rtol=0.05)


def test_reversal_shares_randomness_and_is_involution():
    e = sample_paths(16, 1, 200, 11)
    r = reverse(e)
    assert r.same_randomness(e)
    p, q = e.paths[:, :, 0], r.paths[:, :, 0]
    assert np.array_equal(q[:, -1], p[:, -1])
    k = 5
    assert np.allclose(q[:, k], p[:, -1] - p[:, 16 - k])
    assert np.array_equal(reverse(r).paths, e.paths)


def test_reversed_paths_are_brownian():
    r = reverse(sample_paths(10, 1, 20000, 4))
    mean, var = increment_moments(r)
    assert np.allclose(var, 0.1, rtol=0.05)
    assert np.all(np.abs(mean) < 4 * math.sqrt(0.1 / 20000))


def test_ito_integral_deterministic_exact_isometry():
    # for deterministic F the Ito sum is exactly Gaussian with variance sum F_k^2 dt
    f = polynomial_integrand([1.0, 2.0])
    e = sample_paths(50, 1, 40000, 9)
    x = ito_integral(f, e).values[:, 0]
    table = f.table(50)[:50, 0, 0]
    target = float(np.sum(table ** 2) / 50)
    assert abs(x.var() - target) < 0.03 * target


def test_reversed_integration_of_flipped_table_is_pathwise_equal():
    f = polynomial_integrand([0.5, -1.0, 3.0])
    e = sample_paths(40, 1, 300, 2)
    x = ito_integral(f, e).values
    y = ito_integral(discrete_reversal(f, 40), reverse(e)).values
    assert np.allclose(x, y, atol=1e-12)


def test_martingale_snapshots_consistent():
    f = linear_state_integrand(2.0)
    e = sample_paths(20, 1, 500, 1)
    a, b = martingale_snapshots(f, e, [0.5, 1.0])
    assert np.array_equal(a.values, martingale_snapshot(f, e, 0.5).values)
    assert np.allclose(b.values, ito_integral(f, e).values)
    assert np.all(martingale_snapshot(f, e, 0.0).values == 0)


def test_linear_state_integrand_gives_squared_endpoint_discretely():
    # sum 2 B_k dB_k = B_1^2 - sum dB_k^2
    e = sample_paths(30, 1, 100, 8)
    x = ito_integral(linear_state_integrand(2.0), e).values[:, 0]
    p = e.paths[:, :, 0]
    assert np.allclose(x, p[:, -1] ** 2 - np.sum(np.diff(p, axis=1) ** 2, axis=1))


def test_second_moment_standard_error():
    e = sample_paths(4, 1, 10000, 0)
    v, se = second_moment(ito_integral(constant_integrand(1.0), e))
    assert abs(v - 1.0) < 4 * se and se == pytest.approx(math.sqrt(2 / 10000), rel=0.1)


def test_dimension_checks():
    e = sample_paths(4, 2, 10, 0)
    with pytest.raises(DimensionMismatchError):
        step_values(constant_integrand(1.0), e.paths, e.grid)


def test_from_array_validation():
    with pytest.raises(ValueError):
        PathEnsemble.from_array(np.ones((3, 5)))


@given(steps=st.integers(1, 40), dim=st.integers(1, 3), paths=st.integers(1, 30), seed=st.integers(0, 2**40))
def test_ensemble_binary_round_trip(tmp_path_factory, steps, dim, paths, seed):
    e = sample_paths(steps, dim, paths, seed)
    for view in (e, reverse(e)):
        path = tmp_path_factory.mktemp("wpe") / "e.bin"
        dump_ensemble(view, path)
        back = load_ensemble(path)
        assert back.direction == view.direction and back.seed == seed
        assert np.array_equal(back.paths, view.paths)
        assert path.stat().st_size == 37 + paths * (steps + 1) * dim * 8


def test_block_iteration_matches_whole():
    e = sample_paths(12, 1, 101, 3)
    pieces = np.concatenate([n for _, _, n in e.iter_blocks(block_size=17)])
    assert np.array_equal(pieces, e.paths)


def test_gaussian_integrand_reproduces_covariance():
    from talagrand_lab import gaussian_integrand

    C = np.array([[2.0, 0.6], [0.6, 0.5]])
    e = sample_paths(200, 2, 20000, 13)
    x = ito_integral(gaussian_integrand(C), e)
    value, se = second_moment(x)
    # the left-endpoint sum carries an O(1/m) bias next to the sampling error
    table = gaussian_integrand(C).table(200)[:200]
    discrete = np.einsum("kij,kij->", table, table) / 200
    assert abs(value - discrete) <= 3 * se
    assert abs(discrete - np.trace(C)) < 0.02
    cov = np.cov(x.values.T)
    assert np.allclose(cov, C, atol=0.06)
