"""Acceptance criteria, each at its stated tolerance and problem size.

Every test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary.  Run directly with ``python3 tests/test_acceptance.py``.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from talagrand_lab import (
    DiscreteMeasure,
    GaussianMeasure,
    GaussianMixture1D,
    ReversedRepresentation,
    bures_w2_squared,
    brute_force_w2_squared,
    discrete_reversal,
    entropy_functional,
    equality_pair,
    estimate_reversed_integrand,
    follmer_integrand_1d,
    gaussian_integrand,
    ito_integral,
    kl_mixture_to_gamma,
    kl_to_gamma,
    linear_coupling_cost,
    linear_coupling_sweep,
    linear_state_integrand,
    mean_preservation,
    min_linear_cost,
    perturbed_gaussian_integrand,
    pythagorean_gap,
    quantile_grid_w2_squared,
    reverse,
    reverse_deterministic,
    sample_paths,
    sinkhorn_w2_squared,
    tail_energy_profile,
    time_reversal_coupling,
    w2_squared_1d,
    w2_squared_exact,
)
from talagrand_lab.cli import main
from talagrand_lab.errors import HypothesisError
from talagrand_lab.santalo_check import catalog_entry, duality_bridge, legendre_dual, santalo_product

RESULT_LINES = {}
ALPHAS = (0.25, 0.5, 2.0, 4.0)
MIX = GaussianMixture1D([0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])


def record(number, title, ok, detail, elapsed=None, limit=None):
    timing = "" if elapsed is None else f" [{elapsed:.1f}s, limit {limit:g}s]"
    if limit is not None and elapsed > limit:
        ok = False
    RESULT_LINES[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}; {detail}{timing}"
    print(RESULT_LINES[number])
    assert ok, RESULT_LINES[number]


def test_criterion_01_equality_identity():
    start = time.perf_counter()
    worst = 0.0
    for a in ALPHAS:
        mu, nu = equality_pair([[a]])
        worst = max(worst, abs(bures_w2_squared(mu, nu) - 2 * kl_to_gamma(mu) - 2 * kl_to_gamma(nu)))
    mu, nu = equality_pair(np.diag([2.0, 0.5]), [1.0, 0.0])
    # the shift is removed before comparing; W2 picks up |theta|^2 and so does D(nu)
    worst = max(worst, abs(bures_w2_squared(mu, nu) - 2 * kl_to_gamma(mu) - 2 * kl_to_gamma(nu)))
    elapsed = time.perf_counter() - start
    record(1, "equality-pair identity", worst < 1e-10, f"max |W2^2 - (2D + 2D)| = {worst:.2e}", elapsed, 1.0)


def test_criterion_02_entropy_functional():
    start = time.perf_counter()
    worst = 0.0
    for a in ALPHAS:
        j = entropy_functional(gaussian_integrand([[a]]), GaussianMeasure.scalar(a)).j_value
        worst = max(worst, abs(j - 0.5 * (a - 1 - math.log(a))))
    rng = np.random.default_rng(2024)
    min_gap, tried = math.inf, 0
    while tried < 20:
        a = float(rng.choice(ALPHAS))
        try:
            f = perturbed_gaussian_integrand(a, float(rng.uniform(0.05, 0.8)), rng.normal(size=3))
        except HypothesisError:
            continue
        cert = entropy_functional(f, GaussianMeasure.scalar(a))
        # deterministic integrands: quadrature is exact, so the standard error is 0
        if not cert.gap >= -(3 * cert.std_error + 1e-10):
            min_gap = min(min_gap, cert.gap)
            break
        min_gap = min(min_gap, cert.gap)
        tried += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and tried == 20
    record(2, "entropy functional", ok,
           f"max |J - KL| = {worst:.2e}; 20 perturbed reps, min J - KL = {min_gap:.3e}", elapsed, 30.0)


def test_criterion_03_linear_coupling():
    start = time.perf_counter()
    alphas, sigmas = (0.25, 1.0, 2.0, 4.0), (-1.0, 0.0, 1.0)
    e = sample_paths(1000, 2, 100_000, 31)
    sweep = linear_coupling_sweep(alphas, sigmas, e)
    worst_rel, worst_z, ok = 0.0, 0.0, True
    for (a, s), r in sweep.items():
        cf = linear_coupling_cost(a, s)
        if cf == 0.0:
            ok &= r.cost <= 1e-12
            continue
        rel = abs(r.cost - cf) / cf
        z = abs(r.cost - cf) / r.std_error
        worst_rel, worst_z = max(worst_rel, rel), max(worst_z, z)
        ok &= rel <= 0.02 and z <= 3.0
    r4 = sweep[(4.0, 1.0)]
    margin4 = (r4.cost - 2.25) / r4.std_error
    r1 = sweep[(1.0, 1.0)]
    ok &= margin4 > 10 and abs(r1.cost - 0.0) <= 1e-12
    ok &= min_linear_cost(4.0).verdict == "strict" and min_linear_cost(1.0).verdict == "equal"
    elapsed = time.perf_counter() - start
    record(3, "linear coupling", ok,
           f"max rel err {worst_rel:.2%}, max |z| {worst_z:.2f}; alpha=4 min {r4.cost:.5f} "
           f"exceeds 2.25 by {margin4:.1f} se; alpha=1 min {r1.cost:.1e}", elapsed, 120.0)


def test_criterion_04_time_reversal():
    start = time.perf_counter()
    e = sample_paths(1000, 1, 100_000, 41)
    f, h = gaussian_integrand([[4.0]]), gaussian_integrand([[0.25]])
    rep = time_reversal_coupling(reverse_deterministic(f), h, reverse(e),
                                 GaussianMeasure.scalar(4.0), GaussianMeasure.scalar(0.25))
    rel = abs(rep.cost - 2.25) / 2.25
    z_lo = rep.slack_lower / rep.std_error
    z_up = rep.slack_upper / rep.std_error
    ok = rel <= 0.02 and abs(z_lo) <= 3 and abs(z_up) <= 3
    elapsed = time.perf_counter() - start
    record(4, "time-reversal coupling", ok,
           f"cost {rep.cost:.5f} +- {rep.std_error:.5f} ({rel:.2%} from 2.25), "
           f"z vs W2^2 {z_lo:+.2f}, z vs 2D+2D {z_up:+.2f}", elapsed, 60.0)


@pytest.fixture(scope="module")
def lemma_ensemble():
    return sample_paths(200, 1, 20_000, 51)


def test_criterion_05_tail_profile(lemma_ensemble):
    e = lemma_ensemble
    det_worst = 0.0
    for a in ALPHAS:
        f = gaussian_integrand([[a]])
        det_worst = max(det_worst, float(np.max(np.abs(tail_energy_profile(f, reverse_deterministic(f), steps=1000).slack))))
        mc = tail_energy_profile(f, discrete_reversal(f, 200), mode="monte_carlo", ensemble=e)
        det_worst = max(det_worst, float(np.max(np.abs(mc.slack))))
    ok = det_worst <= 1e-10
    details = [f"deterministic max |slack| {det_worst:.1e}"]
    for label, f in (("alpha=4", gaussian_integrand([[4.0]])), ("B1^2-1", linear_state_integrand(2.0))):
        fit = estimate_reversed_integrand(ito_integral(f, e), reverse(e))
        prof = tail_energy_profile(f, fit, mode="monte_carlo", ensemble=e)
        z_min = float(np.min(prof.slack / np.maximum(prof.std_error, 1e-300)))
        mp = mean_preservation(f, e, fit)
        diff = np.abs(mp["mean_f"] - mp["mean_g"])
        z_mean = float(np.max(diff / np.maximum(mp["se"], 1e-300)))
        ok &= prof.holds(3.0, 1e-10) and bool(np.all(diff <= 3.0 * mp["se"] + 1e-10))
        details.append(f"{label}: min slack/se {z_min:+.2f}, mean-preservation max z {z_mean:.2f}")
    record(5, "tail-energy profile", ok, "; ".join(details))


def test_criterion_06_pythagorean_gap(lemma_ensemble):
    e = lemma_ensemble
    sq = linear_state_integrand(2.0)
    x = ito_integral(sq, e)
    fit = estimate_reversed_integrand(x, reverse(e))
    g = gaussian_integrand([[4.0]])
    xg = ito_integral(g, e)
    fit_g = estimate_reversed_integrand(xg, reverse(e))
    ok, parts = True, []
    for t in (0.25, 0.5, 0.75):
        pg = pythagorean_gap(x, sq, e, t, fit=fit)
        z = (pg.value - 4 * t * (1 - t)) / pg.std_error
        pz = pythagorean_gap(xg, g, e, t, fit=fit_g)
        ok &= abs(z) <= 3 and abs(pz.value) <= 3 * pz.std_error + 1e-9
        parts.append(f"t={t}: {pg.value:.4f} vs {4 * t * (1 - t):.4f} (z {z:+.2f}), gaussian {pz.value:.1e}")
    record(6, "Pythagorean gap", ok, "; ".join(parts))


def test_criterion_07_follmer():
    start = time.perf_counter()
    e = sample_paths(1000, 1, 100_000, 71)
    kl = kl_mixture_to_gamma(MIX)
    cert = entropy_functional(follmer_integrand_1d(MIX), MIX, mode="monte_carlo", ensemble=e)
    rel = abs(cert.j_value - kl) / kl
    nu = GaussianMeasure.scalar(0.5)
    rep = time_reversal_coupling(ReversedRepresentation(follmer_integrand_1d(MIX)),
                                 gaussian_integrand([[0.5]]), reverse(e), MIX, nu)
    w2 = w2_squared_1d(MIX, nu)
    ok = rel <= 0.05 and rep.lower_source == "quantile_1d" and rep.sandwich_holds(3.0, 1e-10)
    elapsed = time.perf_counter() - start
    record(7, "Follmer experiment", ok,
           f"J {cert.j_value:.5f} +- {cert.std_error:.5f} vs KL {kl:.5f} ({rel:.2%}); "
           f"{w2:.5f} <= cost {rep.cost:.5f} +- {rep.std_error:.5f} <= {rep.upper_oracle:.5f}", elapsed, 180.0)


def test_criterion_08_ot_oracles():
    rng = np.random.default_rng(81)
    count, worst = 0, 0.0
    for ka, kb in itertools.product(range(1, 5), repeat=2):
        for n, uniform in itertools.product((1, 2), (True, False)):
            a = DiscreteMeasure(rng.normal(size=(ka, n)), np.full(ka, 1 / ka) if uniform else rng.dirichlet(np.ones(ka)))
            b = DiscreteMeasure(rng.normal(size=(kb, n)), np.full(kb, 1 / kb) if uniform else rng.dirichlet(np.ones(kb)))
            worst = max(worst, abs(w2_squared_exact(a, b) - brute_force_w2_squared(a, b)))
            count += 1
    sk_worst = 0.0
    for seed in (1, 2):
        r = np.random.default_rng(seed)
        a = DiscreteMeasure.uniform(r.normal(size=(128, 1)))
        b = DiscreteMeasure.uniform(2.0 * r.normal(size=(128, 1)) + 0.5)
        exact = w2_squared_1d(a, b)
        sk = sinkhorn_w2_squared(a, b, epsilon=1e-3)
        sk_worst = max(sk_worst, abs(sk.value - exact) / exact)
    qg = quantile_grid_w2_squared(GaussianMeasure.scalar(4.0), GaussianMeasure.scalar(0.25), 10**6)
    ok = worst <= 1e-9 and sk_worst <= 0.02 and abs(qg - 2.25) <= 1e-4
    record(8, "OT oracle agreement", ok,
           f"{count} exhaustive instances, max |exact - vertex| {worst:.1e}; Sinkhorn rel err "
           f"{sk_worst:.3%}; quantile grid {qg:.8f}")


def test_criterion_09_santalo():
    ok, parts = True, []
    for name in ("quadratic", "quadratic_alpha2", "quartic", "smooth_abs", "asymmetric_quadratic"):
        f = catalog_entry(name)
        g = legendre_dual(f)
        rep = santalo_product(f, g, check=False)
        bridge = duality_bridge(f, g)
        if name.startswith("quadratic"):
            ok &= abs(rep.product - 2 * math.pi) <= 1e-6
        ok &= rep.product <= 2 * math.pi * (1 + 1e-6)
        ok &= min(bridge.slacks().values()) >= -1e-4
        parts.append(f"{name} {rep.product:.8f} (min bridge slack {min(bridge.slacks().values()):+.1e})")
    record(9, "Santalo", ok, "; ".join(parts))


def test_criterion_10_determinism(tmp_path):
    size = ["--paths", "5000", "--steps", "100", "--seed", "10"]
    same = []
    for command in ("gaussian-sweep", "coupling", "lemma-checks", "santalo", "follmer"):
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            main([command, "--out", str(out), *size])
            name = command.replace("-", "_")
            suffix = "json" if command == "follmer" else "csv"
            text = (out / f"{name}.{suffix}").read_bytes()
            if suffix == "json":
                doc = json.loads(text)
                doc["config"].pop("out")
                text = json.dumps(doc, sort_keys=True).encode()
            outputs.append(text)
        same.append((command, outputs[0] == outputs[1]))
    ok = all(flag for _, flag in same)
    record(10, "determinism", ok, ", ".join(f"{c} {'identical' if s else 'DIFFERS'}" for c, s in same))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
