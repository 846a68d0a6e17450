"""Command-line front end.

    talagrand-lab <command> [--config FILE] [--seed N] [--paths N] [--steps N] [--out DIR]

Commands write ``<command>.csv`` and/or ``<command>.json`` into the output
directory.  Exit codes: 0 all checks pass, 1 bad configuration, 2 an
inequality check failed, 3 a hypothesis was violated, 4 a numerical
accuracy check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig
from .coupling_lab import (
    SWEEP_COLUMNS,
    linear_coupling_sweep,
    min_linear_cost,
    sweep_rows,
    theorem_chain_certificate,
    time_reversal_coupling,
)
from .errors import HypothesisError, LabError, MarginalMismatchError
from .gaussian_analytics import (
    GaussianMeasure,
    GaussianMixture1D,
    bures_w2_squared,
    kl_to_gamma,
    talagrand_gap,
)
from .integrands import ReversedRepresentation, identity_integrand, linear_state_integrand
from .representation_lab import (
    entropy_functional,
    estimate_reversed_integrand,
    follmer_integrand_1d,
    gaussian_integrand,
    mean_preservation,
    pythagorean_gap,
    reverse_deterministic,
    tail_energy_profile,
)
from .santalo_check import CATALOG, catalog_entry, duality_bridge, legendre_dual, santalo_product
from .wiener_engine import ito_integral, reverse, sample_paths

OK, BAD_CONFIG, INEQUALITY, HYPOTHESIS, ACCURACY = 0, 1, 2, 3, 4
DEFAULT_MIXTURE = {"weights": [0.5, 0.5], "means": [-1.0, 1.0], "variances": [0.5, 0.5]}
DEFAULT_CATALOG = ["quadratic", "quadratic_alpha2", "quartic", "smooth_abs", "asymmetric_quadratic"]


class _Outcome:
    """Collects check results; the exit code is the first failure's code."""

    def __init__(self):
        self.failures = []

    def check(self, ok, code, message):
        if not ok:
            self.failures.append({"code": code, "message": message})
        return bool(ok)

    @property
    def exit_code(self):
        return self.failures[0]["code"] if self.failures else OK

    @property
    def verdict(self):
        return "pass" if not self.failures else "fail"


def _param(cfg, key, default):
    return cfg.params.get(key, default)


def _finish(cfg, name, doc, outcome, csv=None):
    out = Path(cfg.out)
    doc = {"command": name, "config": cfg.to_dict(), "verdict": outcome.verdict,
           "exit_code": outcome.exit_code, "failures": outcome.failures, **doc}
    if csv is not None:
        io.write_csv(out / f"{name}.csv", *csv)
    io.write_json(out / f"{name}.json", doc)
    for f in outcome.failures:
        print(f"FAIL [{f['code']}] {f['message']}", file=sys.stderr)
    print(f"{name}: {outcome.verdict} (exit {outcome.exit_code}) -> {out}")
    return outcome.exit_code


# ---------------------------------------------------------------------------
# commands


def cmd_gaussian_sweep(cfg: ExperimentConfig) -> int:
    alphas = [float(a) for a in _param(cfg, "alphas", [0.25, 0.5, 2.0, 4.0])]
    theta = float(_param(cfg, "theta", 0.0))
    pair = _param(cfg, "pair", "equality")
    tol = cfg.tolerance("deterministic")
    outcome = _Outcome()
    rows = []
    for a in alphas:
        if not a > 0:
            raise LabError(f"alpha must be positive, got {a}")
        mu = GaussianMeasure.scalar(a)
        if pair == "equality":
            nu = GaussianMeasure.scalar(1.0 / a, theta)
        elif pair == "same":
            nu = GaussianMeasure.scalar(a, theta)
        else:
            raise LabError(f"unknown pair {pair!r}; use 'equality' or 'same'")
        report = talagrand_gap(mu, nu)
        w2 = bures_w2_squared(mu, nu)
        d_mu, d_nu = 2.0 * kl_to_gamma(mu), 2.0 * kl_to_gamma(nu)
        gap = d_mu + d_nu - w2
        rows.append((a, theta, w2, d_mu, d_nu, gap))
        outcome.check(gap >= -tol, INEQUALITY, f"alpha={a}: gap {gap:.3e} < 0")
        outcome.check(abs(gap - report.gap) <= tol, ACCURACY,
                      f"alpha={a}: translation invariance of the gap broken")
        if pair == "equality":
            outcome.check(abs(gap) <= tol, ACCURACY, f"alpha={a}: equality pair gap {gap:.3e}")
    columns = ("alpha", "theta", "w2sq", "2d_mu", "2d_nu", "gap")
    doc = {"rows": [dict(zip(columns, r)) for r in rows]}
    return _finish(cfg, "gaussian_sweep", doc, outcome, csv=(columns, rows))


def cmd_coupling(cfg: ExperimentConfig) -> int:
    alphas = [float(a) for a in _param(cfg, "alphas", [1.0, 4.0])]
    sigmas = [float(s) for s in _param(cfg, "sigmas", [-1.0, -0.5, 0.0, 0.5, 1.0])]
    n_se = cfg.tolerance("mc_sigmas")
    tol = cfg.tolerance("deterministic")
    outcome = _Outcome()

    e2 = sample_paths(cfg.steps, 2, cfg.paths, cfg.seed)
    sweep = linear_coupling_sweep(alphas, sigmas, e2)
    for (a, s), r in sweep.items():
        cf = r.detail["cost_closed_form"]
        outcome.check(abs(r.cost - cf) <= n_se * r.std_error + tol, ACCURACY,
                      f"linear alpha={a} sigma={s}: MC {r.cost:.6g} vs closed form {cf:.6g}")

    e1 = sample_paths(cfg.steps, 1, cfg.paths, cfg.seed + 1)
    e_rev = reverse(e1)
    per_alpha = []
    for a in alphas:
        f = gaussian_integrand([[a]])
        mu, nu = GaussianMeasure.scalar(a), GaussianMeasure.scalar(1.0 / a)
        try:
            rev = time_reversal_coupling(reverse_deterministic(f), gaussian_integrand([[1.0 / a]]), e_rev, mu, nu)
        except MarginalMismatchError as exc:
            outcome.check(False, ACCURACY, f"reversal alpha={a}: {exc}")
            per_alpha.append({"alpha": a, "verdict": "marginal mismatch", "error": str(exc)})
            continue
        outcome.check(rev.sandwich_holds(n_se, tol), INEQUALITY,
                      f"reversal alpha={a}: cost {rev.cost:.6g} outside [W2^2, 2D+2D] by > {n_se} se")
        lin = min_linear_cost(a)
        outcome.check(lin.verdict != "violation", INEQUALITY, f"alpha={a}: linear cost below W2^2")
        entry = {"alpha": a, "linear_min": lin.to_dict(), "reversal": rev.to_dict()}
        if lin.sigma_star in sigmas:
            mc = sweep[(a, lin.sigma_star)]
            combined = math.hypot(mc.std_error, rev.std_error)
            margin = mc.cost - rev.cost
            entry["linear_mc_at_sigma_star"] = mc.to_dict()
            entry["dominance_margin"] = margin
            entry["dominance_se"] = combined
            if lin.verdict == "strict":
                dominated = margin > 10.0 * combined
                entry["verdict"] = ("reversal optimal, linear suboptimal" if dominated
                                    else "linear vs reversal not separated at this sample size")
            else:
                entry["verdict"] = "both optimal"
        else:
            entry["verdict"] = ("reversal optimal, linear suboptimal" if lin.verdict == "strict"
                                else "both optimal")
        per_alpha.append(entry)

    doc = {"alphas": per_alpha}
    mixture = _param(cfg, "mixture", None)
    if mixture is not None:
        mix = GaussianMixture1D.from_dict(mixture)
        nu = GaussianMeasure.scalar(float(_param(cfg, "nu_variance", 0.5)))
        rep = time_reversal_coupling(ReversedRepresentation(follmer_integrand_1d(mix)),
                                     gaussian_integrand(nu.covariance), e_rev, mix, nu)
        ok = rep.sandwich_holds(n_se, tol)
        outcome.check(ok, INEQUALITY, f"mixture coupling cost {rep.cost:.6g} outside the sandwich")
        doc["mixture"] = {"report": rep.to_dict(), "verdict": "sandwich holds" if ok else "sandwich fails"}
    return _finish(cfg, "coupling", doc, outcome, csv=(SWEEP_COLUMNS, sweep_rows(sweep)))


def cmd_lemma_checks(cfg: ExperimentConfig) -> int:
    alpha = float(_param(cfg, "alpha", 4.0))
    times = [float(t) for t in _param(cfg, "times", [0.25, 0.5, 0.75])]
    faulty = bool(_param(cfg, "faulty_reversal", False))
    for t in times:
        if not 0.0 <= t <= 1.0 or abs(t * cfg.steps - round(t * cfg.steps)) > 1e-9:
            raise LabError(f"time {t} is not a node of the {cfg.steps}-step grid")
    n_se = cfg.tolerance("mc_sigmas")
    tol = cfg.tolerance("deterministic")
    outcome = _Outcome()
    doc = {}

    f = gaussian_integrand([[alpha]])
    g = f if faulty else reverse_deterministic(f)
    det = tail_energy_profile(f, g, mode="quadrature", steps=cfg.steps)
    worst = float(np.max(np.abs(det.slack)))
    outcome.check(worst <= tol, INEQUALITY,
                  f"deterministic reversal pair: |slack| reaches {worst:.3e}" + (" (faulty reversal)" if faulty else ""))
    ident = tail_energy_profile(identity_integrand(), identity_integrand(), mode="quadrature", steps=cfg.steps)
    outcome.check(float(np.max(np.abs(ident.slack))) <= tol, INEQUALITY, "identity pair slack nonzero")
    doc["tail_deterministic"] = {"max_abs_slack": worst, "faulty_reversal": faulty}

    e = sample_paths(cfg.steps, 1, cfg.paths, cfg.seed)
    e_rev = reverse(e)
    x = ito_integral(f, e)
    fit = estimate_reversed_integrand(x, e_rev)
    prof = tail_energy_profile(f, fit, mode="monte_carlo", ensemble=e)
    outcome.check(prof.holds(n_se, tol), INEQUALITY, "regression tail-energy slack below -3 se")
    mp = mean_preservation(f, e, fit)
    z = np.abs(mp["mean_f"] - mp["mean_g"]) / np.maximum(mp["se"], 1e-300)
    outcome.check(bool(np.all(np.abs(mp["mean_f"] - mp["mean_g"]) <= n_se * mp["se"] + tol)), ACCURACY,
                  f"mean preservation off by {float(np.max(z)):.2f} se")
    doc["tail_regression"] = {"min_slack": float(np.min(prof.slack)), "regression": fit.diagnostics,
                              "mean_preservation_max_z": float(np.max(z))}

    gaps = []
    sq = linear_state_integrand(2.0)
    x_sq = ito_integral(sq, e)
    fit_sq = estimate_reversed_integrand(x_sq, e_rev)
    for t in times:
        pg = pythagorean_gap(x_sq, sq, e, t, fit=fit_sq)
        oracle = 4.0 * t * (1.0 - t)
        outcome.check(abs(pg.value - oracle) <= n_se * pg.std_error + tol, ACCURACY,
                      f"B_1^2 - 1 gap at t={t}: {pg.value:.5g} vs {oracle:.5g}")
        outcome.check(pg.holds(n_se, tol), INEQUALITY, f"B_1^2 - 1 gap at t={t} negative")
        gaps.append({"x": "B1^2-1", "oracle": oracle, **pg.to_dict()})
        pz = pythagorean_gap(x, f, e, t, fit=fit)
        outcome.check(abs(pz.value) <= n_se * pz.std_error + 1e-9, ACCURACY,
                      f"Gaussian gap at t={t}: {pz.value:.3e} not 0")
        gaps.append({"x": "gaussian", "oracle": 0.0, **pz.to_dict()})
    doc["pythagorean"] = gaps

    h = gaussian_integrand([[1.0 / alpha]])
    chain_q = theorem_chain_certificate(f, h)
    chain_mc = theorem_chain_certificate(f, h, e)
    outcome.check(chain_q.verdict == "pass", INEQUALITY, "quadrature chain certificate fails")
    outcome.check(chain_mc.verdict == "pass", INEQUALITY, "Monte Carlo chain certificate fails")
    doc["chain"] = {"quadrature": chain_q.to_dict(), "monte_carlo": chain_mc.to_dict()}

    columns = ("t", "lhs", "rhs", "slack", "std_error")
    rows = list(zip(prof.t, prof.lhs, prof.rhs, prof.slack, prof.std_error))
    return _finish(cfg, "lemma_checks", doc, outcome, csv=(columns, rows))


def cmd_santalo(cfg: ExperimentConfig) -> int:
    names = list(_param(cfg, "catalog", DEFAULT_CATALOG))
    nodes = int(_param(cfg, "nodes", 16385))
    outcome = _Outcome()
    rows = []
    entries = []
    for name in names:
        if name not in CATALOG:
            raise LabError(f"unknown catalog entry {name!r}; known: {sorted(CATALOG)}")
        f = catalog_entry(name, num=nodes)
        g = legendre_dual(f)
        try:
            rep = santalo_product(f, g, check=False)
        except HypothesisError as exc:
            outcome.check(False, HYPOTHESIS, f"{name}: {exc}")
            rows.append((name, "hypothesis_violation", None, None, None, None, None, None, None, None))
            entries.append({"entry": name, "status": "hypothesis_violation", "reason": str(exc)})
            continue
        bridge = duality_bridge(f, g)
        status = "equality" if rep.equality else ("strict" if rep.holds else "violation")
        outcome.check(rep.holds, INEQUALITY, f"{name}: product {rep.product:.12g} exceeds 2 pi")
        outcome.check(bridge.holds(1e-4), INEQUALITY, f"{name}: bridge slack below -1e-4")
        rows.append((name, status, rep.z_f, rep.z_g, rep.product, rep.margin, rep.equality,
                     bridge.transport_slack, bridge.cross_slack, bridge.santalo_slack))
        entries.append({"entry": name, "status": status, "santalo": rep.to_dict(), "bridge": bridge.to_dict()})
    columns = ("entry", "status", "z_f", "z_g", "product", "margin", "equality",
               "transport_slack", "cross_slack", "santalo_slack")
    return _finish(cfg, "santalo", {"entries": entries}, outcome, csv=(columns, rows))


def cmd_follmer(cfg: ExperimentConfig) -> int:
    mix = GaussianMixture1D.from_dict(_param(cfg, "mixture", DEFAULT_MIXTURE))
    rel = cfg.tolerance("relative")
    n_se = cfg.tolerance("mc_sigmas")
    tol = cfg.tolerance("deterministic")
    outcome = _Outcome()
    if mix.weights.size == 1 and mix.is_centered():
        # a centered Gaussian: the optimal integrand is deterministic
        f = gaussian_integrand([[mix.variances[0]]])
        cert = entropy_functional(f, mix, mode="quadrature")
        outcome.check(abs(cert.gap) <= 1e-8, ACCURACY, f"Gaussian J gap {cert.gap:.3e}")
    else:
        f = follmer_integrand_1d(mix)
        e = sample_paths(cfg.steps, 1, cfg.paths, cfg.seed)
        cert = entropy_functional(f, mix, mode="monte_carlo", ensemble=e)
        outcome.check(cert.gap >= -(n_se * cert.std_error + tol), INEQUALITY,
                      f"J = {cert.j_value:.6g} below KL = {cert.oracle_kl:.6g}")
        outcome.check(abs(cert.gap) <= rel * cert.oracle_kl, ACCURACY,
                      f"J = {cert.j_value:.6g} not within {rel:.0%} of KL = {cert.oracle_kl:.6g}")
    relative_gap = cert.gap / cert.oracle_kl if cert.oracle_kl > 0 else 0.0
    doc = {"mixture": mix.to_dict(), "certificate": cert.to_dict(), "relative_gap": relative_gap}
    return _finish(cfg, "follmer", doc, outcome)


REPORT_SOURCES = ("gaussian_sweep", "coupling", "lemma_checks", "santalo", "follmer")


def cmd_report(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    summary = {}
    code = OK
    for name in REPORT_SOURCES:
        path = out / f"{name}.json"
        if not path.exists():
            continue
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise LabError(f"{path}: not valid JSON ({exc})") from None
        summary[name] = {"verdict": doc.get("verdict"), "exit_code": doc.get("exit_code"),
                         "failures": doc.get("failures", [])}
        if code == OK and doc.get("exit_code"):
            code = int(doc["exit_code"])
    if not summary:
        raise LabError(f"no command outputs found in {out}")
    io.write_json(out / "report.json", {"command": "report", "summary": summary, "exit_code": code})
    for name, s in summary.items():
        print(f"{name:15s} {s['verdict']} (exit {s['exit_code']})")
    return code


COMMANDS = {
    "gaussian-sweep": cmd_gaussian_sweep,
    "coupling": cmd_coupling,
    "lemma-checks": cmd_lemma_checks,
    "santalo": cmd_santalo,
    "follmer": cmd_follmer,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise LabError(message)


def build_parser():
    parser = _Parser(prog="talagrand-lab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--out", help="output directory")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, paths=args.paths, steps=args.steps, out=args.out)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        # malformed parameter values surface here
        print(f"error: {exc}", file=sys.stderr)
        return BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
