"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Every test emits a single PASS/FAIL line (collected in the terminal summary).
"""
import time
import zlib

import numpy as np
import pytest

from aggmbfgs import verification
from aggmbfgs.problems import Problem, catalog, fd_gradient_check, make_problem
from aggmbfgs.solver import SolverConfig, Status, Variant, minimize

TRIALS = 200


def _suite(report, result, time_limit):
    ok = result.passed and result.seconds < time_limit
    detail = (f"worst={result.worst:.2e} (tol {result.tol:.0e}), {result.trials} trials, "
              f"{result.seconds:.2f}s (limit {time_limit:.0f}s)")
    if result.detail:
        detail += f", {result.detail.strip()}"
    report(result.name, ok, detail)
    assert ok, detail


def test_compact_equals_iterative(report):
    _suite(report, verification.suite_compact(trials=TRIALS, max_n=50, max_m=10, tol=1e-10), 10)


def test_parallel_drop_equality(report):
    _suite(report, verification.suite_parallel(trials=TRIALS, tol=1e-12), 5)


def test_aggregation_equivalence(report):
    res = verification.suite_aggregation(trials=TRIALS, max_n=12, max_m=6, tol=1e-7,
                                         curv_tol=1e-10, res_tol=1e-7)
    _suite(report, res, 30)


def test_two_loop_equals_dense(report):
    _suite(report, verification.suite_two_loop(trials=TRIALS, tol=1e-10), 5)


def test_secant_property(report):
    _suite(report, verification.suite_secant(trials=TRIALS, tol=1e-10), 60)


def test_gradient_validation(report):
    t0 = time.perf_counter()
    worst = {}
    for name in catalog():
        p = make_problem(name)
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        errs = [fd_gradient_check(p, p.x0)]
        errs += [fd_gradient_check(p, p.x0 + 0.5 * rng.standard_normal(p.dim)) for _ in range(20)]
        worst[name] = max(errs)
    bad = {k: v for k, v in worst.items() if not v <= 1e-5}
    top = max(worst, key=worst.get)
    detail = (f"{len(worst)} problems x 21 points, worst {worst[top]:.2e} on {top} (tol 1e-05), "
              f"{time.perf_counter() - t0:.1f}s")
    if bad:
        detail += f"; failing: {sorted(bad)}"
    report("gradient_validation", not bad, detail)
    assert not bad, detail


SUITE = [("ARWHEAD", 100), ("LIARWHD", 100), ("POWELLSG", 100), ("BDQRTIC", 100),
         ("BROYDN3DLS", 100), ("DIXMAANA", 300), ("DIXMAANE", 300), ("DIXMAANI", 300),
         ("CHNROSNB", 50), ("NONDQUAR", 100), ("TQUARTIC", 100)]


@pytest.fixture(scope="module")
def suite_runs():
    t0 = time.perf_counter()
    runs = {}
    for name, n in SUITE:
        p = make_problem(name, n)
        for v in Variant:
            runs[name, v] = minimize(p, SolverConfig(variant=v, max_iters=100_000))
    return runs, time.perf_counter() - t0


def test_convergence_suite(report, suite_runs):
    runs, seconds = suite_runs
    not_converged = sorted(f"{k[0]}/{k[1].value}:{r.status.value}" for k, r in runs.items()
                           if r.status is not Status.CONVERGED)
    gaps = {}
    for name, _ in SUITE:
        full, agg = runs[name, Variant.FULL], runs[name, Variant.AGG]
        if full.status is Status.CONVERGED and agg.status is Status.CONVERGED:
            gaps[name] = abs(full.f_final - agg.f_final)
    disagree = {k: v for k, v in gaps.items() if not v <= 1e-6}
    ok = not not_converged and not disagree and seconds < 120
    detail = (f"{len(runs) - len(not_converged)}/{len(runs)} runs converged, {seconds:.1f}s (limit 120s); "
              f"Full-vs-Agg |df| <= 1e-6 on {len(gaps) - len(disagree)}/{len(gaps)}")
    if not_converged:
        detail += f"; not converged: {not_converged}"
    if disagree:
        detail += "; disagree: " + ", ".join(
            f"{k} (full {runs[k, Variant.FULL].f_final:.10g} vs agg {runs[k, Variant.AGG].f_final:.10g})"
            for k in sorted(disagree))
    report("convergence_suite", ok, detail)
    assert ok, detail


def test_short_horizon_trajectory(report):
    rng = np.random.default_rng(2024)
    n = 8
    Q = rng.standard_normal((n, n))
    H = Q @ Q.T + 0.5 * np.eye(n)
    c = rng.standard_normal(n)
    p = Problem("QUAD8", n, np.ones(n), lambda x: 0.5 * x @ H @ x - c @ x, lambda x: H @ x - c)
    agg = minimize(p, SolverConfig(variant=Variant.AGG, memory=10), trace=True)
    full = minimize(p, SolverConfig(variant=Variant.FULL, memory=10), trace=True)
    k = min(8, len(agg.trace), len(full.trace))
    errs = [np.linalg.norm(a.x - f.x) / max(1.0, np.linalg.norm(f.x))
            for a, f in zip(agg.trace[:k], full.trace[:k])]
    worst = max(errs) if errs else np.inf
    ok = k == 8 and worst <= 1e-6
    report("short_horizon_trajectory", ok, f"{k} iterates compared, worst rel diff {worst:.2e} (tol 1e-06)")
    assert ok


@pytest.mark.slow
def test_arwhead_large_shape(report):
    p = make_problem("ARWHEAD", 5000)
    t0 = time.perf_counter()
    agg = minimize(p, SolverConfig(variant=Variant.AGG))
    ml = minimize(p, SolverConfig(variant=Variant.MLBFGS))
    ok = (agg.status is Status.CONVERGED and ml.status is Status.CONVERGED and agg.agg_count > 0)
    detail = (f"n=5000 agg {agg.iters}/{agg.func_evals}/{agg.agg_count} ({agg.status.value}), "
              f"mlbfgs {ml.iters}/{ml.func_evals} ({ml.status.value}), {time.perf_counter() - t0:.1f}s")
    report("arwhead_5000_shape", ok, detail)
    assert ok, detail
