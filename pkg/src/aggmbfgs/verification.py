"""
Seeded random oracle suites for the matrix identities the package relies on.

Each suite draws ``trials`` random instances, compares a fast or aggregated
computation against a dense reference, and reports the worst relative error.
"""
import time
from dataclasses import dataclass

import numpy as np

from . import aggregation
from .aggregation import AggregationInputs, aggregate, aggregate_pair, drop_parallel_pair, quadratic_residual
from .errors import AggMBFGSError
from .qn_core import (DisplacementStore, hessian_update_dense, mbfgs_compact,
                      mbfgs_iterative, modified_displacement, two_loop_direction)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    worst: float
    tol: float
    trials: int
    seconds: float
    detail: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return (f"[{flag}] {self.name:<22} worst={self.worst:.3e} tol={self.tol:.0e} "
                f"trials={self.trials} time={self.seconds:.2f}s{extra}")


def _rel(a, b):
    den = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / (den if den > 0 else 1.0))


def _spd(rng, n, spread=1.0):
    Q = rng.standard_normal((n, n))
    return Q @ Q.T / n + spread * np.eye(n)


def random_pair(rng, s):
    """A modified pair for displacement ``s`` with random y and g."""
    n = s.shape[0]
    while True:
        try:
            return modified_displacement(s, rng.standard_normal(n), rng.standard_normal(n))
        except AggMBFGSError:
            continue


def _random_pairs(rng, n, m):
    return [random_pair(rng, rng.standard_normal(n)) for _ in range(m)]


def _timed(name, tol, trials, body):
    t0 = time.perf_counter()
    worst, detail = body()
    return SuiteResult(name, bool(worst <= tol), float(worst), tol, trials,
                       time.perf_counter() - t0, detail)


def suite_compact(seed=0, trials=200, max_n=50, max_m=10, tol=1e-10):
    """Closed-form stacked update against the pair-by-pair recursion."""
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            n = int(rng.integers(2, max_n + 1))
            m = int(rng.integers(1, min(max_m, n) + 1))
            W0 = _spd(rng, n)
            st = DisplacementStore(tuple(_random_pairs(rng, n, m)), m)
            ref = mbfgs_iterative(W0, st.S, st.Ybar)
            worst = max(worst, _rel(mbfgs_compact(W0, st.S, st.Ybar), ref))
        return worst, ""
    return _timed("compact_vs_iterative", tol, trials, body)


def suite_two_loop(seed=1, trials=200, max_n=50, max_m=10, tol=1e-10):
    """Two-loop direction against -W g with W formed densely."""
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            n = int(rng.integers(2, max_n + 1))
            m = int(rng.integers(0, min(max_m, n) + 1))
            gamma = float(rng.uniform(0.1, 10.0))
            st = DisplacementStore(tuple(_random_pairs(rng, n, m)), max(m, 1))
            g = rng.standard_normal(n)
            W = gamma * np.eye(n) if m == 0 else mbfgs_iterative(gamma * np.eye(n), st.S, st.Ybar)
            worst = max(worst, _rel(two_loop_direction(st, g, gamma), -W @ g))
        return worst, ""
    return _timed("two_loop_vs_dense", tol, trials, body)


def suite_secant(seed=2, trials=200, max_n=50, tol=1e-10):
    """B+ s = ybar after one direct update of a random SPD B."""
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            n = int(rng.integers(2, max_n + 1))
            pair = random_pair(rng, rng.standard_normal(n))
            B1 = hessian_update_dense(_spd(rng, n), pair)
            worst = max(worst, _rel(B1 @ pair.s, pair.ybar))
        return worst, ""
    return _timed("secant", tol, trials, body)


PARALLEL_SIGMAS = (3.0, -3.0, 1.0, -1.0, 0.01)


def suite_parallel(seed=3, trials=200, max_n=12, max_m=6, tol=1e-12):
    """Dropping a pair whose displacement is parallel to the next one."""
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for t in range(trials):
            n = int(rng.integers(2, max_n + 1))
            m = int(rng.integers(2, max_m + 1))
            sigma = PARALLEL_SIGMAS[t % len(PARALLEL_SIGMAS)]
            W0 = _spd(rng, n)
            pairs = _random_pairs(rng, n, m)
            j = int(rng.integers(0, m - 1))
            pairs[j] = random_pair(rng, sigma * pairs[j + 1].s)
            st = DisplacementStore(tuple(pairs), m)
            sub = DisplacementStore(tuple(pairs[:j + 2]), m)
            dropped = drop_parallel_pair(sub, sigma)
            kept = DisplacementStore(dropped.pairs + tuple(pairs[j + 2:]), m)
            ref = mbfgs_iterative(W0, st.S, st.Ybar)
            worst = max(worst, _rel(mbfgs_iterative(W0, kept.S, kept.Ybar), ref))
        return worst, ""
    return _timed("parallel_drop", tol, trials, body)


def aggregation_instance(rng, max_n=12, max_m=6, interior=None):
    """Random store ``older + [dependent] + newer`` with the dependent pair's
    displacement a random combination of the newer ones.

    Returns ``(store, j, sigma)``, j the dependent index (0-based).
    """
    n = int(rng.integers(3, max_n + 1))
    m = int(rng.integers(1, min(max_m, n) + 1))
    room = n - m
    if interior is None:
        interior = bool(rng.integers(0, 2))
    k = int(rng.integers(1, min(3, room) + 1)) if interior and room >= 1 else 0
    older = _random_pairs(rng, n, k)
    newer = _random_pairs(rng, n, m)
    sigma = rng.standard_normal(m)
    dep = random_pair(rng, np.column_stack([p.s for p in newer]) @ sigma)
    store = DisplacementStore(tuple(older + [dep] + newer), k + m + 1)
    return store, k, sigma


def _random_base_inputs(rng, max_n, max_m):
    """Aggregation inputs with an arbitrary SPD base matrix W."""
    n = int(rng.integers(3, max_n + 1))
    m = int(rng.integers(2, min(max_m, n) + 1))
    W = _spd(rng, n, spread=float(rng.uniform(0.1, 2.0)))
    Winv = np.linalg.inv(W)
    newer = _random_pairs(rng, n, m)
    S = np.column_stack([p.s for p in newer])
    Ybar = np.column_stack([p.ybar for p in newer])
    sigma = rng.standard_normal(m)
    dep = random_pair(rng, S @ sigma)
    inputs = AggregationInputs(sigma=sigma, s0=dep.s, ybar0=dep.ybar, rho0=dep.rho, S=S,
                               Ybar=Ybar, rho=np.array([p.rho for p in newer]),
                               prefix_applier=lambda V: Winv @ V, base_applier=lambda v: W @ v)
    return W, inputs


def suite_aggregation(seed=4, trials=200, max_n=12, max_m=6, tol=1e-7,
                      curv_tol=1e-10, res_tol=1e-7):
    """Full-memory matrix against the matrix built from the aggregated store.

    Half of the instances use the identity base with optional older pairs
    (interior dependence), half an arbitrary SPD base matrix.  Also tracks the
    preserved curvatures s_i'yhat_i and the scaled residual of the quadratic
    matrix equation behind the transform.
    """
    state = {"curv": 0.0, "res": 0.0}

    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for t in range(trials):
            if t % 2 == 0:
                store, j, sigma = aggregation_instance(rng, max_n, max_m)
                n = store.S.shape[0]
                ref = mbfgs_iterative(np.eye(n), store.S, store.Ybar)
                out = aggregate_pair(store, j, sigma, check=False)
                got = mbfgs_iterative(np.eye(n), out.S, out.Ybar)
                old = np.einsum("ij,ij->j", store.S[:, j + 1:], store.Ybar[:, j + 1:])
                new = np.einsum("ij,ij->j", out.S[:, j:], out.Ybar[:, j:])
                if len(store) - j - 1 >= 2:
                    inputs = aggregation._prefix_inputs(store, j, sigma, 1.0)
                    ws = aggregation.build_workspace(inputs)
                    aggregation.compute_A(ws, inputs)
                    res, scale = quadratic_residual(ws)
                    state["res"] = max(state["res"], res / max(scale, 1e-300))
            else:
                W, inputs = _random_base_inputs(rng, max_n, max_m)
                full_S = np.column_stack([inputs.s0, inputs.S])
                full_Y = np.column_stack([inputs.ybar0, inputs.Ybar])
                ref = mbfgs_iterative(W, full_S, full_Y)
                Yhat, ws = aggregate(inputs)
                got = mbfgs_iterative(W, inputs.S, Yhat)
                old = np.einsum("ij,ij->j", inputs.S, inputs.Ybar)
                new = np.einsum("ij,ij->j", inputs.S, Yhat)
                res, scale = quadratic_residual(ws)
                state["res"] = max(state["res"], res / max(scale, 1e-300))
            worst = max(worst, _rel(got, ref))
            state["curv"] = max(state["curv"], float(np.max(np.abs(new - old) / np.abs(old))))
        return worst, f"curvature={state['curv']:.3e} residual={state['res']:.3e}"

    result = _timed("aggregation_equivalence", tol, trials, body)
    result.passed = (result.passed and state["curv"] <= curv_tol and state["res"] <= res_tol)
    result.detail += f" (tols {curv_tol:.0e}/{res_tol:.0e})"
    return result


def run_all(seed=0, trials=200, max_n=None, max_m=None):
    """Run every suite; ``max_n``/``max_m`` override the per-suite defaults."""
    def dims(n_default, m_default):
        return {"max_n": max_n or n_default, "max_m": max_m or m_default}

    return [
        suite_compact(seed, trials, **dims(50, 10)),
        suite_two_loop(seed + 1, trials, **dims(50, 10)),
        suite_secant(seed + 2, trials, max_n=max_n or 50),
        suite_parallel(seed + 3, trials, **dims(12, 6)),
        suite_aggregation(seed + 4, trials, **dims(12, 6)),
    ]
