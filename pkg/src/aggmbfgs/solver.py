"""
Line-search quasi-Newton loop for the three modified-BFGS variants.

* ``FULL``   keeps a dense Hessian approximation B and solves B d = -g.
* ``MLBFGS`` keeps the newest ``memory`` pairs and uses the two-loop recursion.
* ``AGG``    keeps linearly independent iterate displacements; a stored pair
  that becomes dependent on newer ones is removed by aggregation so that the
  limited-memory matrix keeps matching the full-memory one.
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .aggregation import aggregate_pair, drop_parallel_pair
from .errors import (AggregationFailure, DegenerateCurvature, LineSearchFailure,
                     NotDescent, NotSPD, NumericalDowndateFailure, RankDeficient,
                     ZeroDisplacement)
from .linalg_factors import DEP_TOL, DependenceKind, GramCholesky, gram_append
from .qn_core import (DisplacementStore, full_mbfgs_direction, hessian_update_dense,
                      modified_displacement, two_loop_direction)

logger = logging.getLogger(__name__)


class Variant(Enum):
    FULL = "mbfgs"
    MLBFGS = "mlbfgs"
    AGG = "agg"


class Status(Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


class Event(Enum):
    APPEND = "Append"
    PARALLEL_DROP = "ParallelDrop"
    AGGREGATE = "Aggregate"
    AGGREGATE_FALLBACK = "AggregateFallback"
    FIFO_EVICT = "FifoEvict"
    SKIP_DEGENERATE = "SkipDegenerate"


@dataclass
class SolverConfig:
    variant: Variant = Variant.AGG
    memory: int = 5
    grad_tol: float = 1e-6
    max_iters: int = 100_000
    ls_contraction: float = 0.5
    ls_sufficient: float = 1e-4
    ls_max_backtracks: int = 60
    gamma0: float = 1.0
    scale_initial: bool = False
    lifukushima_scaling: bool = False
    dep_tol: float = DEP_TOL
    seed: int = 0

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if not 0 < self.ls_contraction < 1:
            raise ValueError("ls_contraction must lie in (0, 1)")
        if not 0 < self.ls_sufficient < 1:
            raise ValueError("ls_sufficient must lie in (0, 1)")
        if self.grad_tol <= 0 or self.gamma0 <= 0 or self.dep_tol <= 0:
            raise ValueError("tolerances and gamma0 must be positive")
        if self.memory < 1 or self.max_iters < 0 or self.ls_max_backtracks < 1:
            raise ValueError("memory, max_iters and ls_max_backtracks out of range")


@dataclass
class IterationTrace:
    k: int
    f: float
    gnorm_inf: float
    alpha: float
    store_size: int
    event: Event
    x: np.ndarray = None


@dataclass
class SolveResult:
    x_final: np.ndarray
    f_final: float
    grad_inf_norm: float
    iters: int = 0
    func_evals: int = 0
    grad_evals: int = 0
    agg_count: int = 0
    parallel_drops: int = 0
    fifo_evictions: int = 0
    status: Status = Status.ITER_LIMIT
    trace: list = field(default_factory=list)


def armijo_backtracking(objective, x, d, g, f_x, cfg):
    """Backtrack from the unit step until the Armijo condition holds.

    Returns ``(alpha, f_new, evals)`` with alpha = tau^j for the smallest
    j >= 0 satisfying f(x + alpha d) <= f(x) + c alpha g'd.
    """
    slope = float(g @ d)
    if not slope < 0:
        raise NotDescent(f"g'd = {slope:.3e} is not negative")
    alpha = 1.0
    for evals in range(1, cfg.ls_max_backtracks + 1):
        f_new = objective(x + alpha * d)
        if np.isfinite(f_new) and f_new <= f_x + cfg.ls_sufficient * alpha * slope:
            return alpha, f_new, evals
        alpha *= cfg.ls_contraction
    raise LineSearchFailure(f"no sufficient decrease after {cfg.ls_max_backtracks} trials")


def empty_store(memory):
    return DisplacementStore((), memory, GramCholesky.empty())


def step_store_update(store, pair_new, gamma0=1.0, tol=DEP_TOL):
    """Add a pair to an aggregation store, resolving any linear dependence.

    The new pair is appended first; a dependent stored pair is then removed,
    by dropping it when it is parallel to the new displacement or by
    aggregating it into the newer pairs otherwise.  Returns
    ``(store, event)``.
    """
    factor, report = gram_append(store.gram, store.S, pair_new.s, tol=tol)
    pairs = store.pairs + (pair_new,)
    extended = store.replace_pairs(pairs)

    if report.kind is DependenceKind.INDEPENDENT:
        if len(store) < store.m_max:
            return store.replace_pairs(pairs, factor), Event.APPEND
        m = len(store)
        trimmed = GramCholesky(factor.L[:m, :m], tuple(range(m - 1, -1, -1)))
        return store.replace_pairs(pairs[1:], trimmed), Event.FIFO_EVICT

    if report.kind is DependenceKind.PARALLEL_NEWEST:
        return drop_parallel_pair(extended, report.sigma[0], factor), Event.PARALLEL_DROP

    j = report.dependent_index
    sigma = report.sigma[::-1]
    try:
        return aggregate_pair(extended, j, sigma, gamma0, gram=factor), Event.AGGREGATE
    except (AggregationFailure, NotSPD, np.linalg.LinAlgError) as exc:
        logger.debug("aggregation failed (%s); evicting dependent pair %d", exc, j)
        kept = pairs[:j] + pairs[j + 1:]
        return store.replace_pairs(kept, factor), Event.AGGREGATE_FALLBACK


def _fifo_append(store, pair):
    pairs = store.pairs + (pair,)
    if len(pairs) > store.m_max:
        return store.replace_pairs(pairs[1:]), Event.FIFO_EVICT
    return store.replace_pairs(pairs), Event.APPEND


def minimize(problem, cfg=None, trace=False):
    """Minimize ``problem`` (needs ``f``, ``grad``, ``x0``) with the configured variant."""
    cfg = SolverConfig() if cfg is None else cfg
    variant = cfg.variant
    counts = {"f": 0, "g": 0}

    def fun(z):
        counts["f"] += 1
        return float(problem.f(z))

    def jac(z):
        counts["g"] += 1
        return np.asarray(problem.grad(z), dtype=float)

    x = np.array(problem.x0, dtype=float)
    f = fun(x)
    g = jac(x)
    g0_inf = float(np.max(np.abs(g))) if g.size else 0.0
    threshold = cfg.grad_tol * max(1.0, g0_inf)
    n = x.size

    gamma = cfg.gamma0
    B = np.eye(n) / gamma if variant is Variant.FULL else None
    store = empty_store(cfg.memory) if variant is Variant.AGG else DisplacementStore((), cfg.memory)
    result = SolveResult(x, f, g0_inf)

    k = 0
    status = Status.ITER_LIMIT
    while True:
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= threshold:
            status = Status.CONVERGED
            break
        if k >= cfg.max_iters:
            break

        if variant is Variant.FULL:
            d = full_mbfgs_direction(B, g)
        else:
            d = two_loop_direction(store, g, gamma)
        if not float(g @ d) < 0:
            # lost descent through rounding: restart from the base matrix
            logger.debug("iteration %d: non-descent direction, resetting memory", k)
            if variant is Variant.FULL:
                B = np.eye(n) / gamma
            else:
                store = store.replace_pairs((), GramCholesky.empty() if variant is Variant.AGG else None)
            d = -gamma * g

        try:
            alpha, f_new, _ = armijo_backtracking(fun, x, d, g, f, cfg)
        except LineSearchFailure:
            status = Status.LINE_SEARCH_FAILURE
            break

        x_new = x + alpha * d
        g_new = jac(x_new)
        s = x_new - x
        event = Event.SKIP_DEGENERATE
        try:
            pair = modified_displacement(s, g_new - g, g, lifukushima_scaling=cfg.lifukushima_scaling)
        except (DegenerateCurvature, ZeroDisplacement):
            pair = None

        if pair is not None:
            if variant is Variant.FULL:
                B = hessian_update_dense(B, pair)
                event = Event.APPEND
            elif variant is Variant.MLBFGS:
                store, event = _fifo_append(store, pair)
            else:
                try:
                    store, event = step_store_update(store, pair, gamma, cfg.dep_tol)
                except (RankDeficient, NumericalDowndateFailure) as exc:
                    # the factor drifted too far to trust; restart memory from this pair
                    logger.debug("iteration %d: store reset (%s)", k, exc)
                    store, event = step_store_update(empty_store(cfg.memory), pair, gamma, cfg.dep_tol)
            if cfg.scale_initial:
                gamma = pair.curvature / float(pair.ybar @ pair.ybar)

        if event is Event.AGGREGATE:
            result.agg_count += 1
        elif event is Event.PARALLEL_DROP:
            result.parallel_drops += 1
        elif event in (Event.FIFO_EVICT, Event.AGGREGATE_FALLBACK):
            result.fifo_evictions += 1

        x, f, g = x_new, f_new, g_new
        k += 1
        if trace:
            result.trace.append(IterationTrace(k, f, float(np.max(np.abs(g))), alpha, len(store),
                                               event, x.copy()))

    result.x_final = x
    result.f_final = f
    result.grad_inf_norm = float(np.max(np.abs(g))) if g.size else 0.0
    result.iters = k
    result.func_evals = counts["f"]
    result.grad_evals = counts["g"]
    result.status = status
    return result


def solve_timed(problem, cfg):
    """``minimize`` plus wall-clock milliseconds."""
    t0 = time.perf_counter()
    res = minimize(problem, cfg)
    return res, 1000.0 * (time.perf_counter() - t0)
