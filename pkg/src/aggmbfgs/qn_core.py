"""
Modified-BFGS building blocks.

A curvature pair stores the iterate displacement s together with the
modified gradient displacement ybar = y + r ||g|| s, where
r = 1 + max(0, -y's / s's) (Li and Fukushima).  The inverse update

    W <- E^T W E + rho s s^T,   E = I - rho ybar s^T,   rho = 1 / s'ybar

is plain BFGS with ybar in place of y, so every identity of the standard
update carries over.
"""
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DegenerateCurvature, SingularBbar, ZeroDisplacement
from .linalg_factors import GramCholesky, spd_solve

CURV_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CurvaturePair:
    """One (s, y, ybar) record.

    For a freshly built pair ``ybar == y + r * gnorm * s``.  Aggregation
    replaces ``ybar`` (and flags ``aggregated``); s, y, r and gnorm then keep
    describing the step the pair came from.
    """
    s: np.ndarray
    y: np.ndarray
    ybar: np.ndarray
    r: float
    gnorm: float
    rho: float
    aggregated: bool = False

    @property
    def curvature(self):
        return float(self.s @ self.ybar)

    def with_ybar(self, ybar):
        ybar = np.asarray(ybar, dtype=float)
        sy = float(self.s @ ybar)
        if not sy > 0:
            raise DegenerateCurvature("replacement ybar has non-positive curvature")
        return replace(self, ybar=ybar, rho=1.0 / sy, aggregated=True)


def modified_displacement(s, y, g, *, lifukushima_scaling=False, curv_tol=CURV_TOL):
    """Build the curvature pair for step s, gradient change y, origin gradient g.

    With ``lifukushima_scaling`` the max-term of r is divided by ||g||, which
    guarantees s'ybar >= ||g|| s's > 0.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    ss = float(s @ s)
    if not ss > 0 or not np.isfinite(ss):
        raise ZeroDisplacement("iterate displacement is zero")
    gnorm = float(np.linalg.norm(g))
    excess = max(0.0, -float(y @ s) / ss)
    if lifukushima_scaling and gnorm > 0:
        excess /= gnorm
    r = 1.0 + excess
    ybar = y + (r * gnorm) * s
    sy = float(s @ ybar)
    if not sy > curv_tol * np.sqrt(ss) * np.linalg.norm(ybar):
        raise DegenerateCurvature(f"s'ybar = {sy:.3e} is not safely positive")
    return CurvaturePair(s, y, ybar, r, gnorm, 1.0 / sy)


@dataclass(frozen=True, eq=False)
class DisplacementStore:
    """Oldest-first window of curvature pairs.

    ``gram`` factors the newest-first Gram matrix of the s-columns; it is None
    for plain limited-memory stores that never test for dependence.
    """
    pairs: tuple = ()
    m_max: int = 5
    gram: Optional[GramCholesky] = None

    def __len__(self):
        return len(self.pairs)

    @cached_property
    def S(self):
        return _columns([p.s for p in self.pairs])

    @cached_property
    def Ybar(self):
        return _columns([p.ybar for p in self.pairs])

    @cached_property
    def rho(self):
        return np.array([p.rho for p in self.pairs])

    def replace_pairs(self, pairs, gram=None):
        return DisplacementStore(tuple(pairs), self.m_max, gram)


def _columns(vectors):
    if not vectors:
        return np.zeros((0, 0))
    return np.column_stack(vectors)


@dataclass(frozen=True, eq=False)
class CompactFactors:
    Bbar: np.ndarray
    Cbar: np.ndarray
    StY: np.ndarray


def compact_factors(S, Ybar):
    StY = S.T @ Ybar
    Bbar = np.triu(StY)
    Cbar = np.diag(np.diag(StY))
    return CompactFactors(Bbar, Cbar, StY)


def _symmetrize(W):
    return 0.5 * (W + W.T)


def mbfgs_iterative(W0, S, Ybar):
    """Apply the modified-BFGS inverse updates for columns 1..m in order."""
    W = np.array(W0, dtype=float)
    n = W.shape[0]
    for j in range(S.shape[1] if S.size else 0):
        s, yb = S[:, j], Ybar[:, j]
        rho = 1.0 / (s @ yb)
        E = np.eye(n) - rho * np.outer(yb, s)
        W = E.T @ W @ E + rho * np.outer(s, s)
    return _symmetrize(W)


def mbfgs_compact(W0, S, Ybar):
    """Closed-form stacked update W0 + [S, W0 Ybar] K [S, W0 Ybar]^T."""
    W0 = np.asarray(W0, dtype=float)
    if S.size == 0:
        return W0.copy()
    cf = compact_factors(S, Ybar)
    diag = np.diag(cf.Bbar)
    if np.any(diag <= 0):
        raise SingularBbar("s_i'ybar_i must be positive for every stored pair")
    m = S.shape[1]
    WY = W0 @ Ybar
    Binv = scipy.linalg.solve_triangular(cf.Bbar, np.eye(m))
    K11 = Binv.T @ (cf.Cbar + Ybar.T @ WY) @ Binv
    K = np.block([[K11, -Binv.T], [-Binv, np.zeros((m, m))]])
    U = np.hstack([S, WY])
    return _symmetrize(W0 + U @ K @ U.T)


def two_loop_direction(store, g, gamma0=1.0):
    """d = -W g with W the modified-BFGS matrix over ``store`` from gamma0*I."""
    q = np.array(g, dtype=float)
    pairs = store.pairs
    alpha = np.empty(len(pairs))
    for i in range(len(pairs) - 1, -1, -1):
        p = pairs[i]
        alpha[i] = p.rho * (p.s @ q)
        q -= alpha[i] * p.ybar
    q *= gamma0
    for i, p in enumerate(pairs):
        beta = p.rho * (p.ybar @ q)
        q += (alpha[i] - beta) * p.s
    return -q


def hessian_update_dense(B, pair):
    """Direct update B' = B - B s s'B / s'Bs + ybar ybar' / ybar's."""
    B = np.asarray(B, dtype=float)
    s, yb = pair.s, pair.ybar
    Bs = B @ s
    B1 = B - np.outer(Bs, Bs) / (s @ Bs) + np.outer(yb, yb) / (yb @ s)
    return _symmetrize(B1)


def apply_prefix_hessian(store, j, V, gamma0=1.0):
    """B_prefix @ V, B_prefix the direct Hessian over the ``j`` oldest pairs.

    The base is B0 = I / gamma0.  Uses the compact direct form

        B = B0 - [B0 S, Y] [[S'B0 S, L], [L', -D]]^{-1} [S'B0; Y']

    with L the strictly lower part of S'Y and D its diagonal; cost O(j n k).
    """
    V = np.asarray(V, dtype=float)
    b0 = 1.0 / gamma0
    if j == 0:
        return b0 * V
    pairs = store.pairs[:j]
    S = _columns([p.s for p in pairs])
    Y = _columns([p.ybar for p in pairs])
    StY = S.T @ Y
    Lo = np.tril(StY, -1)
    D = np.diag(np.diag(StY))
    mid = np.block([[b0 * (S.T @ S), Lo], [Lo.T, -D]])
    rhs = np.vstack([b0 * (S.T @ V), Y.T @ V]) if V.ndim == 2 else np.concatenate([b0 * (S.T @ V), Y.T @ V])
    coef = np.linalg.solve(mid, rhs)
    return b0 * V - np.hstack([b0 * S, Y]) @ coef


def dense_prefix_hessian(store, j, n, gamma0=1.0):
    """Dense B_prefix, folding :func:`hessian_update_dense` over ``j`` pairs."""
    B = np.eye(n) / gamma0
    for p in store.pairs[:j]:
        B = hessian_update_dense(B, p)
    return B


def full_mbfgs_direction(B, g):
    """Solve B d = -g for the full-memory variant."""
    return -spd_solve(B, g)
