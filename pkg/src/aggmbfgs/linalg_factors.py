"""
Dense kernels used by the aggregation machinery.

The Gram matrix of the stored iterate displacements is kept as a Cholesky
factor with columns ordered NEWEST-FIRST.  Appending a new displacement is a
rank-one downdate of that factor; the first index at which the downdate
breaks down tells which stored displacement became linearly dependent on the
newer ones.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (NotPositiveDiagonal, NotSPD, NumericalDowndateFailure,
                     RankDeficient, ZeroDisplacement)

#: A downdated diagonal d of column k is treated as zero when
#: d <= DEP_TOL * ||s_k||, i.e. when the sine of the angle between s_k and the
#: span of the newer displacements is below DEP_TOL.
DEP_TOL = 1e-6
#: rebuild_factor rejects pivots below this fraction of the column norm
#: (exact dependence leaves pivots of order sqrt(eps) after rounding)
REBUILD_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class GramCholesky:
    """Lower-triangular L with L L^T = S_nf^T S_nf, S_nf newest-first.

    ``order_map[k]`` is the store index (oldest-first, 0-based) of factor
    column k.
    """
    L: np.ndarray
    order_map: tuple = ()

    @property
    def size(self):
        return self.L.shape[0]

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 0)), ())

    def gram(self):
        return self.L @ self.L.T


class DependenceKind(Enum):
    INDEPENDENT = "independent"
    PARALLEL_NEWEST = "parallel_newest"
    DEPENDENT_AT = "dependent_at"


@dataclass(frozen=True, eq=False)
class DependenceReport:
    """Outcome of appending a displacement to the Gram factor.

    ``breakdown_index`` i counts the newer vectors spanning the dependent one
    (the new displacement included).  ``sigma`` holds their coefficients in
    newest-first order: ``[s_new, s_{m-1}, ..., s_{m-i+1}] @ sigma`` equals
    the dependent stored column, whose store index is ``dependent_index``.
    """
    kind: DependenceKind
    breakdown_index: int = 0
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dependent_index: Optional[int] = None

    @property
    def independent(self):
        return self.kind is DependenceKind.INDEPENDENT


@dataclass(frozen=True, eq=False)
class DowndateOutcome:
    """Result of :func:`rank_one_downdate`.

    On success ``factor`` holds M with M M^T = L L^T - v v^T.  On breakdown
    ``factor`` is None, ``index`` is the 1-based column at which the downdate
    broke down, and ``Xi``/``xi`` describe the leading block of the augmented
    factor ``[[mu, 0], [v, M]]``.
    """
    factor: Optional[np.ndarray] = None
    index: Optional[int] = None
    Xi: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None

    @property
    def breakdown(self):
        return self.factor is None


def _check_lower(L):
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("factor must be square")
    if L.size and not np.all(np.diag(L) > 0):
        raise NotPositiveDiagonal("Cholesky factor has a non-positive diagonal entry")
    return L


def rank_one_downdate(L, v, *, mu=1.0, tol=DEP_TOL):
    """Hyperbolic-rotation downdate of a Cholesky factor.

    Columns are processed in order; the first column k whose downdated
    diagonal satisfies ``d <= tol * ||L[k, :]||`` ends the sweep with a
    breakdown.  ``mu`` is the leading diagonal of the augmented factor
    (the norm of the appended vector) and only enters ``Xi``/``xi``.
    """
    L = _check_lower(L)
    v = np.asarray(v, dtype=float)
    m = L.shape[0]
    if v.shape != (m,):
        raise ValueError("downdate vector has the wrong length")
    if not np.all(np.isfinite(v)):
        raise ValueError("downdate vector must be finite")

    M = np.tril(L).copy()
    w = v.copy()
    for k in range(m):
        lkk = M[k, k]
        scale = np.linalg.norm(L[k, :k + 1])
        d2 = (lkk - w[k]) * (lkk + w[k])
        if d2 <= (tol * scale) ** 2:
            if d2 < -(tol * scale) ** 2:
                raise NumericalDowndateFailure(
                    f"downdate is indefinite at column {k + 1} (d^2 = {d2:.3e})")
            Xi = np.zeros((k + 1, k + 1))
            Xi[0, 0] = mu
            Xi[1:, 0] = v[:k]
            Xi[1:, 1:] = M[:k, :k]
            xi = np.concatenate(([v[k]], M[k, :k]))
            return DowndateOutcome(index=k + 1, Xi=Xi, xi=xi)
        r = np.sqrt(d2)
        c = r / lkk
        s = w[k] / lkk
        M[k, k] = r
        M[k + 1:, k] = (M[k + 1:, k] - s * w[k + 1:]) / c
        w[k + 1:] = c * w[k + 1:] - s * M[k + 1:, k]
    return DowndateOutcome(factor=M)


def rebuild_factor(columns, order_map=None):
    """Cholesky factor of the Gram matrix of ``columns`` (given newest-first)."""
    columns = np.asarray(columns, dtype=float)
    m = columns.shape[1]
    if order_map is None:
        order_map = tuple(range(m - 1, -1, -1))
    if m == 0:
        return GramCholesky(np.zeros((0, 0)), tuple(order_map))
    G = columns.T @ columns
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("Gram matrix is not positive definite") from exc
    if not np.all(np.diag(L) > REBUILD_TOL * np.sqrt(np.diag(G))):
        raise RankDeficient("Gram factor has a negligible pivot")
    return GramCholesky(L, tuple(order_map))


def gram_append(chol, store_columns, s_new, *, tol=DEP_TOL):
    """Append ``s_new`` to the factor of the stored displacements.

    ``store_columns`` is the n x m matrix of stored displacements in STORE
    order (oldest-first); ``chol`` must factor their newest-first Gram matrix.

    Returns ``(factor, report)``.  When the new vector keeps the set
    independent, ``factor`` covers ``[s_new, stored...]`` (store order
    ``0..m`` with ``s_new`` at index m).  On breakdown ``factor`` is rebuilt
    for the set with the dependent column removed, and ``order_map`` refers
    to the store that results from appending ``s_new`` and deleting it.
    """
    s_new = np.asarray(s_new, dtype=float)
    store_columns = np.asarray(store_columns, dtype=float).reshape(s_new.shape[0], -1)
    m = store_columns.shape[1]
    mu = np.linalg.norm(s_new)
    if not np.isfinite(mu) or mu <= np.finfo(float).tiny ** 0.5:
        raise ZeroDisplacement("new displacement is numerically zero")
    if chol.size != m:
        raise ValueError("factor and store sizes disagree")

    newest_first = store_columns[:, ::-1]
    zeta = newest_first.T @ s_new / mu
    out = rank_one_downdate(chol.L, zeta, mu=mu, tol=tol)

    if not out.breakdown:
        L = np.zeros((m + 1, m + 1))
        L[0, 0] = mu
        L[1:, 0] = zeta
        L[1:, 1:] = out.factor
        return GramCholesky(L, tuple(range(m, -1, -1))), DependenceReport(DependenceKind.INDEPENDENT)

    i = out.index
    sigma = scipy.linalg.solve_triangular(out.Xi, out.xi, trans="T", lower=True)
    # store index of the i-th newest stored column
    dependent = m - i
    kind = DependenceKind.PARALLEL_NEWEST if i == 1 else DependenceKind.DEPENDENT_AT
    report = DependenceReport(kind, i, sigma, dependent)

    kept = [s_new] + [newest_first[:, k] for k in range(m) if k != i - 1]
    # after the deletion the store holds m columns; newest-first order maps to
    # store indices m-1 ... 0
    factor = rebuild_factor(np.column_stack(kept), tuple(range(m - 1, -1, -1)))
    return factor, report


def spd_solve(M, rhs):
    """Solve M X = rhs for symmetric positive definite M via Cholesky."""
    M = np.asarray(M, dtype=float)
    try:
        c = scipy.linalg.cho_factor(M, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(c, rhs)


def null_space_vector(A, leading_zeros=0):
    """Unit vector v with A v = 0 (via complete QR of A^T).

    With ``leading_zeros = l`` the first l entries of v are forced to zero,
    i.e. v spans the null space of ``A[:, l:]`` lifted back into R^m.  A null
    vector exists whenever the restricted matrix has fewer rows than columns.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    p, m = A.shape
    sub = A[:, leading_zeros:]
    k = m - leading_zeros
    if k <= 0:
        raise ValueError("no free entries left")
    if p >= k:
        raise ValueError("restricted matrix must have more columns than rows")
    v = np.zeros(m)
    if p == 0:
        v[-1] = 1.0
        return v
    Q, _ = np.linalg.qr(sub.T, mode="complete")
    v[leading_zeros:] = Q[:, -1]
    return v
