"""
Displacement aggregation for the modified-BFGS update.

Given pairs (s_0, ybar_0), (s_1, ybar_1), ..., (s_m, ybar_m) with
s_0 = S sigma in the span of the newer displacements S = [s_1 .. s_m], find

    Yhat = W^{-1} S [A 0] + ybar_0 [b; 0]^T + Ybar

so that dropping pair 0 and using Yhat in place of Ybar produces the same
inverse-Hessian approximation from base W.  A is m x (m-1) and b has m-1
entries.  The last column of Yhat is always ybar_m.

Writing v_l = M a_l + Psi_l (M = S^T W^{-1} S), the conditions on A reduce to
vectors v_1 .. v_{m-1} with v_l supported on rows l+1..m whose Gram matrix in
the M^{-1} inner product equals Z^T Z = varpi varpi^T + Psi^T M^{-1} Psi.
They are found backwards, one column at a time: the affine conditions fix
v_l up to a null-space direction, and a scalar quadratic fixes the step
along it.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import AggregationFailure, DegenerateCurvature, NegativeDiscriminant, NotSPD
from .linalg_factors import null_space_vector, rebuild_factor
from .qn_core import CurvaturePair, DisplacementStore, apply_prefix_hessian, two_loop_direction

logger = logging.getLogger(__name__)

DISC_TOL = 1e-8
RANK_TOL = 1e-10
# post-checks applied by aggregate_pair before accepting a result
RESIDUAL_TOL = 1e-7
CURVATURE_TOL = 1e-8


@dataclass(eq=False)
class AggregationInputs:
    """Everything needed to aggregate away one dependent pair.

    ``prefix_applier(V)`` returns W^{-1} V for the base matrix W.
    ``base_applier(v)``, when given, returns W v (only used for chi0).
    """
    sigma: np.ndarray
    s0: np.ndarray
    ybar0: np.ndarray
    rho0: float
    S: np.ndarray
    Ybar: np.ndarray
    rho: np.ndarray
    prefix_applier: Callable
    base_applier: Callable = None

    @property
    def m(self):
        return self.S.shape[1]


@dataclass(eq=False)
class AggregationWorkspace:
    M: np.ndarray
    M_chol: tuple
    WinvS: np.ndarray
    chi0: float
    b: np.ndarray
    Ubar: np.ndarray
    Psi: np.ndarray
    varpi: np.ndarray
    Z: np.ndarray
    A: np.ndarray = None
    Theta: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    V: np.ndarray = None

    @property
    def G(self):
        return self.Z.T @ self.Z

    def solve_M(self, rhs):
        return scipy.linalg.cho_solve(self.M_chol, rhs)


def compute_b(S, Ybar, Ubar, sigma, rho0):
    """b = -rho0 (S^T Ybar_{1:m-1} - Ubar)^T sigma."""
    m = S.shape[1]
    if m <= 1:
        return np.zeros(0)
    return -rho0 * (S.T @ Ybar[:, :m - 1] - Ubar).T @ sigma


def _psd_factor(G):
    """Z with Z^T Z = G for a symmetric PSD G."""
    if G.size == 0:
        return np.zeros((0, 0))
    w, Q = np.linalg.eigh(0.5 * (G + G.T))
    w = np.clip(w, 0.0, None)
    return np.sqrt(w)[:, None] * Q.T


def build_workspace(inputs):
    S, Ybar = inputs.S, inputs.Ybar
    m = inputs.m
    WinvS = inputs.prefix_applier(S)
    M = S.T @ WinvS
    M = 0.5 * (M + M.T)
    try:
        M_chol = scipy.linalg.cho_factor(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("S^T W^{-1} S is not positive definite") from exc
    if inputs.base_applier is not None:
        chi0 = 1.0 + inputs.rho0 * float(inputs.ybar0 @ inputs.base_applier(inputs.ybar0))
    else:
        chi0 = float("nan")

    StY = S.T @ Ybar
    Ubar = np.triu(StY)[:, :m - 1]
    b = compute_b(S, Ybar, Ubar, inputs.sigma, inputs.rho0)
    Sy0 = S.T @ inputs.ybar0
    Psi = np.outer(Sy0, b) + StY[:, :m - 1] - Ubar
    varpi = b / np.sqrt(inputs.rho0)
    G = np.outer(varpi, varpi) + Psi.T @ scipy.linalg.cho_solve(M_chol, Psi)
    Z = _psd_factor(G)
    return AggregationWorkspace(M=M, M_chol=M_chol, WinvS=WinvS, chi0=chi0, b=b,
                                Ubar=Ubar, Psi=Psi, varpi=varpi, Z=Z)


def _smaller_root(qa, qb, qc, scale):
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        if disc < -DISC_TOL * scale:
            raise NegativeDiscriminant(f"discriminant {disc:.3e} below tolerance")
        disc = 0.0
    q = -0.5 * (qb + np.copysign(np.sqrt(disc), qb))
    if q == 0.0:
        return 0.0
    return qc / q


def compute_A(ws, inputs):
    """Columns of A, built backwards from the last one.

    Column l (0-based here) of V = M A + Psi is supported on rows l+1..m-1.
    For each l the previously fixed columns, restricted to rows l+2..m-1, are
    the Theta vectors; beta is the coefficient vector of the particular
    solution in the span of a rank-revealing basis of them, abar spans the
    directions that keep the affine conditions satisfied, and lambda solves
    the remaining scalar quadratic.
    """
    m = inputs.m
    if m <= 1:
        ws.A = np.zeros((m, 0))
        ws.V = np.zeros((m, 0))
        return ws.A
    Minv = ws.solve_M(np.eye(m))
    Minv = 0.5 * (Minv + Minv.T)
    G = ws.G
    Zc = ws.Z
    V = np.zeros((m, m - 1))
    Theta, betas, lams = [None] * (m - 1), [None] * (m - 1), [None] * (m - 1)

    # l = m-2 is the first, one-dimensional step; the same code covers it
    # because no earlier columns constrain it.
    for l in range(m - 2, -1, -1):
        later = V[:, l + 1:]
        Theta[l] = later[l + 2:, :]
        if later.shape[1]:
            # rank-revealing basis of the lifted Theta columns
            _, R, piv = scipy.linalg.qr(later, mode="economic", pivoting=True)
            rdiag = np.abs(np.diag(R))
            c = int(np.sum(rdiag > RANK_TOL * max(rdiag[0], 1e-300))) if rdiag.size else 0
        else:
            c = 0
        if c > 0:
            basis = later[:, piv[:c]]
            zt = Zc[:, l + 1:][:, piv[:c]]
            gram = basis.T @ Minv @ basis
            beta = np.linalg.solve(gram, zt.T @ Zc[:, l])
            vstar = basis @ beta
        else:
            beta = np.zeros(0)
            vstar = np.zeros(m)
        betas[l] = beta

        # directions orthogonal (in M^{-1}) to every later column, zero on
        # the first l+1 rows
        K = later.T @ Minv
        abar = null_space_vector(K, leading_zeros=l + 1)
        Mi_abar = Minv @ abar
        qa = float(abar @ Mi_abar)
        if qa <= 1e-14 * np.abs(Minv).max():
            lam = 0.0
        else:
            qb = 2.0 * float(vstar @ Mi_abar)
            vv = float(vstar @ Minv @ vstar)
            qc = vv - G[l, l]
            scale = qb * qb + 4.0 * qa * (abs(vv) + abs(G[l, l])) + 1e-300
            lam = _smaller_root(qa, qb, qc, scale)
        lams[l] = lam
        V[:, l] = vstar + lam * abar

    Sy0 = inputs.S.T @ inputs.ybar0
    b = ws.b
    A = np.zeros((m, m - 1))
    for l in range(m - 1):
        a1 = -b[l] * Sy0[:l + 1]
        cl = inputs.S[:, l + 1:].T @ (b[l] * inputs.ybar0 + inputs.Ybar[:, l])
        a2 = V[l + 1:, l] - cl
        A[:, l] = ws.solve_M(np.concatenate([a1, a2]))
    ws.A, ws.V, ws.Theta, ws.beta, ws.lam = A, V, Theta, betas, lams
    return A


def quadratic_residual(ws, A=None):
    """Frobenius norm of A^T M A + Psi^T A + A^T Psi - varpi varpi^T and its scale."""
    A = ws.A if A is None else A
    R = A.T @ ws.M @ A + ws.Psi.T @ A + A.T @ ws.Psi - np.outer(ws.varpi, ws.varpi)
    lam_min = max(np.linalg.eigvalsh(ws.M)[0], 1e-300) if ws.M.size else 1.0
    scale = ws.varpi @ ws.varpi + np.linalg.norm(ws.Psi) ** 2 / lam_min
    return float(np.linalg.norm(R)), float(scale)


def assemble_yhat(inputs, A, b, WinvS=None):
    """Yhat = W^{-1} S [A 0] + ybar0 [b; 0]^T + Ybar."""
    m = inputs.m
    Yhat = np.array(inputs.Ybar, dtype=float, copy=True)
    if m <= 1:
        return Yhat
    if WinvS is None:
        WinvS = inputs.prefix_applier(inputs.S)
    Yhat[:, :m - 1] += WinvS @ A + np.outer(inputs.ybar0, b)
    return Yhat


def aggregate(inputs):
    """Run the whole transform; returns ``(Yhat, workspace)``."""
    ws = build_workspace(inputs)
    compute_A(ws, inputs)
    return assemble_yhat(inputs, ws.A, ws.b, ws.WinvS), ws


def _prefix_inputs(store, j, sigma, gamma0):
    pairs = store.pairs
    p0 = pairs[j]
    newer = pairs[j + 1:]
    S = np.column_stack([p.s for p in newer])
    Ybar = np.column_stack([p.ybar for p in newer])
    # rho0 taken from the currently stored (possibly aggregated) ybar0
    rho0 = 1.0 / float(p0.s @ p0.ybar)
    prefix = DisplacementStore(pairs[:j], store.m_max)
    return AggregationInputs(
        sigma=np.asarray(sigma, dtype=float), s0=p0.s, ybar0=p0.ybar, rho0=rho0,
        S=S, Ybar=Ybar, rho=np.array([p.rho for p in newer]),
        prefix_applier=lambda V: apply_prefix_hessian(store, j, V, gamma0),
        base_applier=lambda v: -two_loop_direction(prefix, v, gamma0),
    )


def drop_parallel_pair(store, sigma_scalar, gram=None):
    """Remove the second-newest pair when it is parallel to the newest one."""
    if sigma_scalar == 0:
        raise ValueError("parallel coefficient must be nonzero")
    pairs = store.pairs
    if len(pairs) < 2:
        raise ValueError("need at least two pairs")
    kept = pairs[:-2] + pairs[-1:]
    return store.replace_pairs(kept, gram)


def aggregate_pair(store, j, sigma, gamma0=1.0, gram=None, check=True):
    """Remove pair ``j`` (0-based, oldest-first) by aggregating it into the newer ones.

    ``sigma`` holds the coefficients of s_j over pairs j+1..end, oldest-first.
    The base matrix is gamma0*I updated with the pairs older than j; its
    inverse action comes from :func:`apply_prefix_hessian`.  When ``gram`` is
    None the Gram factor of the result is rebuilt.
    """
    pairs = store.pairs
    m_new = len(pairs) - j - 1
    if not 0 <= j < len(pairs) - 1:
        raise ValueError("dependent index must have newer pairs")
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if sigma.shape != (m_new,):
        raise ValueError("sigma must have one entry per newer pair")
    if m_new == 1 and j == len(pairs) - 2:
        result = drop_parallel_pair(store, sigma[0], gram)
        return result if gram is not None else _with_gram(result)

    inputs = _prefix_inputs(store, j, sigma, gamma0)
    Yhat, ws = aggregate(inputs)
    if check:
        _validate(inputs, ws, Yhat)
    try:
        updated = [p.with_ybar(Yhat[:, k]) if k < m_new - 1 else p
                   for k, p in enumerate(pairs[j + 1:])]
    except DegenerateCurvature as exc:
        raise AggregationFailure(str(exc)) from exc
    result = store.replace_pairs(pairs[:j] + tuple(updated), gram)
    return result if gram is not None else _with_gram(result)


def _with_gram(store):
    if not len(store):
        return store
    g = rebuild_factor(store.S[:, ::-1])
    return store.replace_pairs(store.pairs, g)


def _validate(inputs, ws, Yhat):
    if not np.all(np.isfinite(Yhat)):
        raise AggregationFailure("non-finite aggregated displacements")
    res, scale = quadratic_residual(ws)
    if res > RESIDUAL_TOL * max(scale, 1e-300) and res > 1e-12:
        raise AggregationFailure(f"quadratic residual {res:.3e} (scale {scale:.3e})")
    old = np.einsum("ij,ij->j", inputs.S, inputs.Ybar)
    new = np.einsum("ij,ij->j", inputs.S, Yhat)
    if np.any(np.abs(new - old) > CURVATURE_TOL * np.abs(old)):
        raise AggregationFailure("aggregation changed s_i'ybar_i")
