import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggmbfgs import aggregation, verification
from aggmbfgs.aggregation import (AggregationInputs, aggregate, aggregate_pair, assemble_yhat,
                                  build_workspace, compute_A, compute_b, drop_parallel_pair,
                                  quadratic_residual)
from aggmbfgs.errors import NegativeDiscriminant
from aggmbfgs.qn_core import DisplacementStore, mbfgs_iterative
from aggmbfgs.verification import aggregation_instance, random_pair


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _identity_inputs(rng, n, m):
    newer = [random_pair(rng, rng.standard_normal(n)) for _ in range(m)]
    S = np.column_stack([p.s for p in newer])
    Y = np.column_stack([p.ybar for p in newer])
    sigma = rng.standard_normal(m)
    dep = random_pair(rng, S @ sigma)
    return AggregationInputs(sigma=sigma, s0=dep.s, ybar0=dep.ybar, rho0=dep.rho, S=S, Ybar=Y,
                             rho=np.array([p.rho for p in newer]),
                             prefix_applier=lambda V: V, base_applier=lambda v: v)


# -- compute_b ---------------------------------------------------------------

def test_b_empty_for_single_column():
    assert compute_b(np.ones((3, 1)), np.ones((3, 1)), np.zeros((1, 0)), np.ones(1), 1.0).shape == (0,)


def test_b_zero_when_strict_lower_part_vanishes():
    S = np.eye(4)[:, :3]
    Y = np.triu(np.ones((4, 3)))          # S'Y is upper triangular
    Ubar = np.triu(S.T @ Y)[:, :2]
    np.testing.assert_array_equal(compute_b(S, Y, Ubar, np.ones(3), 0.5), 0.0)


def test_b_matches_entrywise_formula():
    rng = np.random.default_rng(0)
    n, m = 7, 4
    S, Y = rng.standard_normal((2, n, m))
    sigma = rng.standard_normal(m)
    rho0 = 0.7
    Ubar = np.triu(S.T @ Y)[:, :m - 1]
    b = compute_b(S, Y, Ubar, sigma, rho0)
    for l in range(m - 1):
        # only entries i > l of column l survive the subtraction of Ubar
        expected = -rho0 * sum(sigma[i] * (S[:, i] @ Y[:, l]) for i in range(l + 1, m))
        assert b[l] == pytest.approx(expected, rel=1e-12, abs=1e-12)


# -- compute_A / residual ------------------------------------------------------

def test_A_empty_for_single_column():
    rng = np.random.default_rng(1)
    inputs = _identity_inputs(rng, 5, 1)
    ws = build_workspace(inputs)
    assert compute_A(ws, inputs).shape == (1, 0)
    np.testing.assert_array_equal(assemble_yhat(inputs, ws.A, ws.b), inputs.Ybar)


def test_A_zero_for_homogeneous_equation():
    # S'Ybar upper triangular makes b, Psi and varpi vanish
    S = np.eye(6)[:, :3]
    Y = np.zeros((6, 3))
    Y[:3] = np.triu(np.arange(1.0, 10.0).reshape(3, 3))
    sigma = np.array([0.5, -1.0, 2.0])
    s0 = S @ sigma
    y0 = s0 + np.eye(6)[:, 4]
    inputs = AggregationInputs(sigma=sigma, s0=s0, ybar0=y0, rho0=1.0 / (s0 @ y0), S=S, Ybar=Y,
                               rho=1.0 / np.diag(S.T @ Y), prefix_applier=lambda V: V)
    ws = build_workspace(inputs)
    np.testing.assert_array_equal(ws.b, 0.0)
    np.testing.assert_array_equal(ws.Psi, 0.0)
    A = compute_A(ws, inputs)
    np.testing.assert_allclose(A, 0.0, atol=1e-14)
    res, _ = quadratic_residual(ws)
    assert res <= 1e-14


def test_residual_and_equivalence_n8_m3():
    rng = np.random.default_rng(3)
    inputs = _identity_inputs(rng, 8, 3)
    Yhat, ws = aggregate(inputs)
    res, scale = quadratic_residual(ws)
    assert res <= 1e-7 * scale
    full = mbfgs_iterative(np.eye(8), np.column_stack([inputs.s0, inputs.S]),
                           np.column_stack([inputs.ybar0, inputs.Ybar]))
    assert _rel(mbfgs_iterative(np.eye(8), inputs.S, Yhat), full) <= 1e-7


def test_workspace_invariants():
    rng = np.random.default_rng(4)
    inputs = _identity_inputs(rng, 9, 4)
    ws = build_workspace(inputs)
    assert np.linalg.eigvalsh(ws.M)[0] > 0
    assert ws.chi0 >= 1.0
    G = np.outer(ws.varpi, ws.varpi) + ws.Psi.T @ np.linalg.solve(ws.M, ws.Psi)
    assert _rel(ws.Z.T @ ws.Z, G) <= 1e-9


def test_negative_discriminant_is_reported():
    with pytest.raises(NegativeDiscriminant):
        aggregation._smaller_root(1.0, 0.0, 1.0, 1.0)
    # tiny negative discriminants are clamped
    assert aggregation._smaller_root(1.0, 2.0, 1.0 + 1e-12, 16.0) == pytest.approx(-1.0, abs=1e-5)


def test_smaller_root_choice():
    # roots of x^2 - 3x + 2 are 1 and 2
    assert aggregation._smaller_root(1.0, -3.0, 2.0, 9.0) == pytest.approx(1.0)


# -- assemble_yhat -------------------------------------------------------------

def test_assemble_with_zero_A_b():
    rng = np.random.default_rng(5)
    inputs = _identity_inputs(rng, 6, 3)
    np.testing.assert_array_equal(assemble_yhat(inputs, np.zeros((3, 2)), np.zeros(2)), inputs.Ybar)


def test_assemble_m2_unrolled():
    rng = np.random.default_rng(6)
    inputs = _identity_inputs(rng, 5, 2)
    W = np.diag([1.0, 2.0, 3.0, 4.0, 5.0])
    inputs.prefix_applier = lambda V: np.linalg.solve(W, V)
    A = np.array([[0.3], [-0.2]])
    b = np.array([0.7])
    Yhat = assemble_yhat(inputs, A, b)
    np.testing.assert_array_equal(Yhat[:, 1], inputs.Ybar[:, 1])
    expected = inputs.Ybar[:, 0] + np.linalg.solve(W, inputs.S @ A[:, 0]) + b[0] * inputs.ybar0
    np.testing.assert_allclose(Yhat[:, 0], expected, rtol=1e-13)


def test_inner_products_preserved():
    rng = np.random.default_rng(7)
    for _ in range(30):
        inputs = _identity_inputs(rng, int(rng.integers(4, 12)), int(rng.integers(2, 5)))
        Yhat, _ = aggregate(inputs)
        B_old = np.triu(inputs.S.T @ inputs.Ybar)
        B_new = np.triu(inputs.S.T @ Yhat)
        assert np.abs(B_new - B_old).max() <= 1e-9 * np.abs(B_old).max()
        d_old, d_new = np.diag(B_old), np.diag(B_new)
        assert np.max(np.abs(d_new - d_old) / d_old) <= 1e-10
        np.testing.assert_array_equal(Yhat[:, -1], inputs.Ybar[:, -1])


# -- aggregate_pair / drop_parallel_pair --------------------------------------

def test_parallel_case_equals_drop():
    rng = np.random.default_rng(8)
    a = random_pair(rng, rng.standard_normal(5))
    p1 = random_pair(rng, rng.standard_normal(5))
    p0 = random_pair(rng, 2.5 * p1.s)
    store = DisplacementStore((a, p0, p1), 5)
    got = aggregate_pair(store, 1, [2.5])
    ref = drop_parallel_pair(store, 2.5)
    assert got.pairs == ref.pairs == (a, p1)


def test_identical_pairs_collapse():
    rng = np.random.default_rng(9)
    p = random_pair(rng, rng.standard_normal(4))
    out = drop_parallel_pair(DisplacementStore((p, p), 4), 1.0)
    assert len(out) == 1
    W2 = mbfgs_iterative(np.eye(4), np.column_stack([p.s, p.s]), np.column_stack([p.ybar, p.ybar]))
    np.testing.assert_allclose(mbfgs_iterative(np.eye(4), out.S, out.Ybar), W2, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("sigma,random_base", [(-2.0, False), (3.0, True)])
def test_parallel_drop_dense_oracle(sigma, random_base):
    rng = np.random.default_rng(10)
    n = 5
    W0 = np.eye(n)
    if random_base:
        A = rng.standard_normal((n, n))
        W0 = A @ A.T + np.eye(n)
    p1 = random_pair(rng, rng.standard_normal(n))
    p0 = random_pair(rng, sigma * p1.s)
    assert np.linalg.norm(p0.ybar / np.linalg.norm(p0.ybar) - p1.ybar / np.linalg.norm(p1.ybar)) > 1e-3
    both = mbfgs_iterative(W0, np.column_stack([p0.s, p1.s]), np.column_stack([p0.ybar, p1.ybar]))
    one = mbfgs_iterative(W0, p1.s[:, None], p1.ybar[:, None])
    assert _rel(one, both) <= 1e-12


def test_drop_parallel_rejects_bad_input():
    rng = np.random.default_rng(11)
    p = random_pair(rng, rng.standard_normal(3))
    with pytest.raises(ValueError):
        drop_parallel_pair(DisplacementStore((p, p), 3), 0.0)
    with pytest.raises(ValueError):
        drop_parallel_pair(DisplacementStore((p,), 3), 1.0)


def test_aggregate_pair_n8_m3():
    rng = np.random.default_rng(12)
    n, m = 8, 3
    newer = [random_pair(rng, rng.standard_normal(n)) for _ in range(m)]
    sigma = rng.standard_normal(m)
    dep = random_pair(rng, np.column_stack([p.s for p in newer]) @ sigma)
    store = DisplacementStore(tuple([dep] + newer), 4)
    out = aggregate_pair(store, 0, sigma)
    assert len(out) == 3
    full = mbfgs_iterative(np.eye(n), store.S, store.Ybar)
    assert _rel(mbfgs_iterative(np.eye(n), out.S, out.Ybar), full) <= 1e-7
    assert out.pairs[-1] is newer[-1]
    assert all(p.aggregated for p in out.pairs[:-1])
    for p in out.pairs:
        assert p.rho == pytest.approx(1.0 / (p.s @ p.ybar), rel=1e-14)
    # Gram factor rebuilt for the new store
    G = out.S[:, ::-1].T @ out.S[:, ::-1]
    assert _rel(out.gram.gram(), G) <= 1e-12


def test_aggregate_pair_interior_n10():
    rng = np.random.default_rng(13)
    n = 10
    older = [random_pair(rng, rng.standard_normal(n))]
    newer = [random_pair(rng, rng.standard_normal(n)) for _ in range(2)]
    sigma = np.array([0.8, -1.3])
    dep = random_pair(rng, np.column_stack([p.s for p in newer]) @ sigma)
    store = DisplacementStore(tuple(older + [dep] + newer), 4)
    out = aggregate_pair(store, 1, sigma)
    assert out.pairs[0] is older[0]
    full = mbfgs_iterative(np.eye(n), store.S, store.Ybar)
    assert _rel(mbfgs_iterative(np.eye(n), out.S, out.Ybar), full) <= 1e-7


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_aggregation_equivalence_property(seed, interior):
    rng = np.random.default_rng(seed)
    store, j, sigma = aggregation_instance(rng, interior=interior)
    n = store.S.shape[0]
    out = aggregate_pair(store, j, sigma)
    full = mbfgs_iterative(np.eye(n), store.S, store.Ybar)
    assert _rel(mbfgs_iterative(np.eye(n), out.S, out.Ybar), full) <= 1e-7
    assert out.pairs[:j] == store.pairs[:j]
    old = np.einsum("ij,ij->j", store.S[:, j + 1:], store.Ybar[:, j + 1:])
    new = np.einsum("ij,ij->j", out.S[:, j:], out.Ybar[:, j:])
    assert np.max(np.abs(new - old) / old) <= 1e-10


def test_sigma_shape_checked():
    rng = np.random.default_rng(14)
    store, j, sigma = aggregation_instance(rng, interior=False)
    with pytest.raises(ValueError):
        aggregate_pair(store, j, np.append(sigma, 1.0))
    with pytest.raises(ValueError):
        aggregate_pair(store, len(store) - 1, sigma)


# -- negative control ------------------------------------------------------

def test_sign_flip_in_b_breaks_equivalence_suite(monkeypatch):
    original = aggregation.compute_b
    monkeypatch.setattr(aggregation, "compute_b", lambda *a: -original(*a))
    result = verification.suite_aggregation(trials=20)
    assert not result.passed
    assert result.worst > 1e-3
