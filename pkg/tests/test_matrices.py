"""Tests for the transfer-matrix families and their closed-form identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polysub.geometry import lift_to_d
from polysub.matrices import (
    build_H,
    build_Q,
    build_T,
    build_T_batch,
    contraction_witness_odd,
    contraction_witness_product,
    det_T_closed_form,
    det_T_lu,
    matrix_csv,
    q_product,
    q_t,
    verify_eigenstructure,
)


def test_build_H_half_proportions():
    H = build_H([0.5, 0.5, 0.5])
    assert np.allclose(H, [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


def test_H_column_sums_are_one():
    rng = np.random.default_rng(1)
    for _ in range(200):
        d = int(rng.integers(3, 10))
        H = build_H(rng.uniform(0.01, 0.99, d))
        assert np.abs(H.sum(axis=0) - 1.0).max() < 1e-15
        assert np.all(H >= 0.0)


def test_H_preserves_zero_sum():
    rng = np.random.default_rng(2)
    for _ in range(100):
        d = int(rng.integers(3, 10))
        H = build_H(rng.uniform(0.01, 0.99, d))
        x = rng.normal(size=d)
        x -= x.mean()
        assert abs((H @ x).sum()) < 1e-12


def test_build_T_templates():
    T3 = build_T([0.5, 0.5, 0.5])
    assert np.allclose(T3, [[0.5, 0.5], [-0.5, 0.0]])
    T4 = build_T([0.5, 0.5, 0.5, 0.5])
    assert np.allclose(T4[-1], [-0.5, -0.5, 0.0])
    assert T4[0, 2] == 0.0  # strict zero pattern outside the bidiagonal band


def test_T_consistent_with_H_through_the_lift():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        d = int(rng.integers(3, 8))
        xi = rng.uniform(0.01, 0.99, d)
        x = rng.normal(size=d)
        x -= x.mean()
        full = build_H(xi) @ x
        reduced = build_T(xi) @ x[:-1]
        assert np.allclose(lift_to_d(reduced), full, atol=1e-12)


def test_T_rejects_out_of_range():
    with pytest.raises(ValueError):
        build_T([0.5, 1.0, 0.5])
    with pytest.raises(ValueError):
        build_H([0.0, 0.5, 0.5])


def test_det_closed_form_examples():
    assert det_T_closed_form([0.5, 0.5, 0.5]) == pytest.approx(0.25)
    assert det_T_closed_form([0.5, 0.5, 0.5, 0.5]) == 0.0


def test_det_closed_form_matches_lu_for_d_3_to_7():
    rng = np.random.default_rng(4)
    for d in range(3, 8):
        xi = rng.uniform(0.01, 0.99, (10**4, d))
        closed = det_T_closed_form(xi)
        sampled = rng.integers(0, 10**4, 50)
        for idx in sampled:
            assert det_T_lu(xi[idx]) == pytest.approx(closed[idx], rel=1e-12, abs=1e-15)
        assert np.abs(closed).max() <= 1.0 + 1e-12


@settings(max_examples=80, deadline=None)
@given(st.integers(3, 7), st.integers(0, 2**31 - 1))
def test_det_closed_form_matches_lu_property(d, seed):
    xi = np.random.default_rng(seed).uniform(0.01, 0.99, d)
    assert det_T_lu(xi) == pytest.approx(float(det_T_closed_form(xi)), rel=1e-10, abs=1e-14)


def test_head_tail_product_inequalities():
    rng = np.random.default_rng(5)
    xi = rng.uniform(0.0, 1.0, (10**5, 6))
    lhs = np.prod(xi * (1 - xi), axis=1)
    mid = np.prod(xi, axis=1) + np.prod(1 - xi, axis=1)
    assert np.all(lhs <= mid + 1e-15)
    assert np.all(mid <= 1.0 + 1e-12)


def test_inverse_norm_bounded_by_det_power():
    rng = np.random.default_rng(6)
    count = 0
    while count < 1000:
        d = int(rng.integers(3, 8))
        xi = rng.uniform(0.01, 0.99, d)
        det = float(det_T_closed_form(xi))
        if abs(det) < 1e-8:
            continue
        T = build_T(xi)
        inv_norm = np.linalg.norm(np.linalg.inv(T), 2)
        assert inv_norm >= abs(det) ** (-1.0 / (d - 1)) - 1e-9
        count += 1


def test_q_t_value_and_sign():
    assert q_t(0.5, 0.25) == pytest.approx(-0.2, rel=1e-14)
    rng = np.random.default_rng(7)
    for _ in range(1000):
        a, b = rng.uniform(0.01, 0.99, 2)
        if a == b:
            continue
        assert q_t(a, b) < 0.0


def test_q_closed_form_matches_four_factor_product():
    rng = np.random.default_rng(8)
    for _ in range(200):
        a, b = rng.uniform(0.05, 0.95, 2)
        if abs(a - b) < 1e-3:
            continue
        Q = build_Q(a, b)
        assert np.abs(q_product(a, b) - Q).max() < 1e-10
        assert np.abs(q_product(a, b, normalized=True) - Q).max() < 1e-10


def test_q_power_is_linear_in_the_subdiagonal():
    Q = build_Q(0.3, 0.6)
    t = q_t(0.3, 0.6)
    assert np.abs(np.linalg.matrix_power(Q, 5) - np.array([[1.0, 0.0], [5 * t, 1.0]])).max() < 1e-12


def test_q_requires_distinct_atoms():
    with pytest.raises(ValueError):
        q_t(0.4, 0.4)


def test_eigenstructure_examples():
    ok, res = verify_eigenstructure(0.3, 3, 1e-12)
    assert ok and res < 1e-12
    ok, res = verify_eigenstructure(0.5, 7, 1e-12)
    assert ok and res < 1e-12


def test_eigenstructure_detects_wrong_eigenvalue():
    a, d = 0.3, 5
    T = build_T(np.full(d, a))
    eps = np.exp(2j * np.pi / d)
    v = eps ** np.arange(d - 1)
    lam = 1 - a + a * eps + 0.1
    residual = np.linalg.norm(T @ v - lam * v) / np.linalg.norm(v)
    assert residual > 1e-3


def test_contraction_witness_matches_product():
    for (a, b) in [(0.3, 0.6), (0.2, 0.85), (0.45, 0.55)]:
        M = contraction_witness_odd(5, a, b)
        P = contraction_witness_product(5, a, b)
        assert np.abs(M - P).max() < 1e-10
    M7 = contraction_witness_odd(7, 0.3, 0.6)
    P7 = contraction_witness_product(7, 0.3, 0.6)
    assert np.abs(M7 - P7).max() < 1e-10


def test_contraction_witness_even_entries_vanish():
    M = contraction_witness_odd(5, 0.3, 0.6)
    row = M[-1]
    assert row[1] == 0.0
    assert np.allclose(M[:-1], np.eye(4)[:-1])
    M9 = contraction_witness_odd(9, 0.25, 0.7)
    assert M9[-1][1] == 0.0 and M9[-1][3] == 0.0 and M9[-1][5] == 0.0


def test_contraction_witness_norm_grows_linearly():
    M = contraction_witness_odd(5, 0.3, 0.6)
    n64 = np.linalg.norm(np.linalg.matrix_power(M, 64), 2)
    n128 = np.linalg.norm(np.linalg.matrix_power(M, 128), 2)
    assert n128 / n64 == pytest.approx(2.0, rel=0.05)


def test_contraction_witness_rejects_even_d():
    with pytest.raises(ValueError):
        contraction_witness_odd(6, 0.3, 0.6)


def test_build_T_batch_matches_scalar():
    rng = np.random.default_rng(9)
    xi = rng.uniform(0.01, 0.99, (50, 5))
    batch = build_T_batch(xi)
    for i in range(50):
        assert np.array_equal(batch[i], build_T(xi[i]))


def test_matrix_csv_roundtrip():
    m = np.array([[0.1, 0.25], [-1.5, 1.0 / 3.0]])
    text = matrix_csv(m)
    parsed = np.array([[float(v) for v in line.split(",")] for line in text.strip().splitlines()])
    assert np.array_equal(parsed, m)
