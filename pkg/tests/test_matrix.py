"""Matrix kernel against brute-force oracles, plus backend parity."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lamforge import _fallback, kernels
from lamforge.matrix import determinant, frobenius_norm, rank_one_defect, signed_svd

from conftest import random_rotation


def cofactor_det(m):
    """Laplace expansion along the first row; exponential but exact in structure."""
    m = [list(row) for row in m]
    n = len(m)
    if n == 1:
        return m[0][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        total += (-1) ** j * m[0][j] * cofactor_det(minor)
    return total


def permutation_det(m):
    n = m.shape[0]
    total = 0.0
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i, j in itertools.combinations(range(n), 2) if perm[i] > perm[j])
        total += (-1) ** inv * math.prod(m[i, perm[i]] for i in range(n))
    return total


matrices = st.integers(2, 6).flatmap(
    lambda d: arrays(np.float64, (d, d), elements=st.floats(-2, 2, allow_nan=False, width=64))
)


def test_det_trivial():
    assert determinant(np.eye(3)) == 1.0
    assert determinant(np.diag([1.0, 2.0, 3.0])) == pytest.approx(6.0, abs=1e-15)


def test_det_matches_cofactor_oracle(rng):
    for _ in range(200):
        m = rng.uniform(-2, 2, size=(3, 3))
        assert abs(determinant(m) - cofactor_det(m.tolist())) <= 1e-11


@pytest.mark.parametrize("d", [2, 4, 5])
def test_det_matches_permutation_sum(rng, d):
    for _ in range(20):
        m = rng.uniform(-2, 2, size=(d, d))
        assert determinant(m) == pytest.approx(permutation_det(m), abs=1e-10)


def test_det_singular_is_zero():
    m = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 5.0]])
    assert determinant(m) == 0.0


def test_frobenius():
    assert frobenius_norm(np.eye(3)) == pytest.approx(math.sqrt(3))
    assert frobenius_norm(np.zeros((2, 2))) == 0.0


def test_frobenius_equals_singular_values(rng):
    for d in (2, 3, 5):
        m = rng.uniform(-2, 2, size=(d, d))
        s = signed_svd(m).diag
        assert frobenius_norm(m) == pytest.approx(float(np.sqrt(np.sum(s**2))), abs=1e-10)


def test_svd_identity():
    S = signed_svd(np.eye(3))
    np.testing.assert_array_equal(S.diag, np.ones(3))
    np.testing.assert_allclose(S.P, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(S.Q, np.eye(3), atol=1e-15)


def test_svd_swap_matrix():
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    S = signed_svd(m)
    np.testing.assert_allclose(S.diag, [1.0, -1.0], atol=1e-14)
    np.testing.assert_allclose(S.reconstruct(), m, atol=1e-14)
    for R in (S.P, S.Q):
        assert np.linalg.det(R) == pytest.approx(1.0)


def test_svd_of_rotation(rng):
    R = random_rotation(rng, 4)
    S = signed_svd(R)
    np.testing.assert_allclose(S.diag, np.ones(4), atol=1e-12)
    np.testing.assert_allclose(S.reconstruct(), R, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(matrices)
def test_svd_invariants(m):
    S = signed_svd(m)
    fro = float(np.linalg.norm(m))
    d = m.shape[0]
    assert np.linalg.norm(S.reconstruct() - m) <= 1e-10 * (1 + fro)
    assert abs(np.linalg.det(m) - np.prod(S.diag)) <= 1e-9 * (1 + fro**d)
    assert abs(fro**2 - np.sum(S.diag**2)) <= 1e-9 * max(1.0, fro**2)
    for R in (S.P, S.Q):
        np.testing.assert_allclose(R @ R.T, np.eye(d), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    mods = np.abs(S.diag)
    assert np.all(np.diff(mods) >= -1e-12 * (1 + fro))
    assert np.all(S.diag[:-1] >= 0)
    det = np.linalg.det(m)
    if abs(det) > 1e-12:
        assert np.sign(det) == np.sign(S.diag[-1])


def test_rank_one_defect(rng):
    for _ in range(20):
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert rank_one_defect(np.outer(a, b)) <= 1e-12 * (1 + np.linalg.norm(a) * np.linalg.norm(b))
    assert rank_one_defect(np.eye(2)) == pytest.approx(1.0)
    e12 = np.zeros((3, 3))
    e12[0, 1] = 2.5
    assert rank_one_defect(e12) == 0.0


def test_bad_shapes_rejected():
    with pytest.raises(ValueError):
        determinant(np.ones((2, 3)))
    with pytest.raises(ValueError):
        signed_svd(np.array([[np.nan, 0.0], [0.0, 1.0]]))


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_agree(rng):
    from lamforge import _kernels

    for d in (2, 3, 4, 5):
        for _ in range(30):
            m = rng.uniform(-2, 2, size=(d, d))
            assert _kernels.det_lu(m) == pytest.approx(_fallback.det_lu(m), rel=1e-13, abs=1e-14)
            Pc, dc, Qc, _ = _kernels.signed_svd(m)
            Pf, df, Qf, _ = _fallback.signed_svd(m)
            np.testing.assert_allclose(dc, df, atol=1e-11)
            np.testing.assert_allclose((Pc * dc) @ Qc.T, m, atol=1e-11)
        stack = rng.uniform(-2, 2, size=(50, d, d))
        np.testing.assert_allclose(_kernels.batch_det(stack), _fallback.batch_det(stack), rtol=1e-12, atol=1e-13)
