"""Split calculus and the recursive builder."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamforge.checks import barycenter, moment_p, rank_one_certificate
from lamforge.constraints import ConstraintError, ConstraintSpec, clamp_rate
from lamforge.laminate import (
    BAD,
    CASE_I,
    CASE_II,
    CASE_ONE_RULE,
    CONTINUE,
    GOOD,
    LaminateError,
    build_laminate,
    classify_case,
    laminate_for_constraint,
    split_case_one,
    split_case_two,
)
from lamforge.matrix import signed_svd

from conftest import random_rotation


def dets(nu):
    return np.linalg.det(nu.matrices())


def test_classify_threshold_examples():
    assert classify_case(signed_svd(np.eye(3)), 2.0) == CASE_I
    assert classify_case(signed_svd(0.1 * np.eye(3)), 2.0) == CASE_II
    assert classify_case(signed_svd(np.eye(4)), 2.0) == CASE_I


def test_classify_two_dimensions_never_case_two(rng):
    for _ in range(50):
        m = rng.uniform(-2, 2, size=(2, 2))
        assert classify_case(signed_svd(m), rng.uniform(-5, 5)) == CASE_I


def test_split_case_one_identity_rate_three():
    step = split_case_one(signed_svd(np.eye(3)), 3.0)
    assert step.magnitude == pytest.approx(np.sqrt(2.0))
    by_role = {}
    for c in step.children:
        assert c.weight == Fraction(1, 4)
        by_role.setdefault(c.role, []).append(np.linalg.det(c.matrix))
    np.testing.assert_allclose(by_role[GOOD], [3.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(by_role[BAD], [-1.0, -1.0], atol=1e-12)
    for c in step.children:
        # opposite signs give the good children
        assert (c.role == GOOD) == (c.signs[0] != c.signs[1])


def test_split_case_one_fixed_point():
    step = split_case_one(signed_svd(np.eye(3)), 1.0)
    assert step.magnitude == 0.0
    for c in step.children:
        np.testing.assert_array_equal(c.matrix, np.eye(3))
        assert c.role == GOOD


def test_split_case_one_four_dimensions():
    step = split_case_one(signed_svd(np.eye(4)), 2.0)
    assert step.magnitude == pytest.approx(1.0)
    good = sorted(np.linalg.det(c.matrix) for c in step.children if c.role == GOOD)
    bad = sorted(np.linalg.det(c.matrix) for c in step.children if c.role == BAD)
    np.testing.assert_allclose(good, [2.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(bad, [0.0, 0.0], atol=1e-12)


def test_split_case_two_small_diagonal():
    S = signed_svd(0.1 * np.eye(3))
    step = split_case_two(S, 2.0)
    assert step.case_tag == CASE_II
    assert step.magnitude == pytest.approx(2.0)
    diags = sorted(tuple(np.round(np.diag(c.matrix), 12)) for c in step.children)
    assert diags == [(0.1, 0.1, -1.9), (0.1, 0.1, 2.1)]
    mean = sum(float(c.weight) * c.matrix for c in step.children)
    np.testing.assert_allclose(mean, 0.1 * np.eye(3), atol=1e-15)
    for c in step.children:
        assert c.role == CONTINUE
        assert abs(c.matrix[2, 2]) >= 1.0 - 1e-12


def test_dirac_when_on_rate():
    m = np.diag([1.0, 2.0, 3.0])
    nu = build_laminate(m, 6.0, 5)
    assert nu.is_dirac
    assert len(nu.atoms) == 1 and nu.atoms[0].role == GOOD
    assert nu.bad_mass() == 0


def test_identity_rate_three_depth_one_case_one_rule():
    nu = build_laminate(np.eye(3), 3.0, 1, case_rule=CASE_ONE_RULE)
    assert len(nu.atoms) == 4
    d = dets(nu)
    assert sorted(np.round(d, 10)) == [-1.0, -1.0, 3.0, 3.0]
    assert nu.bad_mass() == Fraction(1, 2)
    assert moment_p(nu, np.eye(3), 2.0) == pytest.approx(4.0, abs=1e-12)


def test_identity_rate_three_default_rule_starts_with_case_two():
    # sigma_3 = 1 sits below (3/2)**(1/3), so the threshold rule lifts first
    nu = build_laminate(np.eye(3), 3.0, 1)
    assert nu.tree[0].case_tag == CASE_II
    assert nu.bad_mass() == Fraction(1, 2)


@pytest.mark.parametrize("rule", ["threshold", CASE_ONE_RULE])
def test_bad_mass_law(rule):
    for k in range(0, 9):
        nu = build_laminate(np.eye(3), 3.0, k, case_rule=rule)
        assert nu.bad_mass() == Fraction(1, 2**k)
        assert nu.total_mass() == 1


def test_bad_mass_tolerance_selects_depth():
    nu = build_laminate(np.eye(3), 3.0, bad_mass_tol=0.1)
    assert nu.bad_mass() == Fraction(1, 16)


def test_depth_limits():
    with pytest.raises(ValueError):
        build_laminate(np.eye(2), 2.0, -1)
    with pytest.raises(ValueError):
        build_laminate(np.eye(2), 2.0, 61)


def instances():
    d = st.integers(2, 5)
    return d.flatmap(
        lambda dim: st.tuples(
            st.just(dim),
            st.lists(st.floats(-2, 2), min_size=dim * dim, max_size=dim * dim),
            st.floats(-5, 5),
            st.integers(0, 8),
        )
    )


def check_invariants(M, r, nu):
    k = nu.case_one_depth
    norm = np.linalg.norm(M)
    assert np.linalg.norm(barycenter(nu) - M) <= 1e-9 * (1 + norm)
    assert nu.total_mass() == 1
    for a in nu.atoms:
        den = a.weight.denominator
        assert den & (den - 1) == 0
    d = dets(nu)
    good = np.array([a.role == GOOD for a in nu.atoms])
    assert np.all(np.abs(d[good] - r) <= 1e-8 * (1 + abs(r)))
    if not nu.is_dirac:
        assert nu.bad_mass() == Fraction(1, 2**k)
    assert rank_one_certificate(nu) <= 1e-10
    det_m = np.linalg.det(M)
    assert abs(float(np.dot(nu.weights(), d)) - det_m) <= 1e-8 * (1 + abs(det_m))


@settings(max_examples=200, deadline=None)
@given(instances())
def test_invariants_hypothesis(inst):
    dim, entries, r, k = inst
    M = np.array(entries).reshape(dim, dim)
    check_invariants(M, r, build_laminate(M, r, k))


def test_invariants_zero_rate_and_singular_roots():
    for M in (np.zeros((3, 3)), np.diag([0.0, 1.0, 2.0]), np.outer([1, 2, 3], [1, 0, 1.0])):
        for r in (0.0, 1.0, -2.0):
            check_invariants(M, r, build_laminate(M, r, 4))


def test_case_two_with_zero_smallest_singular_value():
    M = np.diag([0.0, 0.1, 0.1])
    nu = build_laminate(M, 2.0, 3)
    assert nu.tree[0].case_tag == CASE_II
    check_invariants(M, 2.0, nu)


def longest_case_two_run(nu):
    def walk(idx, run):
        step = nu.tree[idx]
        run = run + 1 if step.case_tag == CASE_II else 0
        below = [walk(c.next, run) for c in step.children if c.next is not None]
        return max([run] + below)

    return walk(0, 0) if nu.tree else 0


def test_case_two_run_is_bounded(rng):
    # d = 5 may need three consecutive lifts; never more
    for _ in range(30):
        M = 0.05 * rng.uniform(-1, 1, size=(5, 5))
        nu = build_laminate(M, float(rng.choice([-5.0, 5.0])), 2)
        check_invariants(M, nu.rate, nu)
        assert longest_case_two_run(nu) <= 3


def same_measure(xs, ys, atol=1e-9):
    """Weighted atom lists agree up to reordering of the children."""
    left = list(ys)
    for w, m in xs:
        hit = next(
            (i for i, (v, n) in enumerate(left) if v == w and np.allclose(m, n, atol=atol)),
            None,
        )
        if hit is None:
            return False
        left.pop(hit)
    return not left


def test_conjugation_covariance(rng):
    for d in (2, 3, 4):
        for _ in range(10):
            M = rng.uniform(-2, 2, size=(d, d))
            r = rng.uniform(-5, 5)
            P, Q = random_rotation(rng, d), random_rotation(rng, d)
            a = build_laminate(M, r, 4)
            b = build_laminate(P @ M @ Q.T, r, 4)
            assert same_measure(
                [(x.weight, P @ x.matrix @ Q.T) for x in a.atoms],
                [(y.weight, y.matrix) for y in b.atoms],
            )


def test_scaling_covariance(rng):
    for _ in range(20):
        d = int(rng.integers(2, 5))
        M = rng.uniform(-2, 2, size=(d, d))
        r = rng.uniform(-5, 5)
        base = moment_p(build_laminate(M, r, 4), M, 2.0)
        for s in (0.5, 2.0):
            scaled = moment_p(build_laminate(s * M, s**d * r, 4), s * M, 2.0)
            assert scaled == pytest.approx(s**2 * base, rel=1e-8)


def test_clamp_rate():
    assert clamp_rate(5.0, 1.0, 2.0) == 2.0
    assert clamp_rate(1.5, 1.0, 2.0) == 1.5
    assert clamp_rate(3.0, -np.inf, 0.0) == 0.0
    with pytest.raises(ConstraintError):
        clamp_rate(0.0, 2.0, 1.0)


def test_laminate_for_interval():
    spec = ConstraintSpec.interval(1.0, 2.0, 1.5, 3)
    inside = np.diag([1.0, 1.0, 1.5])
    assert laminate_for_constraint(inside, spec, 3).is_dirac
    M = np.diag([1.0, 1.0, 5.0])
    nu = laminate_for_constraint(M, spec, 3)
    assert nu.rate == 2.0
    assert nu.bad_mass() == Fraction(1, 8)


def test_one_sided_interval_matches_exact():
    spec = ConstraintSpec.interval(2.0, np.inf, 1.5, 3)
    low = np.eye(3)
    a = laminate_for_constraint(low, spec, 3)
    b = build_laminate(low, 2.0, 3)
    for x, y in zip(a.atoms, b.atoms):
        np.testing.assert_array_equal(x.matrix, y.matrix)
    assert laminate_for_constraint(3 * np.eye(3), spec, 3).is_dirac


def test_pre_order_links():
    nu = build_laminate(np.eye(3), 3.0, 3)
    for idx, step in enumerate(nu.tree):
        for c in step.children:
            if c.next is not None:
                assert c.next > idx
                np.testing.assert_allclose(nu.tree[c.next].parent, c.matrix, atol=1e-12)
            else:
                assert c.role in (GOOD, BAD)


def test_laminate_error_is_runtime_error():
    assert issubclass(LaminateError, RuntimeError)
