"""Diagnostics for finite atomic measures on matrices.

Everything here works on a :class:`~lamforge.laminate.DiscreteLaminate` (or
anything exposing ``atoms`` with ``weight``, ``matrix`` and ``role``).
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from lamforge.constraints import ConstraintSpec
from lamforge.laminate import BAD, CASE_I
from lamforge.matrix import rank_one_defect

CONVEX = "convex"
MINOR_AFFINE = "minor-affine"
GUARD_RTOL = 1e-12
OFF_SUPPORT_RTOL = 1e-8


class TightnessViolation(ValueError):
    """``R(M) <= 0`` but the measure is not concentrated at ``M``."""


def barycenter(nu):
    return np.einsum("i,ijk->jk", nu.weights(), nu.matrices())


def moment_p(nu, M, p):
    """``sum_i w_i |A_i - M|_F ** p``."""
    if p < 1:
        raise ValueError("moment exponent must be >= 1")
    diff = nu.matrices() - np.asarray(M, dtype=float)
    dist = np.sqrt(np.einsum("ijk,ijk->i", diff, diff))
    return float(np.dot(nu.weights(), dist**p))


def tightness_ratio(nu, M, spec, p=None):
    """Moment of ``nu`` about ``M`` over ``max{R(M), 0} ** (p / d)``.

    Returns 0 in the Dirac case and raises :class:`TightnessViolation` when
    the constraint already holds at ``M`` but ``nu`` is spread out.
    """
    p = spec.p if p is None else p
    M = np.asarray(M, dtype=float)
    mom = moment_p(nu, M, p)
    viol = float(spec.violation(np.linalg.det(M)))
    if viol <= GUARD_RTOL * float(spec.scale()):
        if mom <= 1e-12:
            return 0.0
        raise TightnessViolation(
            f"constraint holds at the barycenter but the moment is {mom:.3e}"
        )
    return mom / viol ** (p / spec.dim)


def support_residual(nu, spec):
    """``(max R over good atoms, weight of atoms off the constraint set)``."""
    dets = np.linalg.det(nu.matrices())
    viol = spec.violation(dets)
    good = np.array([a.role != BAD for a in nu.atoms])
    good_res = float(viol[good].max()) if good.any() else 0.0
    cut = OFF_SUPPORT_RTOL * float(spec.scale())
    off = sum((a.weight for a, v in zip(nu.atoms, viol) if v > cut), Fraction(0))
    return good_res, off


def minors(A, k):
    """All ``k x k`` minors of a stack ``A`` of shape ``(..., d, d)``.

    Returns an array of shape ``(..., C(d, k) ** 2)``.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    combos = list(itertools.combinations(range(d), k))
    rows = np.array(combos)
    sub = A[..., rows[:, None, :, None], rows[None, :, None, :]]
    return np.linalg.det(sub).reshape(A.shape[:-2] + (-1,))


def minors_consistency(nu):
    """Largest normalized gap between averaged minors and minors of the mean."""
    mats = nu.matrices()
    w = nu.weights()
    bary = barycenter(nu)
    gap = 0.0
    for k in range(1, mats.shape[-1] + 1):
        avg = w @ minors(mats, k)
        ref = minors(bary, k)
        gap = max(gap, float(np.max(np.abs(avg - ref) / (1.0 + np.abs(ref)))))
    return gap


@dataclass(frozen=True)
class TestFunction:
    __test__ = False

    name: str
    fn: object
    tag: str


class TestFunctionFamily(tuple):
    """Tuple of :class:`TestFunction` with tags checked on construction."""

    __test__ = False

    def __new__(cls, members):
        members = tuple(members)
        for m in members:
            if m.tag not in (CONVEX, MINOR_AFFINE):
                raise ValueError(f"unknown test function tag {m.tag!r}")
        return super().__new__(cls, members)


def default_family(p=2.0, d=None):
    """Norm powers, a linear entry, the largest singular value and det.

    With ``d`` given, every ``k x k`` minor sum is added as well.
    """
    fam = [
        TestFunction(f"frobenius^{p:g}", lambda A: float(np.sum(A * A)) ** (p / 2), CONVEX),
        TestFunction("frobenius", lambda A: float(np.sqrt(np.sum(A * A))), CONVEX),
        TestFunction("spectral", lambda A: float(np.linalg.norm(A, 2)), CONVEX),
        TestFunction("entry_11", lambda A: float(A[0, 0]), MINOR_AFFINE),
        TestFunction("det", lambda A: float(np.linalg.det(A)), MINOR_AFFINE),
    ]
    if d is not None:
        for k in range(2, d):
            fam.append(
                TestFunction(
                    f"minor_sum_{k}",
                    lambda A, k=k: float(np.sum(minors(A, k))),
                    MINOR_AFFINE,
                )
            )
    return TestFunctionFamily(fam)


@dataclass(frozen=True)
class JensenReport:
    violations: tuple
    gaps: dict

    @property
    def ok(self):
        return not self.violations


def jensen_convex_check(nu, family=None, tol=1e-9):
    """Jensen's inequality for convex members, equality for minor-affine ones."""
    if family is None:
        family = default_family(d=nu.dim)
    w = nu.weights()
    mats = nu.matrices()
    bary = barycenter(nu)
    violations = []
    gaps = {}
    for member in family:
        at_bary = member.fn(bary)
        mean = float(np.dot(w, [member.fn(A) for A in mats]))
        scale = 1.0 + abs(at_bary) + abs(mean)
        if member.tag == CONVEX:
            gap = at_bary - mean
            bad = gap > tol * scale
        else:
            gap = abs(at_bary - mean)
            bad = gap > 1e-8 * scale
        gaps[member.name] = gap
        if bad:
            violations.append(member.name)
    return JensenReport(tuple(violations), gaps)


@dataclass(frozen=True)
class LaminateDiagnostics:
    dim: int
    p: float
    rate: float
    depth: int
    barycenter_err: float
    moment_p: float
    tightness_ratio: float
    support_residual: float
    bad_mass: Fraction
    minors_gap: float

    CSV_FIELDS = (
        "dim",
        "p",
        "rate",
        "depth",
        "barycenter_err",
        "moment_p",
        "tightness_ratio",
        "bad_mass",
        "minors_gap",
    )

    def row(self):
        return {
            "dim": self.dim,
            "p": repr(float(self.p)),
            "rate": repr(float(self.rate)),
            "depth": self.depth,
            "barycenter_err": repr(self.barycenter_err),
            "moment_p": repr(self.moment_p),
            "tightness_ratio": repr(self.tightness_ratio),
            "bad_mass": str(self.bad_mass),
            "minors_gap": repr(self.minors_gap),
        }


def diagnose(nu, p, spec=None):
    """Collect every check for one laminate."""
    M = nu.root
    if spec is None:
        spec = ConstraintSpec.exact(nu.rate, p, nu.dim) if 1 < p < nu.dim else None
    err = float(np.linalg.norm(barycenter(nu) - M))
    if spec is not None:
        tight = tightness_ratio(nu, M, spec, p)
        supp, _ = support_residual(nu, spec)
    else:
        viol = abs(np.linalg.det(M) - nu.rate)
        tight = moment_p(nu, M, p) / viol ** (p / nu.dim) if viol > 0 else 0.0
        dets = np.linalg.det(nu.matrices())
        good = [a.role != BAD for a in nu.atoms]
        supp = float(np.max(np.abs(dets[good] - nu.rate))) if any(good) else 0.0
    return LaminateDiagnostics(
        dim=nu.dim,
        p=float(p),
        rate=float(nu.rate),
        depth=nu.case_one_depth,
        barycenter_err=err,
        moment_p=moment_p(nu, M, p),
        tightness_ratio=float(tight),
        support_residual=float(supp),
        bad_mass=nu.bad_mass(),
        minors_gap=minors_consistency(nu),
    )


def rank_one_certificate(nu):
    """Largest rank-one defect over all split edges, relative to ``1 + |parent|``."""
    worst = 0.0
    for step in nu.tree:
        scale = 1.0 + float(np.linalg.norm(step.parent))
        for a, b in step.rank_one_edges():
            worst = max(worst, rank_one_defect(b - a) / scale)
    return worst


def case_one_count(nu):
    return sum(1 for s in nu.tree if s.case_tag == CASE_I)
