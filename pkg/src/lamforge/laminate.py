"""Rank-one splitting calculus and the recursive laminate builder.

A matrix ``M`` is brought to signed diagonal form ``D = diag(s1, ..., +-sd)``
and split either

* (case I) four ways, ``D +- g e1(x)e2 +- g e2(x)e1`` with weights 1/4, which
  puts two children on ``det = r`` and two on ``det = 2 det D - r``; or
* (case II) two ways, ``D +- delta e3(x)e3`` with weights 1/2, which lifts the
  third singular value so that case I applies to both halves.

Bad children are split again until the requested case I depth is reached; the
mass left off ``{det = r}`` after ``k`` case I levels is exactly ``2**-k``.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from lamforge.constraints import EXACT, ConstraintSpec, clamp_rate
from lamforge import kernels
from lamforge.matrix import SignedSVD, as_matrix

CASE_I = "CaseI"
CASE_II = "CaseII"
GOOD = "good"
BAD = "bad"
CONTINUE = "continue"

DEFAULT_DEPTH = 8
MAX_DEPTH = 60
# a node whose determinant is this close (relative) to the rate is kept whole
DIRAC_RTOL = 1e-12
# relative slack on the case I threshold; case I is valid whenever the tail
# product is positive, so rounding is resolved in its favour
THRESHOLD_RTOL = 1e-12
THRESHOLD_RULE = "threshold"
CASE_ONE_RULE = "case-one"


class LaminateError(RuntimeError):
    """A construction invariant was violated (should be unreachable)."""


@dataclass
class Child:
    weight: Fraction
    matrix: np.ndarray
    role: str
    signs: tuple
    next: int | None = None


@dataclass
class SplitStep:
    """One node of the split tree.

    ``children[i].matrix == parent + magnitude * sum_j signs[j] * a_j (x) n_j``
    with ``(a_j, n_j) = directions[j]``; case I is two successive rank-one
    splits, the first along ``directions[0]``.
    """

    parent: np.ndarray
    case_tag: str
    magnitude: float
    children: list
    directions: list
    level: int = 0

    def intermediates(self):
        """Matrices after the first rank-one stage (case I only)."""
        if self.case_tag != CASE_I:
            return []
        a, n = self.directions[0]
        return [self.parent + s * self.magnitude * np.outer(a, n) for s in (1.0, -1.0)]

    def rank_one_edges(self):
        """All ``(from, to)`` pairs of the split, each a rank-one segment."""
        if self.case_tag == CASE_II:
            return [(self.parent, c.matrix) for c in self.children]
        a, n = self.directions[0]
        edges = []
        for c in self.children:
            mid = self.parent + c.signs[0] * self.magnitude * np.outer(a, n)
            edges.append((self.parent, mid))
            edges.append((mid, c.matrix))
        return edges


@dataclass
class Atom:
    weight: Fraction
    matrix: np.ndarray
    role: str


@dataclass
class DiscreteLaminate:
    root: np.ndarray
    rate: float
    case_one_depth: int
    atoms: list
    tree: list = field(default_factory=list)

    @property
    def dim(self):
        return self.root.shape[0]

    @property
    def is_dirac(self):
        return not self.tree

    def bad_mass(self):
        return sum((a.weight for a in self.atoms if a.role == BAD), Fraction(0))

    def total_mass(self):
        return sum((a.weight for a in self.atoms), Fraction(0))

    def weights(self):
        return np.array([float(a.weight) for a in self.atoms])

    def matrices(self):
        return np.array([a.matrix for a in self.atoms])

    def roles(self):
        return [a.role for a in self.atoms]


def _tail(diag):
    return float(math.prod(abs(x) for x in diag[2:].tolist()))


def case_threshold(r, d):
    return (abs(r) / 2.0) ** ((d - 2) / d)


def classify_case(S, r, rule=THRESHOLD_RULE):
    """Pick the split for a signed SVD.

    With ``rule="threshold"``: ``CaseI`` iff the product of all but the two
    smallest singular values reaches ``(|r|/2) ** ((d-2)/d)`` (equality counts
    as case I).  With ``rule="case-one"``: ``CaseI`` whenever that product is
    positive, which is all the case I algebra needs.
    """
    tail = _tail(S.diag)
    if rule == CASE_ONE_RULE:
        return CASE_I if tail > 0.0 else CASE_II
    if rule != THRESHOLD_RULE:
        raise ValueError(f"unknown case rule {rule!r}")
    thr = case_threshold(r, S.dim)
    return CASE_I if tail >= thr * (1.0 - THRESHOLD_RTOL) else CASE_II


def _case_one_frame(diag, r):
    d = diag.shape[0]
    D = np.diag(diag)
    det = float(math.prod(diag.tolist()))
    tail = _tail(diag)
    gap = abs(r - det)
    gamma = math.sqrt(gap / tail) if tail > 0.0 and gap > 0.0 else 0.0
    e12 = np.zeros((d, d))
    e12[0, 1] = 1.0
    e21 = np.zeros((d, d))
    e21[1, 0] = 1.0
    kids = []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            kids.append(((s1, s2), D + gamma * (s1 * e12 + s2 * e21)))
    return gamma, kids


def _label_case_one(kids, gamma, r):
    if gamma == 0.0:
        return [GOOD] * 4
    # det along the block is det D -+ gamma**2 * signed tail: exactly two hit r
    errs = [abs(_block_det(m) - r) for _, m in kids]
    order = sorted(range(4), key=lambda i: (errs[i], i))
    roles = [BAD] * 4
    for i in order[:2]:
        roles[i] = GOOD
    return roles


def _block_det(m):
    # frame children are block diagonal: 2x2 block times the diagonal tail
    return (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) * float(math.prod(m.diagonal()[2:].tolist()))


def _conj(P, B, Q):
    return P @ B @ Q.T


def split_case_one(S, r, *, level=0):
    """Four-way split of ``S.reconstruct()`` onto ``det = r`` / ``det = 2 det - r``."""
    gamma, kids = _case_one_frame(S.diag, r)
    roles = _label_case_one(kids, gamma, r)
    P, Q = S.P, S.Q
    parent = S.reconstruct()
    children = [
        Child(Fraction(1, 4), _conj(P, m, Q), role, signs)
        for (signs, m), role in zip(kids, roles)
    ]
    dirs = [(P[:, 0].copy(), Q[:, 1].copy()), (P[:, 1].copy(), Q[:, 0].copy())]
    return SplitStep(parent, CASE_I, gamma, children, dirs, level)


def _case_two_frame(diag, r):
    d = diag.shape[0]
    if d < 3:
        raise LaminateError("case II does not occur for d = 2")
    if r == 0.0:
        raise LaminateError("case II with r = 0 is unreachable (threshold is 0)")
    delta = 2.0 * (abs(r) / 2.0) ** (1.0 / d)
    D = np.diag(diag)
    e33 = np.zeros((d, d))
    e33[2, 2] = 1.0
    return delta, [((1.0,), D + delta * e33), ((-1.0,), D - delta * e33)]


def split_case_two(S, r, *, level=0):
    """Two-way split lifting the third signed singular value by ``+-delta``."""
    delta, kids = _case_two_frame(S.diag, r)
    P, Q = S.P, S.Q
    children = [Child(Fraction(1, 2), _conj(P, m, Q), CONTINUE, signs) for signs, m in kids]
    dirs = [(P[:, 2].copy(), Q[:, 2].copy())]
    return SplitStep(S.reconstruct(), CASE_II, delta, children, dirs, level)


def depth_for_tolerance(bad_mass_tol):
    if not 0.0 < bad_mass_tol <= 1.0:
        raise ValueError("bad_mass_tol must lie in (0, 1]")
    k = 0
    while 2.0 ** (-k) > bad_mass_tol:
        k += 1
    return k


def _is_on_rate(det, r):
    return abs(det - r) <= DIRAC_RTOL * (1.0 + abs(r) + abs(det))


def build_laminate(M, r, k=DEFAULT_DEPTH, *, bad_mass_tol=None, case_rule=THRESHOLD_RULE):
    """Finite laminate with barycenter ``M``, good atoms on ``det = r``.

    Parameters
    ----------
    M : array_like, shape (d, d)
    r : float
        Target determinant.
    k : int
        Number of case I levels; ignored when ``bad_mass_tol`` is given, in
        which case the smallest ``k`` with ``2**-k <= bad_mass_tol`` is used.
    case_rule : {"threshold", "case-one"}
        How :func:`classify_case` chooses between the two splits.

    Every node (root, bad and continue children) is re-decomposed with
    :func:`signed_svd` and re-classified before it is split.  The recursion
    runs in the node's own frame and the rotations are composed, which is
    algebraically the same as decomposing the conjugated child.
    """
    M = as_matrix(M)
    r = float(r)
    if bad_mass_tol is not None:
        k = depth_for_tolerance(bad_mass_tol)
    k = int(k)
    if k < 0:
        raise ValueError("depth must be nonnegative")
    if k > MAX_DEPTH:
        raise ValueError(f"depth {k} exceeds {MAX_DEPTH} (dyadic weight underflow)")
    d = M.shape[0]

    atoms = []
    tree = []
    root_det = float(np.linalg.det(M))
    if _is_on_rate(root_det, r):
        return DiscreteLaminate(M, r, k, [Atom(Fraction(1), M.copy(), GOOD)], [])

    eye = np.eye(d)
    # stack items: (P, frame matrix, Q, weight, remaining depth, case II run, level,
    #               (parent step index, child slot))
    stack = [(eye, M, eye, Fraction(1), k, 0, 0, None)]
    while stack:
        P0, B, Q0, w, remaining, run, level, link = stack.pop()
        # frame matrices are produced here and always finite, so skip validation
        P1, diag, Q1, sweeps = kernels.jacobi_signed_svd(B)
        P = P0 @ P1
        Q = Q0 @ Q1
        S = SignedSVD(P, diag, Q, sweeps)
        det = float(math.prod(diag.tolist()))
        matrix = _conj(P0, B, Q0)
        if link is not None and _is_on_rate(det, r):
            tree[link[0]].children[link[1]].role = GOOD
            atoms.append(Atom(w, matrix, GOOD))
            continue
        if remaining == 0:
            atoms.append(Atom(w, matrix, BAD))
            continue

        idx = len(tree)
        if link is not None:
            tree[link[0]].children[link[1]].next = idx
        if classify_case(S, r, case_rule) == CASE_I:
            gamma, kids = _case_one_frame(S.diag, r)
            roles = _label_case_one(kids, gamma, r)
            children = [
                Child(Fraction(1, 4), _conj(P, m, Q), role, signs)
                for (signs, m), role in zip(kids, roles)
            ]
            dirs = [(P[:, 0].copy(), Q[:, 1].copy()), (P[:, 1].copy(), Q[:, 0].copy())]
            tree.append(SplitStep(matrix, CASE_I, gamma, children, dirs, level))
            pending = []
            for slot, ((_, m), child) in enumerate(zip(kids, children)):
                cw = w * child.weight
                if child.role == GOOD:
                    atoms.append(Atom(cw, child.matrix, GOOD))
                else:
                    pending.append((P, m, Q, cw, remaining - 1, 0, level + 1, (idx, slot)))
        else:
            if run >= d - 2:
                raise LaminateError(
                    f"more than d - 2 = {d - 2} consecutive case II splits on one branch"
                )
            delta, kids = _case_two_frame(S.diag, r)
            children = [Child(Fraction(1, 2), _conj(P, m, Q), CONTINUE, signs) for signs, m in kids]
            dirs = [(P[:, 2].copy(), Q[:, 2].copy())]
            tree.append(SplitStep(matrix, CASE_II, delta, children, dirs, level))
            pending = [
                (P, m, Q, w * Fraction(1, 2), remaining, run + 1, level, (idx, slot))
                for slot, (_, m) in enumerate(kids)
            ]
        # reversed so children are expanded in index order
        stack.extend(reversed(pending))

    return DiscreteLaminate(M, r, k, atoms, tree)


def laminate_for_constraint(
    M, spec, k=DEFAULT_DEPTH, *, bad_mass_tol=None, case_rule=THRESHOLD_RULE
):
    """Laminate for a pointwise constraint (scalar fields).

    Interval constraints first clamp ``det M`` into ``[J1, J2]``; if it is
    already inside, the result is the Dirac mass at ``M``.
    """
    M = as_matrix(M)
    if spec.kind == EXACT:
        return build_laminate(
            M, float(spec.rate), k, bad_mass_tol=bad_mass_tol, case_rule=case_rule
        )
    det = float(np.linalg.det(M))
    r = clamp_rate(det, float(spec.lower), float(spec.upper))
    if r == det:
        kk = depth_for_tolerance(bad_mass_tol) if bad_mass_tol is not None else int(k)
        return DiscreteLaminate(M, r, kk, [Atom(Fraction(1), M.copy(), GOOD)], [])
    return build_laminate(M, r, k, bad_mass_tol=bad_mass_tol, case_rule=case_rule)


__all__ = [
    "Atom",
    "CASE_I",
    "CASE_II",
    "CASE_ONE_RULE",
    "THRESHOLD_RULE",
    "Child",
    "ConstraintSpec",
    "DiscreteLaminate",
    "LaminateError",
    "SplitStep",
    "build_laminate",
    "case_threshold",
    "clamp_rate",
    "classify_case",
    "laminate_for_constraint",
    "split_case_one",
    "split_case_two",
]
