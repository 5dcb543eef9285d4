"""Determinant constraints: exact rate ``det A = r`` or interval ``J1 <= det A <= J2``.

Fields are either scalars or per-cell tables (1-d arrays indexed by cell id).
The growth exponent is fixed to ``q = d``, so the residual density of a cell
is ``max{R, 0} ** (p / d)``.
"""

from dataclasses import dataclass

import numpy as np

EXACT = "exact"
INTERVAL = "interval"


class ConstraintError(ValueError):
    """Invalid constraint specification (bad exponent, J1 > J2, ...)."""


def _field(value):
    if np.ndim(value) == 0:
        return float(value)
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1:
        raise ConstraintError("cell tables must be one-dimensional")
    return arr


@dataclass(frozen=True)
class ConstraintSpec:
    kind: str
    dim: int
    p: float
    rate: object = None
    lower: object = None
    upper: object = None

    def __post_init__(self):
        if self.kind not in (EXACT, INTERVAL):
            raise ConstraintError(f"unknown constraint kind {self.kind!r}")
        if not 2 <= self.dim <= 8:
            raise ConstraintError(f"dimension {self.dim} outside [2, 8]")
        if not 1.0 < self.p < self.dim:
            # the sublevel set of a quasiconvex R admits no strict superset
            # in its p-quasiconvex hull once p >= d
            raise ConstraintError(
                f"exponent p={self.p} must satisfy 1 < p < d={self.dim} "
                "(p < d is necessary for the relaxation to be nontrivial)"
            )
        if self.kind == EXACT:
            object.__setattr__(self, "rate", _field(self.rate))
            if not np.all(np.isfinite(self.rate)):
                raise ConstraintError("exact rate must be finite")
        else:
            lo = _field(-np.inf if self.lower is None else self.lower)
            hi = _field(np.inf if self.upper is None else self.upper)
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
            if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
                raise ConstraintError("interval bounds must not be NaN")
            if np.any(np.asarray(lo) == np.inf) or np.any(np.asarray(hi) == -np.inf):
                raise ConstraintError("J1 must be < +inf and J2 must be > -inf")
            if np.any(np.asarray(lo) > np.asarray(hi)):
                raise ConstraintError("interval requires J1 <= J2 cellwise")

    @classmethod
    def exact(cls, rate, p, dim):
        return cls(EXACT, int(dim), float(p), rate=rate)

    @classmethod
    def interval(cls, lower, upper, p, dim):
        return cls(INTERVAL, int(dim), float(p), lower=lower, upper=upper)

    @property
    def q(self):
        return self.dim

    def table_size(self):
        """Length of the per-cell tables, or ``None`` if all fields are scalars."""
        sizes = {
            np.shape(f)[0]
            for f in (self.rate, self.lower, self.upper)
            if f is not None and np.ndim(f) == 1
        }
        if len(sizes) > 1:
            raise ConstraintError("cell tables have inconsistent lengths")
        return sizes.pop() if sizes else None

    def _pick(self, field, cells):
        if np.ndim(field) == 0 or cells is None:
            return field
        return np.asarray(field)[cells]

    def at(self, cell):
        """Pointwise constraint (scalar fields) at one cell."""
        if self.kind == EXACT:
            return ConstraintSpec.exact(self._pick(self.rate, cell), self.p, self.dim)
        return ConstraintSpec.interval(
            self._pick(self.lower, cell), self._pick(self.upper, cell), self.p, self.dim
        )

    def violation(self, dets, cells=None):
        """``max{R(x, A), 0}`` from determinants (vectorized over cells)."""
        dets = np.asarray(dets, dtype=float)
        if self.kind == EXACT:
            return np.abs(dets - self._pick(self.rate, cells))
        lo = self._pick(self.lower, cells)
        hi = self._pick(self.upper, cells)
        with np.errstate(invalid="ignore"):
            below = np.where(np.isfinite(lo), lo - dets, -np.inf)
            above = np.where(np.isfinite(hi), dets - hi, -np.inf)
        return np.maximum(np.maximum(below, above), 0.0)

    def scale(self, cells=None):
        """Magnitude used by relative tolerances: ``1 + |J|``."""
        if self.kind == EXACT:
            return 1.0 + np.abs(self._pick(self.rate, cells))
        lo = np.abs(self._pick(self.lower, cells))
        hi = np.abs(self._pick(self.upper, cells))
        lo = np.where(np.isfinite(lo), lo, 0.0)
        hi = np.where(np.isfinite(hi), hi, 0.0)
        return 1.0 + np.maximum(lo, hi)

    def density(self, dets, cells=None):
        """Residual integrand ``max{R, 0} ** (p / d)``."""
        return self.violation(dets, cells) ** (self.p / self.dim)

    def target_rate(self, det, cell=None):
        """Rate the laminate should hit for a cell with determinant ``det``."""
        if self.kind == EXACT:
            return float(self._pick(self.rate, cell))
        return clamp_rate(det, self._pick(self.lower, cell), self._pick(self.upper, cell))


def clamp_rate(t, lower, upper):
    """Project ``t`` onto ``[lower, upper]``; infinite bounds are one-sided."""
    if lower > upper:
        raise ConstraintError(f"clamp requires J1 <= J2, got [{lower}, {upper}]")
    if t < lower:
        return float(lower)
    if t > upper:
        return float(upper)
    return float(t)
