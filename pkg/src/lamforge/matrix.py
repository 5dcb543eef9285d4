"""Small dense matrix kernel: determinants, norms, signed SVD, rank-one defect.

Matrices are plain ``numpy`` arrays of shape ``(d, d)`` with ``2 <= d <= 8``.
"""

from dataclasses import dataclass

import numpy as np

from lamforge import kernels
from lamforge.kernels import SVDConvergenceError

MIN_DIM = 2
MAX_DIM = 8

__all__ = [
    "SVDConvergenceError",
    "SignedSVD",
    "as_matrix",
    "determinant",
    "frobenius_norm",
    "rank_one_defect",
    "signed_svd",
]


def as_matrix(m, *, min_dim=MIN_DIM, max_dim=MAX_DIM):
    """Validate and return ``m`` as a float ``(d, d)`` array."""
    arr = np.array(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    d = arr.shape[0]
    if not min_dim <= d <= max_dim:
        raise ValueError(f"matrix dimension {d} outside [{min_dim}, {max_dim}]")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


@dataclass(frozen=True)
class SignedSVD:
    """``M = P @ diag(diag) @ Q.T`` with ``P, Q`` in SO(d).

    ``diag`` is sorted by modulus ascending; only its last entry may be
    negative, and it carries the sign of ``det M``.
    """

    P: np.ndarray
    diag: np.ndarray
    Q: np.ndarray
    sweeps: int = 0

    @property
    def dim(self):
        return self.diag.shape[0]

    def reconstruct(self):
        return (self.P * self.diag) @ self.Q.T

    def tail_product(self):
        """Product of the moduli of all but the two smallest entries."""
        return float(np.prod(np.abs(self.diag[2:])))


def determinant(m):
    return kernels.det_lu(as_matrix(m))


def frobenius_norm(m):
    arr = as_matrix(m)
    return float(np.sqrt(np.sum(arr * arr)))


def signed_svd(m):
    """Signed singular value decomposition via one-sided Jacobi rotations.

    Raises
    ------
    SVDConvergenceError
        If the off-diagonal mass is still above tolerance after the sweep cap.
    """
    P, d, Q, sweeps = kernels.jacobi_signed_svd(as_matrix(m))
    return SignedSVD(P, d, Q, sweeps)


def rank_one_defect(delta):
    """Second largest singular value; zero exactly when ``rank(delta) <= 1``."""
    s = np.abs(signed_svd(delta).diag)
    return float(s[-2])
