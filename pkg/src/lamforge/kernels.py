"""Kernel selection: compiled extension when importable, else pure Python.

Set ``LAMFORGE_PURE=1`` to force the fallback (used by the benchmark and the
parity tests).
"""

import os
import warnings

from lamforge import _fallback
from lamforge._fallback import SVD_MAX_SWEEPS, SVD_TOL, SVDConvergenceError

BACKEND = "python"
_impl = _fallback

if not os.environ.get("LAMFORGE_PURE"):
    try:
        from lamforge import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build environment
        warnings.warn(
            "lamforge compiled kernels unavailable; using the pure-Python fallback",
            RuntimeWarning,
            stacklevel=2,
        )
    else:
        _impl = _compiled
        BACKEND = "cython"

det_lu = _impl.det_lu
batch_det = _impl.batch_det
jacobi_signed_svd = _impl.signed_svd

__all__ = [
    "BACKEND",
    "SVDConvergenceError",
    "SVD_MAX_SWEEPS",
    "SVD_TOL",
    "batch_det",
    "det_lu",
    "jacobi_signed_svd",
]
