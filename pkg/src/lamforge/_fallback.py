"""Pure-Python versions of the small dense kernels.

These mirror ``_kernels.pyx`` line for line and are used when the compiled
extension is not importable.  They operate on nested lists internally so that
the two implementations share the exact same arithmetic order.
"""

import math

import numpy as np

SVD_TOL = 1e-13
SVD_MAX_SWEEPS = 100


class SVDConvergenceError(RuntimeError):
    """Raised when Jacobi sweeps fail to orthogonalize within the sweep cap."""

    def __init__(self, residual, sweeps):
        super().__init__(
            f"Jacobi SVD did not converge after {sweeps} sweeps "
            f"(off-diagonal residual {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


def det_lu(m):
    a = [list(map(float, row)) for row in np.asarray(m, dtype=float)]
    n = len(a)
    det = 1.0
    for k in range(n):
        piv = k
        best = abs(a[k][k])
        for i in range(k + 1, n):
            if abs(a[i][k]) > best:
                best = abs(a[i][k])
                piv = i
        if best == 0.0:
            return 0.0
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            det = -det
        akk = a[k][k]
        det *= akk
        for i in range(k + 1, n):
            f = a[i][k] / akk
            if f != 0.0:
                row_i = a[i]
                row_k = a[k]
                for j in range(k + 1, n):
                    row_i[j] -= f * row_k[j]
    return det


def _det_small(a):
    # determinant of a list-of-lists orthogonal matrix; only its sign is used
    return det_lu(a)


def _complete_basis(u, ok, n):
    """Fill columns of ``u`` flagged not ``ok`` with an orthonormal complement."""
    for c in range(n):
        if ok[c]:
            continue
        for e in range(n):
            v = [0.0] * n
            v[e] = 1.0
            for other in range(n):
                if ok[other]:
                    dot = sum(u[i][other] * v[i] for i in range(n))
                    for i in range(n):
                        v[i] -= dot * u[i][other]
            for other in range(n):
                if ok[other]:
                    dot = sum(u[i][other] * v[i] for i in range(n))
                    for i in range(n):
                        v[i] -= dot * u[i][other]
            norm = math.sqrt(sum(x * x for x in v))
            if norm > 0.5:
                for i in range(n):
                    u[i][c] = v[i] / norm
                ok[c] = True
                break


def signed_svd(m, tol=SVD_TOL, max_sweeps=SVD_MAX_SWEEPS):
    """One-sided Jacobi SVD with the orientation folded into the last entry.

    Returns ``(P, diag, Q, sweeps)`` with ``P`` and ``Q`` in SO(d), ``diag``
    sorted by modulus ascending and ``m == P @ diag(diag) @ Q.T``.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    a = [list(map(float, row)) for row in m]
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]

    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale = max(scale, abs(a[i][j]))
    if scale == 0.0:
        eye = np.eye(n)
        return eye.copy(), np.zeros(n), eye.copy(), 0

    # work on a copy scaled to unit max entry so products cannot underflow
    a = [[x / scale for x in row] for row in a]
    # columns this small are rounding noise; their mutual angle is meaningless
    tiny = (4.0 * n * 2.220446049250313e-16) ** 2
    sweeps = 0
    converged = False
    off = 0.0
    while sweeps < max_sweeps:
        sweeps += 1
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(n):
                    aip = a[i][p]
                    aiq = a[i][q]
                    alpha += aip * aip
                    beta += aiq * aiq
                    gamma += aip * aiq
                if gamma == 0.0 or alpha <= tiny or beta <= tiny:
                    continue
                denom = math.sqrt(alpha * beta)
                rel = abs(gamma) / denom if denom > 0.0 else 0.0
                if rel > off:
                    off = rel
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for i in range(n):
                    aip = a[i][p]
                    aiq = a[i][q]
                    a[i][p] = c * aip - s * aiq
                    a[i][q] = s * aip + c * aiq
                    vip = v[i][p]
                    viq = v[i][q]
                    v[i][p] = c * vip - s * viq
                    v[i][q] = s * vip + c * viq
        if off <= tol:
            converged = True
            break
    if not converged:
        raise SVDConvergenceError(off, sweeps)

    sig = [math.sqrt(sum(a[i][j] * a[i][j] for i in range(n))) for j in range(n)]
    smax = max(sig)
    zero_cut = max(smax * n * 2.220446049250313e-16, 2.0 * math.sqrt(tiny))
    u = [[0.0] * n for _ in range(n)]
    ok = [False] * n
    for j in range(n):
        if sig[j] > zero_cut:
            for i in range(n):
                u[i][j] = a[i][j] / sig[j]
            ok[j] = True
    _complete_basis(u, ok, n)

    order = sorted(range(n), key=lambda j: (sig[j], j))
    P = [[u[i][j] for j in order] for i in range(n)]
    Q = [[v[i][j] for j in order] for i in range(n)]
    d = [sig[j] for j in order]

    sign_p = _det_small(P) < 0.0
    sign_q = _det_small(Q) < 0.0
    if sign_p != sign_q and d[0] <= zero_cut:
        # singular input: orientation is free, keep the diagonal nonnegative
        for i in range(n):
            P[i][0] = -P[i][0]
        sign_p = not sign_p
    if sign_p:
        for i in range(n):
            P[i][n - 1] = -P[i][n - 1]
        d[n - 1] = -d[n - 1]
    if sign_q:
        for i in range(n):
            Q[i][n - 1] = -Q[i][n - 1]
        d[n - 1] = -d[n - 1]
    return np.array(P), np.array(d) * scale, np.array(Q), sweeps


def batch_det(ms):
    """Determinants of a stack ``(count, d, d)`` of matrices."""
    ms = np.asarray(ms, dtype=float)
    return np.array([det_lu(m) for m in ms], dtype=float)
