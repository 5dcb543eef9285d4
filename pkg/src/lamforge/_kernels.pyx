# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled small dense kernels (Jacobi SVD, LU determinant).

Same arithmetic as ``_fallback.py``; the two are checked against each other
in the test suite.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, copysign

from lamforge._fallback import SVDConvergenceError

cnp.import_array()

DEF MAXD = 8


cdef double _det_lu(double* a, int n) noexcept nogil:
    cdef int i, j, k, piv
    cdef double best, f, akk, tmp
    cdef double det = 1.0
    for k in range(n):
        piv = k
        best = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > best:
                best = fabs(a[i * n + k])
                piv = i
        if best == 0.0:
            return 0.0
        if piv != k:
            for j in range(n):
                tmp = a[k * n + j]
                a[k * n + j] = a[piv * n + j]
                a[piv * n + j] = tmp
            det = -det
        akk = a[k * n + k]
        det *= akk
        for i in range(k + 1, n):
            f = a[i * n + k] / akk
            if f != 0.0:
                for j in range(k + 1, n):
                    a[i * n + j] -= f * a[k * n + j]
    return det


def det_lu(m):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.array(m, dtype=np.float64, order="C")
    cdef int n = arr.shape[0]
    if n > MAXD:
        raise ValueError("dimension above kernel limit")
    cdef double buf[MAXD * MAXD]
    cdef int i, j
    for i in range(n):
        for j in range(n):
            buf[i * n + j] = arr[i, j]
    return _det_lu(buf, n)


def batch_det(ms):
    """Determinants of a stack ``(count, d, d)`` of matrices."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] arr = np.ascontiguousarray(ms, dtype=np.float64)
    cdef Py_ssize_t count = arr.shape[0]
    cdef int n = arr.shape[1]
    if n > MAXD:
        raise ValueError("dimension above kernel limit")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef double buf[MAXD * MAXD]
    cdef Py_ssize_t c
    cdef int i, j
    for c in range(count):
        for i in range(n):
            for j in range(n):
                buf[i * n + j] = arr[c, i, j]
        out[c] = _det_lu(buf, n)
    return out


cdef void _complete_basis(double* u, int* ok, int n) noexcept nogil:
    cdef int c, e, other, i, rep
    cdef double v[MAXD]
    cdef double dot, norm
    for c in range(n):
        if ok[c]:
            continue
        for e in range(n):
            for i in range(n):
                v[i] = 0.0
            v[e] = 1.0
            for rep in range(2):
                for other in range(n):
                    if ok[other]:
                        dot = 0.0
                        for i in range(n):
                            dot += u[i * n + other] * v[i]
                        for i in range(n):
                            v[i] -= dot * u[i * n + other]
            norm = 0.0
            for i in range(n):
                norm += v[i] * v[i]
            norm = sqrt(norm)
            if norm > 0.5:
                for i in range(n):
                    u[i * n + c] = v[i] / norm
                ok[c] = 1
                break


def signed_svd(m, double tol=1e-13, int max_sweeps=100):
    """One-sided Jacobi SVD; see ``_fallback.signed_svd``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.array(m, dtype=np.float64, order="C")
    cdef int n = arr.shape[0]
    if n > MAXD:
        raise ValueError("dimension above kernel limit")
    cdef double a[MAXD * MAXD]
    cdef double v[MAXD * MAXD]
    cdef double u[MAXD * MAXD]
    cdef double sig[MAXD]
    cdef int ok[MAXD]
    cdef int order[MAXD]
    cdef int i, j, p, q, sweeps, tmpi
    cdef double alpha, beta, gamma, zeta, t, c, s, aip, aiq, vip, viq
    cdef double off, rel, denom, scale, smax, zero_cut, tiny
    cdef bint converged

    scale = 0.0
    for i in range(n):
        for j in range(n):
            a[i * n + j] = arr[i, j]
            v[i * n + j] = 1.0 if i == j else 0.0
            if fabs(arr[i, j]) > scale:
                scale = fabs(arr[i, j])
    if scale == 0.0:
        return np.eye(n), np.zeros(n), np.eye(n), 0

    # work on a copy scaled to unit max entry so products cannot underflow
    for i in range(n * n):
        a[i] /= scale
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
                    aip = a[i * n + p]
                    aiq = a[i * n + q]
                    alpha += aip * aip
                    beta += aiq * aiq
                    gamma += aip * aiq
                if gamma == 0.0 or alpha <= tiny or beta <= tiny:
                    continue
                denom = sqrt(alpha * beta)
                rel = fabs(gamma) / denom if denom > 0.0 else 0.0
                if rel > off:
                    off = rel
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = copysign(1.0, zeta) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(n):
                    aip = a[i * n + p]
                    aiq = a[i * n + q]
                    a[i * n + p] = c * aip - s * aiq
                    a[i * n + q] = s * aip + c * aiq
                    vip = v[i * n + p]
                    viq = v[i * n + q]
                    v[i * n + p] = c * vip - s * viq
                    v[i * n + q] = s * vip + c * viq
        if off <= tol:
            converged = True
            break
    if not converged:
        raise SVDConvergenceError(off, sweeps)

    smax = 0.0
    for j in range(n):
        sig[j] = 0.0
        for i in range(n):
            sig[j] += a[i * n + j] * a[i * n + j]
        sig[j] = sqrt(sig[j])
        if sig[j] > smax:
            smax = sig[j]
    zero_cut = max(smax * n * 2.220446049250313e-16, 2.0 * sqrt(tiny))
    for j in range(n):
        ok[j] = 0
        for i in range(n):
            u[i * n + j] = 0.0
        if sig[j] > zero_cut:
            for i in range(n):
                u[i * n + j] = a[i * n + j] / sig[j]
            ok[j] = 1
    _complete_basis(u, ok, n)

    # stable insertion sort of indices by singular value
    for j in range(n):
        order[j] = j
    for j in range(1, n):
        tmpi = order[j]
        i = j - 1
        while i >= 0 and sig[order[i]] > sig[tmpi]:
            order[i + 1] = order[i]
            i -= 1
        order[i + 1] = tmpi

    P = np.empty((n, n))
    Q = np.empty((n, n))
    d = np.empty(n)
    cdef double[:, :] Pv = P
    cdef double[:, :] Qv = Q
    cdef double[:] dv = d
    for j in range(n):
        dv[j] = sig[order[j]]
        for i in range(n):
            Pv[i, j] = u[i * n + order[j]]
            Qv[i, j] = v[i * n + order[j]]

    cdef double pbuf[MAXD * MAXD]
    for i in range(n):
        for j in range(n):
            pbuf[i * n + j] = Pv[i, j]
    cdef bint sign_p = _det_lu(pbuf, n) < 0.0
    for i in range(n):
        for j in range(n):
            pbuf[i * n + j] = Qv[i, j]
    cdef bint sign_q = _det_lu(pbuf, n) < 0.0
    if sign_p != sign_q and dv[0] <= zero_cut:
        for i in range(n):
            Pv[i, 0] = -Pv[i, 0]
        sign_p = not sign_p
    if sign_p:
        for i in range(n):
            Pv[i, n - 1] = -Pv[i, n - 1]
        dv[n - 1] = -dv[n - 1]
    if sign_q:
        for i in range(n):
            Qv[i, n - 1] = -Qv[i, n - 1]
        dv[n - 1] = -dv[n - 1]
    return P, d * scale, Q, sweeps
