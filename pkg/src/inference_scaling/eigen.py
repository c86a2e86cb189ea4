"""Dense symmetric eigensolvers.

Two routes, chosen by size:

* cyclic Jacobi rotations for n <= 512 (slow per flop but very accurate on
  small eigenvalues, which is what power-law tails need);
* Householder tridiagonalization followed by implicit QL with Wilkinson
  shifts for larger n.

All inner loops are numba kernels.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import DomainError

JACOBI_MAX_N = 512
SYMMETRY_RTOL = 1e-10


@njit(cache=True)
def _jacobi_kernel(a, max_sweeps):
    n = a.shape[0]
    vt = np.eye(n)
    eps = 2.220446049250313e-16
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        total = 0.0
        for p in range(n):
            total += a[p, p] * a[p, p]
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        total += off
        if off <= (eps * eps) * total or off == 0.0:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                # skip rotations that cannot change the diagonal in floating point
                if sweep > 3 and abs(apq) < eps * 1e-3 * math.sqrt(abs(app * aqq)):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # rows p and q are contiguous; columns are mirrored afterwards
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    a[k, p] = a[p, k]
                    a[k, q] = a[q, k]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vpk = vt[p, k]
                    vqk = vt[q, k]
                    vt[p, k] = c * vpk - s * vqk
                    vt[q, k] = s * vpk + c * vqk
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, vt, sweeps


@njit(cache=True)
def _tql_kernel(d, e, zt, want_vectors, max_iter):
    """Implicit QL on a symmetric tridiagonal (d, e), e[i] = T[i+1, i].

    Rotations are accumulated into the rows of ``zt`` (eigenvectors are its
    rows on exit). Returns False if some eigenvalue needed more than
    ``max_iter`` iterations.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                return False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(n):
                        f = zt[i + 1, k]
                        zt[i + 1, k] = s * zt[i, k] + c * f
                        zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return True


@njit(cache=True)
def _householder_kernel(a, want_q):
    """Reduce symmetric ``a`` (overwritten) to tridiagonal form, ``a = Q T Q^T``.

    The full trailing block is updated so every inner loop walks a
    contiguous row.
    """
    n = a.shape[0]
    e = np.zeros(n)
    vs = np.zeros((max(n - 2, 1), n))
    has_v = np.zeros(max(n - 2, 1), dtype=np.bool_)
    p = np.empty(n)
    w = np.empty(n)
    for k in range(n - 2):
        lo = k + 1
        xnorm = 0.0
        for i in range(lo, n):
            xnorm += a[k, i] * a[k, i]
        xnorm = math.sqrt(xnorm)
        if xnorm == 0.0:
            e[k] = 0.0
            continue
        alpha = -xnorm if a[k, lo] >= 0.0 else xnorm
        v = vs[k]
        for i in range(lo, n):
            v[i] = a[k, i]
        v[lo] -= alpha
        vnorm = 0.0
        for i in range(lo, n):
            vnorm += v[i] * v[i]
        vnorm = math.sqrt(vnorm)
        for i in range(lo, n):
            v[i] /= vnorm
        has_v[k] = True
        vp = 0.0
        for i in range(lo, n):
            acc = 0.0
            for j in range(lo, n):
                acc += a[i, j] * v[j]
            p[i] = acc
            vp += v[i] * acc
        for i in range(lo, n):
            w[i] = 2.0 * (p[i] - vp * v[i])
        for i in range(lo, n):
            vi = v[i]
            wi = w[i]
            for j in range(lo, n):
                a[i, j] -= vi * w[j] + wi * v[j]
        e[k] = alpha
    if n >= 2:
        e[n - 2] = a[n - 1, n - 2]
    d = np.empty(n)
    for i in range(n):
        d[i] = a[i, i]
    q = np.eye(n)
    if want_q:
        r = np.empty(n)
        for k in range(n - 3, -1, -1):
            if not has_v[k]:
                continue
            v = vs[k]
            lo = k + 1
            for j in range(lo, n):
                r[j] = 0.0
            for i in range(lo, n):
                vi = v[i]
                for j in range(lo, n):
                    r[j] += vi * q[i, j]
            for i in range(lo, n):
                f = 2.0 * v[i]
                for j in range(lo, n):
                    q[i, j] -= f * r[j]
    return d, e, q


def _householder_tridiagonal(a: np.ndarray, want_q: bool):
    return _householder_kernel(np.array(a, dtype=float, order="C", copy=True), want_q)


def check_symmetric(matrix, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if m.size and np.max(np.abs(m - m.T)) > rtol * max(scale, np.finfo(float).tiny):
        raise DomainError("matrix is not symmetric within tolerance")
    return m


def jacobi_eigh(matrix, max_sweeps: int = 60):
    m = check_symmetric(matrix)
    a = 0.5 * (m + m.T)
    w, vt, _ = _jacobi_kernel(np.ascontiguousarray(a), max_sweeps)
    return w, vt.T


def tridiagonal_ql_eigh(matrix, vectors: bool = True, max_iter: int = 60):
    m = check_symmetric(matrix)
    n = m.shape[0]
    a = 0.5 * (m + m.T)
    d, e, q = _householder_tridiagonal(a, want_q=vectors)
    zt = np.eye(n) if vectors else np.zeros((1, 1))
    if not _tql_kernel(d, e, zt, vectors, max_iter):
        raise DomainError("implicit QL failed to converge")
    if not vectors:
        return d, None
    return d, q @ zt.T


def symmetric_eigh(matrix, vectors: bool = True, method: str = "auto"):
    """Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.

    Returns ``(w, V)`` with ``M ~ V diag(w) V^T``; ``V`` is None when
    ``vectors`` is False and the QL route is taken.
    """
    m = check_symmetric(matrix)
    n = m.shape[0]
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_N else "ql"
    if method == "jacobi":
        w, v = jacobi_eigh(m)
    elif method == "ql":
        w, v = tridiagonal_ql_eigh(m, vectors=vectors)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = np.argsort(-w, kind="stable")
    w = w[order]
    if v is not None:
        v = v[:, order]
    return w, v
