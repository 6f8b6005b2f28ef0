# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_pykernels`` exactly in API and semantics."""

import numpy as np
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cdef double PIVOT_RTOL = 1e-12


cdef int _chol(double* A, int m, double rtol) noexcept nogil:
    """In-place lower Cholesky of the row-major m x m matrix A. 0 on success."""
    cdef int i, j, k
    cdef double s, dmax = 0.0
    for i in range(m):
        if A[i * m + i] > dmax:
            dmax = A[i * m + i]
    if dmax <= 0.0:
        return 1
    for j in range(m):
        s = A[j * m + j]
        for k in range(j):
            s -= A[j * m + k] * A[j * m + k]
        if s <= rtol * dmax:
            return 1
        s = sqrt(s)
        A[j * m + j] = s
        for i in range(j + 1, m):
            A[i * m + j] = A[i * m + j]
            for k in range(j):
                A[i * m + j] -= A[i * m + k] * A[j * m + k]
            A[i * m + j] /= s
    return 0


cdef void _chol_solve(double* L, int m, double* b) noexcept nogil:
    """Solve (L L^T) x = b in place."""
    cdef int i, k
    cdef double s
    for i in range(m):
        s = b[i]
        for k in range(i):
            s -= L[i * m + k] * b[k]
        b[i] = s / L[i * m + i]
    for i in range(m - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, m):
            s -= L[k * m + i] * b[k]
        b[i] = s / L[i * m + i]


def v1_grad(const double[:, ::1] P, const double[:, ::1] H, const double[:, ::1] R, bint want_grad=True):
    """Return ``(V1, grad)`` with grad = -4 [P_p^2 P H^T S^{-1}]^T.

    A singular innovation yields ``(inf, None)``.
    """
    cdef Py_ssize_t n = P.shape[0], m = H.shape[0]
    cdef Py_ssize_t i, j, k, a, b
    cdef double s, v1 = 0.0
    cdef double[:, ::1] PHt = np.empty((n, m))
    cdef double[:, ::1] K = np.empty((n, m))
    cdef double[:, ::1] Pp = np.empty((n, n))
    cdef double[:, ::1] T
    cdef double[:, ::1] G
    cdef double* A = <double*> malloc(m * m * sizeof(double))
    cdef double* row = <double*> malloc(m * sizeof(double))
    cdef int fail
    with nogil:
        for i in range(n):
            for a in range(m):
                s = 0.0
                for k in range(n):
                    s += P[i, k] * H[a, k]
                PHt[i, a] = s
        for a in range(m):
            for b in range(a, m):
                s = 0.0
                for i in range(n):
                    s += H[a, i] * PHt[i, b]
                s += 0.5 * (R[a, b] + R[b, a])
                A[a * m + b] = s
                A[b * m + a] = s
        fail = _chol(A, m, PIVOT_RTOL)
        if not fail:
            for i in range(n):
                for a in range(m):
                    row[a] = PHt[i, a]
                _chol_solve(A, m, row)
                for a in range(m):
                    K[i, a] = row[a]
            for i in range(n):
                for j in range(i, n):
                    s = 0.0
                    for a in range(m):
                        s += K[i, a] * PHt[j, a] + K[j, a] * PHt[i, a]
                    s = 0.5 * (P[i, j] + P[j, i]) - 0.5 * s
                    Pp[i, j] = s
                    Pp[j, i] = s
                    v1 += s * s if i == j else 2.0 * s * s
    free(A)
    free(row)
    if fail:
        return np.inf, None
    if not want_grad:
        return v1, None
    T = np.empty((n, m))
    G = np.empty((m, n))
    with nogil:
        # T = Pp K, then G = -4 (Pp T)^T
        for i in range(n):
            for a in range(m):
                s = 0.0
                for k in range(n):
                    s += Pp[i, k] * K[k, a]
                T[i, a] = s
        for i in range(n):
            for a in range(m):
                s = 0.0
                for k in range(n):
                    s += Pp[i, k] * T[k, a]
                G[a, i] = -4.0 * s
    return v1, np.asarray(G)


def v2_value(const double[:, ::1] H):
    cdef Py_ssize_t i, j
    cdef double h, s = 0.0
    for i in range(H.shape[0]):
        for j in range(H.shape[1]):
            h = H[i, j]
            s += h * h - h * h * h
    return 2.0 / 3.0 * s


def v2_flow(const double[:, ::1] H):
    """-H[(H o H)^T H - H^T (H o H)], evaluated as -(H C^T) H + (H H^T) C."""
    cdef Py_ssize_t m = H.shape[0], n = H.shape[1]
    cdef Py_ssize_t a, b, j
    cdef double s, t, h
    cdef double[:, ::1] HCt = np.empty((m, m))
    cdef double[:, ::1] HHt = np.empty((m, m))
    cdef double[:, ::1] out = np.empty((m, n))
    with nogil:
        for a in range(m):
            for b in range(m):
                s = 0.0
                t = 0.0
                for j in range(n):
                    h = H[b, j]
                    s += H[a, j] * h * h
                    t += H[a, j] * h
                HCt[a, b] = s
                HHt[a, b] = t
        for a in range(m):
            for j in range(n):
                s = 0.0
                for b in range(m):
                    h = H[b, j]
                    s += HHt[a, b] * h * h - HCt[a, b] * h
                out[a, j] = s
    return np.asarray(out)


cdef double _subset_value(const double[:, ::1] P, const double[:, ::1] P2, const double[:, ::1] P3,
                          const double[:, ::1] R, int* idx, int m, double normP2,
                          double* A, double* X, double* Y, double* col) noexcept nogil:
    cdef int a, b, c
    cdef double trY = 0.0, trXX = 0.0
    for a in range(m):
        for b in range(m):
            A[a * m + b] = P[idx[a], idx[b]] + 0.5 * (R[a, b] + R[b, a])
    if _chol(A, m, PIVOT_RTOL):
        return INFINITY
    # X = A^{-1} C and Y = A^{-1} D, column by column
    for b in range(m):
        for a in range(m):
            col[a] = P2[idx[a], idx[b]]
        _chol_solve(A, m, col)
        for a in range(m):
            X[a * m + b] = col[a]
        for a in range(m):
            col[a] = P3[idx[a], idx[b]]
        _chol_solve(A, m, col)
        trY += col[b]
    for a in range(m):
        for c in range(m):
            trXX += X[a * m + c] * X[c * m + a]
    return normP2 - 2.0 * trY + trXX


def subset_scan(const double[:, ::1] P, const double[:, ::1] P2, const double[:, ::1] P3,
                const double[:, ::1] R, int m, double tol):
    """Exhaustive V1 scan over all m-subsets of coordinates in lexicographic order.

    ``P2``, ``P3`` are P^2 and P^3. Returns ``(columns, value, count)`` where
    ``columns`` is the first subset whose value is within ``tol`` of the minimum.
    """
    cdef int n = P.shape[0]
    cdef int i, j, p
    cdef long count = 0
    cdef double v, best = INFINITY, normP2 = 0.0, winner_value = INFINITY
    cdef int found = 0
    cdef int* idx = <int*> malloc(m * sizeof(int))
    cdef double* A = <double*> malloc(m * m * sizeof(double))
    cdef double* X = <double*> malloc(m * m * sizeof(double))
    cdef double* Y = <double*> malloc(m * m * sizeof(double))
    cdef double* col = <double*> malloc(m * sizeof(double))
    result = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t[::1] res = result
    with nogil:
        for i in range(n):
            for j in range(n):
                normP2 += P[i, j] * P[i, j]
        for p in range(2):
            for i in range(m):
                idx[i] = i
            while True:
                v = _subset_value(P, P2, P3, R, idx, m, normP2, A, X, Y, col)
                if p == 0:
                    count += 1
                    if v < best:
                        best = v
                elif v <= best + tol:
                    for i in range(m):
                        res[i] = idx[i]
                    winner_value = v
                    found = 1
                    break
                # next combination in lexicographic order
                i = m - 1
                while i >= 0 and idx[i] == n - m + i:
                    i -= 1
                if i < 0:
                    break
                idx[i] += 1
                for j in range(i + 1, m):
                    idx[j] = idx[j - 1] + 1
            if best == INFINITY:
                break
    free(idx)
    free(A)
    free(X)
    free(Y)
    free(col)
    if not found:
        return None, INFINITY, count
    return result, winner_value, count
