"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used when
the extension is not built or ``GLOVEDESIGN_PURE_PYTHON=1`` is set.
"""

import itertools

import numpy as np

# Cholesky pivots below this fraction of the largest diagonal entry count as singular.
PIVOT_RTOL = 1e-12
CHUNK = 1 << 15


def v1_grad(P, H, R, want_grad=True):
    """Return ``(V1, grad)`` with grad = -4 [P_p^2 P H^T S^{-1}]^T.

    A singular innovation yields ``(inf, None)``.
    """
    PHt = P @ H.T
    A = H @ PHt + R
    A = 0.5 * (A + A.T)
    d = np.diag(A)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return np.inf, None
    if np.min(np.diag(L)) ** 2 <= PIVOT_RTOL * max(d.max(), 0.0):
        return np.inf, None
    # K = P H^T A^{-1}
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    Pp = P - K @ PHt.T
    v1 = float(np.sum(Pp * Pp))
    if not want_grad:
        return v1, None
    return v1, -4.0 * (Pp @ (Pp @ K)).T


def v2_value(H):
    return float(2.0 / 3.0 * np.sum(H * H - H * H * H))


def v2_flow(H):
    """-H[(H o H)^T H - H^T (H o H)], evaluated as -(H C^T) H + (H H^T) C."""
    C = H * H
    return (H @ H.T) @ C - (H @ C.T) @ H


def _subset_values(P, P2, P3, R, idx):
    Ix = idx[:, :, None], idx[:, None, :]
    A = P[Ix] + R
    C = P2[Ix]
    D = P3[Ix]
    ev = np.linalg.eigvalsh(A)
    bad = ~(ev[:, 0] > PIVOT_RTOL * np.maximum(ev[:, -1], 0.0))
    A[bad] = np.eye(A.shape[1])
    X = np.linalg.solve(A, C)
    Y = np.linalg.solve(A, D)
    v = (np.sum(P * P) - 2.0 * np.trace(Y, axis1=1, axis2=2)
         + np.einsum("kij,kji->k", X, X))
    v[bad] = np.inf
    return v


def subset_scan(P, P2, P3, R, m, tol):
    """Exhaustive V1 scan over all m-subsets of coordinates in lexicographic order.

    ``P2``, ``P3`` are P^2 and P^3. Returns ``(columns, value, count)`` where
    ``columns`` is the first subset whose value is within ``tol`` of the minimum.
    """
    n = P.shape[0]
    values = []
    it = itertools.combinations(range(n), m)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, CHUNK)),
                            dtype=np.intp)
        if block.size == 0:
            break
        values.append(_subset_values(P, P2, P3, R, block.reshape(-1, m)))
    v = np.concatenate(values)
    best = v.min()
    if not np.isfinite(best):
        return None, np.inf, v.size
    first = int(np.argmax(v <= best + tol))
    cols = next(itertools.islice(itertools.combinations(range(n), m), first, None))
    return np.array(cols, dtype=np.intp), float(v[first]), v.size
