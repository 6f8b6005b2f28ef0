"""Discrete (single-coordinate) sensor design: exhaustive subset search, the
permutation penalty and its flow, and the combined penalized V1 flow."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .continuous import canonical_tangent
from .errors import BudgetError, DegenerateDesignError, NumericalError, ShapeError
from .estimator import MeasurementDesign, NoiseModel, selection_matrix, v1_cost
from .flow import (DesignResult, FlowOptions, descend, k_schedule, multi_start,
                   orthonormalize_rows, random_orthonormal, row_violation)
from .prior import PriorModel

DEFAULT_BUDGET = 10 ** 7
ROUNDING_THRESHOLD = 0.05
# Subsets whose V1 differs by less than this fraction of ||P_o||_F^2 are ties.
TIE_RTOL = 1e-12


@dataclass
class SelectionDesign:
    """A selection of m distinct coordinates.

    ``indices`` are 1-based and ordered like the rows of ``design``.
    """

    indices: tuple[int, ...]
    design: MeasurementDesign
    v1: float | None = None
    residual: float = 0.0
    result: DesignResult | None = None

    @property
    def columns(self) -> tuple[int, ...]:
        return tuple(i - 1 for i in self.indices)


def _noise_matrix(noise, m: int) -> np.ndarray:
    """Accept None, an m x m matrix/NoiseModel, or a length-m variance vector."""
    if noise is None:
        return np.zeros((m, m))
    if isinstance(noise, NoiseModel):
        R = noise.cov
    else:
        R = np.asarray(noise, dtype=float)
        if R.ndim == 1:
            R = np.diag(R)
    if R.shape != (m, m):
        raise ShapeError(f"noise covariance {R.shape} does not match m={m}")
    return np.ascontiguousarray(R)


def _selection(columns, n: int, prior: PriorModel | None = None, R=None, **kw) -> SelectionDesign:
    design = MeasurementDesign.selection(columns, n)
    v1 = v1_cost(prior, design, R) if prior is not None else None
    return SelectionDesign(indices=tuple(int(c) + 1 for c in columns), design=design, v1=v1, **kw)


def exhaustive_select(prior: PriorModel, noise, m: int, budget: int = DEFAULT_BUDGET) -> SelectionDesign:
    """Best m-subset of coordinates by enumeration.

    Ties (within 1e-12 * ||P_o||_F^2) go to the lexicographically smallest
    index set. Row i of R is attached to the i-th selected coordinate in
    ascending order.
    """
    n = prior.n
    if not 1 <= m <= n:
        raise ShapeError(f"need 1 <= m <= n, got m={m}, n={n}")
    count = math.comb(n, m)
    if count > budget:
        raise BudgetError(count, budget)
    R = _noise_matrix(noise, m)
    P = np.ascontiguousarray(prior.cov)
    P2 = P @ P
    P3 = P2 @ P
    tol = TIE_RTOL * float(np.sum(P * P))
    cols, _, _ = kernels.subset_scan(P, P2, P3, R, m, tol)
    if cols is None:
        raise DegenerateDesignError("every subset gives a singular innovation matrix")
    return _selection(cols, n, prior, R)


def v2_penalty(H) -> float:
    """Permutation penalty (2/3) tr[H^T (H - H o H)]; zero on selection matrices."""
    H = np.asarray(H, dtype=float)
    return float(2.0 / 3.0 * np.trace(H.T @ (H - H * H)))


def v2_flow_term(H) -> np.ndarray:
    """Descent direction of the permutation penalty, -H[(H o H)^T H - H^T (H o H)]."""
    H = np.asarray(H, dtype=float)
    C = H * H
    return -H @ (C.T @ H - H.T @ C)


def round_to_selection(H) -> tuple[SelectionDesign, float]:
    """Round each row to the canonical vector of its largest-magnitude entry.

    Rows that claim the same column are resolved greedily by descending
    magnitude; losers take their best unclaimed column. Returns the selection
    (rows in the order of ``H``) and the residual ||H_rounded - H||_F.
    """
    H = np.asarray(H, dtype=float)
    m, n = H.shape
    if m > n:
        raise ShapeError(f"cannot select {m} distinct columns out of {n}")
    A = np.abs(H)
    order = sorted(range(m), key=lambda i: (-A[i].max(), i))
    claimed = set()
    cols = [0] * m
    for i in order:
        for j in np.argsort(-A[i], kind="stable"):
            if int(j) not in claimed:
                cols[i] = int(j)
                claimed.add(int(j))
                break
    rounded = selection_matrix(cols, n)
    residual = float(np.linalg.norm(rounded - H))
    return _selection(cols, n), residual


def flip_negative_rows(H: np.ndarray) -> np.ndarray:
    """Negate rows whose dominant entry is negative (V1 is invariant to row signs)."""
    idx = np.argmax(np.abs(H), axis=1)
    signs = np.where(H[np.arange(H.shape[0]), idx] < 0, -1.0, 1.0)
    return np.ascontiguousarray(H * signs[:, None])


def penalized_descent(P, R, H0, opts: FlowOptions, *, penalty_rows: slice, v1_project,
                      retraction) -> tuple[np.ndarray, int, float, str]:
    """Run the staged penalized flow at increasing penalty weight k.

    The direction is (1-k) times the projected V1 gradient plus k times the
    permutation-penalty flow on ``penalty_rows``. With the canonical tangent
    projection this is the exact gradient flow of (1-k) V1 + (k/2) V2, which is
    the objective the backtracking monitors. ``v1_project`` projects the V1
    gradient. Each stage runs ``opts.stage_length`` iterations
    at fixed k; once k reaches 1 the descent runs to convergence. Rows in the
    penalty block are sign-normalized at every stage boundary. Returns the final
    matrix, total iterations, final k and the last status.
    """
    H = np.array(H0, dtype=float)
    used = 0
    stage = 0
    k = 0.0
    status = "max-iter"

    def lifted_flow(X):
        out = np.zeros_like(X)
        out[penalty_rows] = kernels.v2_flow(X[penalty_rows])
        return out

    while used < opts.max_iter:
        k = k_schedule(opts, stage)
        H[penalty_rows] = flip_negative_rows(H[penalty_rows])
        w = 1.0 - k

        def objective(X, w=w, k=k):
            v = kernels.v1_grad(P, X, R, False)[0] if w > 0 else 0.0
            return w * v + 0.5 * k * kernels.v2_value(X[penalty_rows])

        def direction(X, w=w, k=k):
            out = -k * lifted_flow(X)
            if w > 0:
                _, G = kernels.v1_grad(P, X, R)
                if G is None:
                    return np.full_like(X, np.nan)
                out += w * v1_project(X, G)
            return out

        budget = opts.max_iter - used if k >= 1.0 else min(opts.stage_length, opts.max_iter - used)
        res = descend(objective, direction, None, retraction, H, opts, max_iter=budget)
        H = res.matrix
        used += res.iterations
        status = res.status
        stage += 1
        if k >= 1.0:
            break
    H[penalty_rows] = flip_negative_rows(H[penalty_rows])
    return H, used, k, status


def design_discrete_flow(prior: PriorModel, noise, m: int, opts: FlowOptions | None = None,
                         *, init=None) -> SelectionDesign:
    """Multi-start penalized flow, rounded to the nearest selection.

    The flow runs on P_o / sigma_1 (and R / sigma_1) so that the design cost and
    the penalty are on comparable scales. Starts whose final iterate is farther
    than 0.05 (Frobenius) from a selection are discarded; among the rest the
    lowest V1 after rounding wins.
    """
    n = prior.n
    if not 1 <= m < n:
        raise ShapeError(f"need 1 <= m < n, got m={m}, n={n}")
    R = _noise_matrix(noise, m)
    scale = float(prior.spectrum[0]) or 1.0
    P = np.ascontiguousarray(prior.cov / scale)
    Rn = R / scale
    opts = (opts or FlowOptions()).resolved(P)

    def problem(i, rng):
        H0 = np.array(init, dtype=float) if (init is not None and i == 0) else random_orthonormal(m, n, rng)
        H, iters, k, status = penalized_descent(
            P, Rn, H0, opts, penalty_rows=slice(0, m), v1_project=canonical_tangent,
            retraction=orthonormalize_rows)
        sel, residual = round_to_selection(H)
        if residual > ROUNDING_THRESHOLD:
            raise NumericalError("failed to reach permutation neighborhood")
        cols = sorted(sel.columns)
        v1 = v1_cost(prior, selection_matrix(cols, n), R)
        return DesignResult(matrix=H, v1=v1, objective=v1, v2=kernels.v2_value(H), iterations=iters,
                            status=status, max_violation=row_violation(H), k_final=k,
                            rounding_residual=residual, extra={"columns": cols})

    try:
        best = multi_start(problem, opts)
    except NumericalError as exc:
        if "permutation neighborhood" in str(exc):
            raise NumericalError("failed to reach permutation neighborhood") from None
        raise
    sel = _selection(best.extra["columns"], n, prior, R, residual=best.rounding_residual, result=best)
    best.design = sel.design
    return sel
