"""Hybrid sensor design: a block of m_c continuous rows stacked over m_d
single-coordinate rows, found with the block-constrained penalized flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .continuous import canonical_tangent, design_continuous_flow, project_to_tangent
from .discrete import (ROUNDING_THRESHOLD, _noise_matrix, design_discrete_flow, penalized_descent,
                       round_to_selection)
from .errors import ModeError, NumericalError, ShapeError
from .estimator import MeasurementDesign, posterior_covariance, selection_matrix, v1_cost
from .flow import (DesignResult, FlowOptions, descend, multi_start, orthonormalize_rows,
                   random_orthonormal, row_violation)
from .prior import PriorModel


@dataclass
class HybridSolution:
    """A finalized hybrid design.

    ``continuous_block_violation`` is ||H_c H_c^T - I||_F and
    ``discrete_residual`` the distance of the flow's H_d iterate from the
    selection it was rounded to.
    """

    design: MeasurementDesign
    v1: float
    continuous_block_violation: float = 0.0
    discrete_residual: float = 0.0
    result: DesignResult | None = None

    @property
    def indices(self) -> tuple[int, ...]:
        """1-based coordinates read by the discrete rows."""
        return tuple(c + 1 for c in self.design.selected_columns)


def lift_discrete_block(design: MeasurementDesign) -> np.ndarray:
    """Zero rows for the continuous block stacked over H_d."""
    if not isinstance(design, MeasurementDesign) or design.mode != "hybrid":
        raise ModeError("lift_discrete_block needs a hybrid design")
    m_c = design.split[0]
    out = np.array(design.matrix, dtype=float)
    out[:m_c] = 0.0
    return out


def block_project(H, G, m_c: int) -> np.ndarray:
    """Right-project the top m_c rows of G onto the tangent of {H_c H_c^T = I};
    pass the remaining rows through unchanged."""
    H = np.asarray(H, dtype=float)
    G = np.array(G, dtype=float)
    if not 0 <= m_c <= H.shape[0]:
        raise ShapeError(f"m_c={m_c} out of range for {H.shape[0]} rows")
    if m_c:
        G[:m_c] = project_to_tangent(H[:m_c], G[:m_c])
    return G


def _block_canonical(m_c: int):
    """Canonical tangent gradient on {H_c H_c^T = I} x {H_d H_d^T = I}.

    Without noise G H^T = 0 for the V1 gradient, and this coincides with
    :func:`block_project`.
    """
    def project(H, G):
        out = np.empty_like(G)
        out[:m_c] = canonical_tangent(H[:m_c], G[:m_c])
        out[m_c:] = canonical_tangent(H[m_c:], G[m_c:])
        return out
    return project


def _block_retraction(m_c: int):
    def retract(H):
        out = np.empty_like(H)
        out[:m_c] = orthonormalize_rows(H[:m_c])
        out[m_c:] = orthonormalize_rows(H[m_c:])
        return out
    return retract


def _polish_continuous_block(prior: PriorModel, R: np.ndarray, cols, m_c: int, Hc0, opts):
    """Best H_c given the discrete block. Closed form without noise: the top
    m_c eigenvectors of the posterior covariance after reading ``cols``."""
    n = prior.n
    Hd = selection_matrix(cols, n)
    if not np.any(R):
        Pp = posterior_covariance(prior, Hd)
        w, V = np.linalg.eigh(Pp)
        Hc = V[:, ::-1][:, :m_c].T
        for row in Hc:  # deterministic row signs
            j = int(np.argmax(np.abs(row)))
            if row[j] < 0:
                row *= -1.0
        return np.vstack([Hc, Hd]), 0
    P = np.ascontiguousarray(prior.cov)

    def objective(Hc):
        return kernels.v1_grad(P, np.vstack([Hc, Hd]), R, False)[0]

    def gradient(Hc):
        _, G = kernels.v1_grad(P, np.vstack([Hc, Hd]), R)
        return G[:m_c] if G is not None else np.full_like(Hc, np.nan)

    res = descend(objective, gradient, canonical_tangent, orthonormalize_rows,
                  orthonormalize_rows(np.asarray(Hc0, dtype=float)), opts, violation=row_violation)
    return np.vstack([res.matrix, Hd]), res.iterations


def _tail_v1(prior: PriorModel, cols, m_c: int) -> float:
    """V1 of the best noise-free hybrid design whose discrete block reads ``cols``."""
    w = np.linalg.eigvalsh(posterior_covariance(prior, selection_matrix(cols, prior.n)))
    return float(np.sum(np.sort(w)[: prior.n - m_c] ** 2))


def refine_discrete_block(prior: PriorModel, cols, m_c: int) -> tuple[list[int], int]:
    """Noise-free 1-exchange local search on the discrete block.

    Repeatedly applies the best single swap of a selected coordinate for an
    unselected one (with H_c re-optimized in closed form) while it lowers V1.
    Returns the sorted columns and the number of swaps made.
    """
    cols = sorted(cols)
    best = _tail_v1(prior, cols, m_c)
    swaps = 0
    while True:
        move = None
        for i in range(len(cols)):
            for j in range(prior.n):
                if j in cols:
                    continue
                trial = sorted(cols[:i] + [j] + cols[i + 1:])
                v = _tail_v1(prior, trial, m_c)
                if v < best - 1e-12 * (1.0 + best):
                    best, move = v, trial
        if move is None:
            return cols, swaps
        cols = move
        swaps += 1


def design_hybrid(prior: PriorModel, noise, m_c: int, m_d: int,
                  opts: FlowOptions | None = None, *, refine: bool = True) -> HybridSolution:
    """Multi-start block-constrained penalized flow for a hybrid design.

    The penalty acts on the discrete rows only. Each start is finalized by
    rounding H_d to a selection (columns sorted ascending), re-optimizing H_c
    with H_d fixed, and re-evaluating V1; the lowest finalized V1 wins.
    Without noise, ``refine`` additionally polishes the rounded selection by
    :func:`refine_discrete_block`; the unrefined value is kept in
    ``result.extra["v1_rounded"]``.
    """
    n = prior.n
    if m_c < 0 or m_d < 0 or m_c + m_d < 1:
        raise ShapeError(f"invalid split m_c={m_c}, m_d={m_d}")
    if m_c + m_d >= n:
        raise ShapeError(f"infeasible split: m_c + m_d = {m_c + m_d} must be < n = {n}")
    m = m_c + m_d
    R = _noise_matrix(noise, m)
    opts = opts or FlowOptions()

    if m_d == 0:
        sol = design_continuous_flow(prior, R, m, opts)
        design = MeasurementDesign(sol.design.matrix, mode="hybrid", split=(m, 0))
        return HybridSolution(design=design, v1=sol.v1_achieved,
                              continuous_block_violation=row_violation(design.matrix),
                              result=sol.result)
    if m_c == 0:
        sel = design_discrete_flow(prior, R, m, opts)
        design = MeasurementDesign(sel.design.matrix, mode="hybrid", split=(0, m))
        return HybridSolution(design=design, v1=sel.v1, discrete_residual=sel.residual,
                              result=sel.result)

    scale = float(prior.spectrum[0]) or 1.0
    P = np.ascontiguousarray(prior.cov / scale)
    Rn = R / scale
    polish_opts = opts.resolved(prior.cov)
    opts = opts.resolved(P)
    project = _block_canonical(m_c)
    retract = _block_retraction(m_c)

    def problem(i, rng):
        H0 = np.vstack([random_orthonormal(m_c, n, rng), random_orthonormal(m_d, n, rng)])
        H, iters, k, status = penalized_descent(P, Rn, H0, opts, penalty_rows=slice(m_c, m),
                                                v1_project=project, retraction=retract)
        if not np.all(np.isfinite(H)):
            raise NumericalError("flow diverged")
        sel, residual = round_to_selection(H[m_c:])
        if residual > ROUNDING_THRESHOLD:
            raise NumericalError("failed to reach permutation neighborhood")
        cols = sorted(sel.columns)
        Hf, polish_iters = _polish_continuous_block(prior, R, cols, m_c, H[:m_c], polish_opts)
        v1 = v1_rounded = v1_cost(prior, Hf, R)
        swaps = 0
        if refine and not np.any(R):
            cols, swaps = refine_discrete_block(prior, cols, m_c)
            if swaps:
                Hf, _ = _polish_continuous_block(prior, R, cols, m_c, H[:m_c], polish_opts)
                v1 = v1_cost(prior, Hf, R)
        return DesignResult(matrix=Hf, v1=v1, objective=v1, v2=kernels.v2_value(H[m_c:]),
                            iterations=iters + polish_iters, status=status,
                            max_violation=row_violation(Hf[:m_c]), k_final=k,
                            rounding_residual=residual,
                            extra={"columns": cols, "v1_rounded": v1_rounded, "swaps": swaps})

    best = multi_start(problem, opts)
    design = MeasurementDesign(best.matrix, mode="hybrid", split=(m_c, m_d))
    best.design = design
    return HybridSolution(design=design, v1=best.v1,
                          continuous_block_violation=row_violation(best.matrix[:m_c]),
                          discrete_residual=best.rounding_residual, result=best)
