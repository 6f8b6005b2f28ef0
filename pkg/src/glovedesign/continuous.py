"""Continuous (linear-combination) sensor design: closed forms and the
projected gradient flow on matrices with orthonormal rows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import kernels
from .errors import DegenerateDesignError, NumericalError, ShapeError, ValidationError
from .estimator import (MeasurementDesign, NoiseModel, _innovation_factor, _matrix,
                        _noise_cov, posterior_covariance, v1_cost)
from .flow import (DesignResult, FlowOptions, descend, multi_start, orthonormalize_rows,
                   random_orthonormal, row_violation)
from .prior import PriorModel


@dataclass
class ContinuousSolution:
    """A continuous design with its achieved cost and diagnostics.

    ``v1_closed_form`` is the analytic optimum when one applies. For noisy
    closed forms ``v1_formula`` carries the unsquared tail-sum expression,
    reported alongside but not equal to V1. ``residual`` is the Frobenius
    distance between the achieved fit P_o H^T S^{-1} H P_o and the rank-m
    principal-component truncation of P_o.
    """

    design: MeasurementDesign
    v1_achieved: float
    v1_closed_form: float | None = None
    residual: float = 0.0
    v1_formula: float | None = None
    result: DesignResult | None = None


def _check_m(prior: PriorModel, m: int):
    if not 1 <= m < prior.n:
        raise ShapeError(f"need 1 <= m < n, got m={m}, n={prior.n}")


def fit_residual(prior: PriorModel, H, R=None) -> float:
    H = _matrix(H)
    m = H.shape[0]
    R = _noise_cov(R, m)
    P = prior.cov
    fit = P - posterior_covariance(prior, H, R)
    U = prior.basis[:, :m]
    trunc = (U * prior.spectrum[:m]) @ U.T
    return float(np.linalg.norm(fit - trunc))


def optimal_continuous_noiseless(prior: PriorModel, m: int) -> ContinuousSolution:
    """Rows are the first m principal components; V1 = sum_{i>m} sigma_i^2."""
    _check_m(prior, m)
    s = prior.spectrum
    if s[m - 1] <= 1e-12 * s[0]:
        raise NumericalError("rank-deficient prior: m exceeds effective rank")
    H = np.ascontiguousarray(prior.basis[:, :m].T)
    design = MeasurementDesign(H, mode="continuous")
    return ContinuousSolution(
        design=design,
        v1_achieved=v1_cost(prior, design),
        v1_closed_form=float(np.sum(s[m:] ** 2)),
        residual=fit_residual(prior, H),
    )


def optimal_continuous_noisy(prior: PriorModel, noise: NoiseModel, m: int) -> ContinuousSolution:
    """Pair the i-th principal component with the (m-i+1)-th noise eigenvector.

    With isotropic noise the pairing is immaterial and the rows are the plain
    principal components, identical to the noiseless design.
    """
    _check_m(prior, m)
    if not isinstance(noise, NoiseModel):
        noise = NoiseModel.from_cov(noise)
    if noise.m != m:
        raise ShapeError(f"noise is {noise.m}x{noise.m}, expected m={m}")
    if noise.is_zero or not noise.is_spd:
        raise ValidationError("noisy closed form requires SPD R; use noiseless form")
    r = noise.spectrum
    if r[0] - r[-1] <= 1e-12 * r[0]:
        Q = np.eye(m)
    else:
        Q = noise.basis[:, ::-1]
    U = prior.basis[:, :m]
    H = np.ascontiguousarray(Q @ U.T)
    design = MeasurementDesign(H, mode="continuous")
    s = prior.spectrum
    paired = s[:m] / (1.0 + s[:m] / r[::-1])
    return ContinuousSolution(
        design=design,
        v1_achieved=v1_cost(prior, design, noise),
        v1_closed_form=float(np.sum(paired ** 2) + np.sum(s[m:] ** 2)),
        v1_formula=float(np.sum(paired) + np.sum(s[m:])),
        residual=fit_residual(prior, H, noise),
    )


def v1_gradient(prior: PriorModel, design, noise=None) -> np.ndarray:
    """Euclidean gradient of V1 with respect to H: -4 [P_p^2 P_o H^T S^{-1}]^T."""
    H = _matrix(design)
    R = _noise_cov(noise, H.shape[0])
    P = prior.cov
    fac = _innovation_factor(P, H, R)
    Pp = posterior_covariance(prior, H, R)
    K = linalg.cho_solve(fac, H @ P).T  # P_o H^T S^{-1}
    return -4.0 * (Pp @ Pp @ K).T


def project_to_tangent(H, G, full: bool = False) -> np.ndarray:
    """Project a search direction onto the tangent of {H : H H^T = I}.

    By default applies the right projector I_n - H^T (H H^T)^{-1} H, which
    removes every component lying in the row space of H. With ``full=True``
    the skew (row-space rotation) component is kept as well, giving the
    orthogonal projection onto the whole tangent space.
    """
    H = np.asarray(H, dtype=float)
    G = np.asarray(G, dtype=float)
    M = H @ H.T
    try:
        c, low = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError:
        raise DegenerateDesignError("H H^T is singular") from None
    if np.min(np.abs(np.diag(c))) ** 2 <= 1e-12 * np.max(np.diag(M)):
        raise DegenerateDesignError("H H^T is singular")
    GHt = G @ H.T
    if not full:
        return G - linalg.cho_solve((c, low), GHt.T).T @ H
    # Lambda M + M Lambda = G H^T + H G^T, D = G - Lambda H
    Lam = linalg.solve_sylvester(M, M, GHt + GHt.T)
    return G - Lam @ H


def tangent_orthonormal(H: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Full tangent projection assuming H H^T = I: G - sym(G H^T) H."""
    GHt = G @ H.T
    return G - 0.5 * (GHt + GHt.T) @ H


def canonical_tangent(H: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Canonical-metric gradient on {H H^T = I}: G - H G^T H.

    Equals the right-projected gradient whenever G H^T = 0, which holds for
    the V1 gradient without noise.
    """
    return G - H @ G.T @ H


def design_continuous_flow(prior: PriorModel, noise, m: int, opts: FlowOptions | None = None,
                           *, init=None, constrained: bool = True) -> ContinuousSolution:
    """Multi-start projected gradient flow for the continuous design.

    Each start begins from a random matrix with orthonormal rows (start 0 uses
    ``init`` when given). Unconstrained descent is allowed only without noise.
    """
    _check_m(prior, m)
    opts = (opts or FlowOptions()).resolved(prior.cov)
    R = _noise_cov(noise, m)
    if not constrained and np.any(R):
        raise ValidationError("unconstrained flow has no finite optimum with noise")
    P = np.ascontiguousarray(prior.cov)
    n = prior.n

    def objective(H):
        return kernels.v1_grad(P, H, R, False)[0]

    def gradient(H):
        v, G = kernels.v1_grad(P, H, R)
        return G if G is not None else np.full_like(H, np.nan)

    def problem(i, rng):
        H0 = np.array(init, dtype=float) if (init is not None and i == 0) else random_orthonormal(m, n, rng)
        if constrained:
            res = descend(objective, gradient, tangent_orthonormal, orthonormalize_rows, H0, opts,
                          violation=row_violation)
        else:
            res = descend(objective, gradient, None, None, H0, opts)
        res.v1 = v1_cost(prior, res.matrix, R)
        return res

    best = multi_start(problem, opts)
    design = MeasurementDesign(best.matrix, mode="continuous")
    sol = ContinuousSolution(design=design, v1_achieved=best.v1, result=best,
                             residual=fit_residual(prior, best.matrix, R))
    best.design = design
    if not np.any(R):
        sol.v1_closed_form = float(np.sum(prior.spectrum[m:] ** 2))
    else:
        try:
            cf = optimal_continuous_noisy(prior, NoiseModel.from_cov(R), m)
            sol.v1_closed_form, sol.v1_formula = cf.v1_closed_form, cf.v1_formula
        except ValidationError:
            pass
    return sol
