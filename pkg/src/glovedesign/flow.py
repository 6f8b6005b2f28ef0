"""Discretized projected gradient flows: the descent driver, multi-start
orchestration and the penalty-weight schedule shared by all flow solvers."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NumericalError, ShapeError, ValidationError

# A step is "underflowed" once it shrinks this far below the initial step.
STEP_UNDERFLOW = 1e-14
MAX_STEP_GROWTH = 1e8
VIOLATION_TOL = 1e-8


@dataclass(frozen=True)
class FlowOptions:
    """Knobs for the flow solvers.

    ``tol_grad`` and ``step0`` default to scale-aware values derived from the
    prior: ``1e-8 * (1 + ||P_o||_F^2)`` and ``1e-2 / sigma_1(P_o)^2``.
    The penalty weight follows ``k0 * k_growth**stage`` (capped at 1) with a new
    stage every ``stage_length`` iterations.
    """

    max_iter: int = 5000
    tol_grad: float | None = None
    tol_step: float = 1e-12
    step0: float | None = None
    backtrack: float = 0.5
    starts: int = 20
    seed: int = 0
    k0: float = 0.2
    k_growth: float = 1.5
    stage_length: int = 200
    renorm_every: int = 1
    threads: int = 1
    record_trajectory: bool = False
    bb_steps: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if not 0.0 < self.backtrack < 1.0:
            raise ValidationError("backtrack must lie in (0, 1)")
        if not 0.0 <= self.k0 <= 1.0:
            raise ValidationError("k0 must lie in [0, 1]")
        if self.k_growth < 1.0:
            raise ValidationError("k_growth must be >= 1")
        if self.starts < 1:
            raise ValidationError("starts must be >= 1")
        if self.renorm_every < 1 or self.stage_length < 1 or self.threads < 1:
            raise ValidationError("renorm_every, stage_length and threads must be >= 1")

    def resolved(self, cov: np.ndarray) -> "FlowOptions":
        """Fill in the scale-aware defaults for a given covariance."""
        sigma1 = float(np.linalg.eigvalsh(cov)[-1]) if cov.size else 1.0
        sigma1 = sigma1 if sigma1 > 0 else 1.0
        tol_grad = self.tol_grad
        if tol_grad is None:
            tol_grad = 1e-8 * (1.0 + float(np.sum(cov * cov)))
        step0 = self.step0 if self.step0 is not None else 1e-2 / sigma1 ** 2
        return replace(self, tol_grad=tol_grad, step0=step0)


@dataclass
class DesignResult:
    """Outcome of one descent (or the winner of a multi-start run).

    ``v1`` is the design cost at ``matrix``; ``objective`` is whatever the
    driver minimized (equal to ``v1`` for pure V1 flows). ``trajectory`` holds
    ``(iteration, objective, constraint_violation)`` triples when recorded.
    """

    matrix: np.ndarray
    v1: float
    objective: float = math.nan
    v2: float | None = None
    iterations: int = 0
    start_index: int = 0
    status: str = "converged"
    max_violation: float = 0.0
    k_final: float | None = None
    rounding_residual: float | None = None
    start_values: tuple[float, ...] = ()
    trajectory: list[tuple[int, float, float]] | None = None
    design: object = None
    extra: dict = field(default_factory=dict)

    @property
    def stalled(self) -> bool:
        return self.status == "stalled"


def random_orthonormal(m: int, n: int, seed) -> np.ndarray:
    """m x n matrix with orthonormal rows from the QR of a Gaussian matrix."""
    if m > n or m < 0:
        raise ShapeError(f"cannot build {m} orthonormal rows in dimension {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if m == 0:
        return np.zeros((0, n))
    Q, R = np.linalg.qr(rng.standard_normal((n, m)))
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    return np.ascontiguousarray(Q.T)


def orthonormalize_rows(H: np.ndarray) -> np.ndarray:
    """Closest matrix with orthonormal rows, (H H^T)^{-1/2} H (polar factor)."""
    if H.shape[0] == 0:
        return H
    w, V = np.linalg.eigh(H @ H.T)
    if w[0] <= 1e-14 * max(w[-1], 0.0):
        return np.full_like(H, np.nan)
    return np.ascontiguousarray((V / np.sqrt(w)) @ V.T @ H)


def row_violation(H: np.ndarray) -> float:
    if H.shape[0] == 0:
        return 0.0
    return float(np.linalg.norm(H @ H.T - np.eye(H.shape[0])))


def k_schedule(opts: FlowOptions, stage: int) -> float:
    """Penalty weight for a given stage: min(1, k0 * k_growth**stage)."""
    if stage < 0:
        raise ValidationError("stage must be >= 0")
    if opts.k0 == 0.0:
        return 0.0
    # Work in logs so large stages cannot overflow.
    log_k = math.log(opts.k0) + stage * math.log(opts.k_growth)
    return 1.0 if log_k >= 0.0 else math.exp(log_k)


def descend(objective: Callable, gradient: Callable, projector: Callable | None,
            retraction: Callable | None, H0: np.ndarray, opts: FlowOptions, *,
            violation: Callable | None = None, max_iter: int | None = None) -> DesignResult:
    """Steepest descent with backtracking along ``-projector(H, gradient(H))``.

    A trial step ``retraction(H + t D)`` is accepted when the objective
    decreases; otherwise ``t`` is multiplied by ``opts.backtrack``. The next
    trial step is the Barzilai-Borwein length ``<s, s> / <s, y>`` from the last
    two iterates (``opts.bb_steps``), falling back to growing ``t`` by
    ``1 / opts.backtrack`` when that is undefined. The retraction is
    applied every ``opts.renorm_every`` accepted steps, and also whenever
    ``violation`` exceeds 1e-9 in between.

    Stops when the direction norm drops to ``opts.tol_grad``, the accepted
    change to ``opts.tol_step``, after ``max_iter`` iterations, or when the
    step underflows (status ``"stalled"``).
    """
    tol_grad = opts.tol_grad if opts.tol_grad is not None else 1e-8
    step0 = opts.step0 if opts.step0 is not None else 1e-2
    max_iter = opts.max_iter if max_iter is None else max_iter
    retract = retraction or (lambda X: X)

    H = np.array(H0, dtype=float)
    f = float(objective(H))
    if not math.isfinite(f):
        raise NumericalError("invalid start: objective is not finite at the initial design")
    viol = violation(H) if violation else 0.0
    if viol > VIOLATION_TOL:
        raise ValidationError(f"invalid start: constraint violation {viol:.2e}")
    max_viol = viol
    traj = [(0, f, viol)] if opts.record_trajectory else None

    step = step0
    status = "max-iter"
    it = 0
    since_renorm = 0
    H_prev = D_prev = None
    while it < max_iter:
        it += 1
        G = gradient(H)
        D = -(projector(H, G) if projector is not None else G)
        if not np.all(np.isfinite(D)):
            status = "stalled"
            break
        if math.sqrt(float(np.sum(D * D))) <= tol_grad:
            status = "converged"
            break
        if opts.bb_steps and D_prev is not None:
            s_vec = H - H_prev
            sy = -float(np.sum(s_vec * (D - D_prev)))
            if sy > 0.0:
                step = min(float(np.sum(s_vec * s_vec)) / sy, MAX_STEP_GROWTH * step0)
        while True:
            trial = H + step * D
            if since_renorm + 1 >= opts.renorm_every:
                trial = retract(trial)
            elif violation and violation(trial) > 1e-9:
                trial = retract(trial)
            f_new = float(objective(trial))
            if f_new < f:
                break
            step *= opts.backtrack
            if step < STEP_UNDERFLOW * step0:
                break
        if step < STEP_UNDERFLOW * step0:
            status = "stalled"
            break
        if since_renorm + 1 >= opts.renorm_every:
            since_renorm = 0
        else:
            since_renorm += 1
        dH = math.sqrt(float(np.sum((trial - H) ** 2)))
        H_prev, D_prev = H, D
        H, f = trial, f_new
        if violation:
            viol = violation(H)
            max_viol = max(max_viol, viol)
        if traj is not None:
            traj.append((it, f, viol))
        if dH <= opts.tol_step:
            status = "converged"
            break
        step = min(step / opts.backtrack, MAX_STEP_GROWTH * step0)

    if retraction is not None:
        H_final = retract(H)
        f_final = float(objective(H_final))
        if math.isfinite(f_final):
            H, f = H_final, f_final
            if violation:
                max_viol = max(max_viol, violation(H))
    return DesignResult(matrix=H, v1=f, objective=f, iterations=it, status=status,
                        max_violation=max_viol, trajectory=traj)


def start_seeds(opts: FlowOptions) -> list[np.random.SeedSequence]:
    """Per-start seed sequences, derived deterministically from ``opts.seed``."""
    return np.random.SeedSequence(opts.seed).spawn(opts.starts)


def multi_start(problem: Callable[[int, np.random.Generator], DesignResult],
                opts: FlowOptions) -> DesignResult:
    """Run ``problem(start_index, rng)`` for each start and keep the lowest ``v1``.

    Ties go to the smallest start index, so the winner does not depend on
    completion order when ``opts.threads > 1``. Starts that raise
    :class:`NumericalError` are skipped. The winner's ``extra`` records the
    largest constraint violation seen by any start.
    """
    seeds = start_seeds(opts)

    def run(i):
        try:
            return problem(i, np.random.default_rng(seeds[i]))
        except NumericalError as exc:
            return exc

    if opts.threads > 1 and opts.starts > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            outcomes = list(pool.map(run, range(opts.starts)))
    else:
        outcomes = [run(i) for i in range(opts.starts)]

    values = tuple(o.v1 if isinstance(o, DesignResult) and math.isfinite(o.v1) else math.inf
                   for o in outcomes)
    if all(math.isinf(v) for v in values):
        reasons = sorted({str(o) for o in outcomes if isinstance(o, Exception)})
        raise NumericalError("no feasible result" + (f": {'; '.join(reasons)}" if reasons else ""))
    best = min(range(len(values)), key=lambda i: (values[i], i))
    extra = dict(outcomes[best].extra)
    extra["max_violation_all_starts"] = max(
        (o.max_violation for o in outcomes if isinstance(o, DesignResult)), default=0.0)
    return replace(outcomes[best], start_index=best, start_values=values, extra=extra)
