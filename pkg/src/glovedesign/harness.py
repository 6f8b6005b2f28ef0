"""Synthetic evaluation: sample poses from the prior, simulate glove readings,
reconstruct them, and tabulate errors; V1-versus-m curves for each mode.

Every stochastic quantity is drawn from streams spawned off one
``numpy.random.SeedSequence``, so reports are reproducible bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .continuous import design_continuous_flow, optimal_continuous_noiseless, optimal_continuous_noisy
from .discrete import DEFAULT_BUDGET, SelectionDesign, design_discrete_flow, exhaustive_select
from .errors import ShapeError, ValidationError
from .estimator import MeasurementDesign, NoiseModel, mve_reconstruct, v1_cost
from .flow import FlowOptions
from .hybrid import HybridSolution, design_hybrid
from .prior import PoseDataset, PriorModel

# Sentinel used for measured DoFs in per-DoF tables.
MEASURED = "--"

HAND_LABELS = ("TA", "TR", "TM", "TI", "IA", "IM", "IP", "MM", "MP",
               "RA", "RM", "RP", "LA", "LM", "LP")
# Thumb, index, middle, ring and little metacarpal joints (1-based).
METACARPAL_INDICES = (3, 6, 8, 11, 14)

AGGREGATE_DEFINITION = ("per-trial mean absolute error over unmeasured DoFs "
                        "(over all DoFs when every DoF is measured)")
MODES = ("continuous", "discrete", "hybrid")


def synergy_prior(n: int = 15, scale: float = 400.0, ratio: float = 0.5, seed: int = 0,
                  labels: Sequence[str] | None = None) -> PriorModel:
    """Zero-mean prior with spectrum ``scale * ratio**(i-1)`` in a random orthonormal basis.

    With the defaults the leading synergy has a standard deviation of 20 degrees.
    """
    if n < 1 or scale <= 0 or not 0 < ratio <= 1:
        raise ValidationError("synergy prior needs n >= 1, scale > 0 and 0 < ratio <= 1")
    rng = np.random.default_rng(seed)
    Q, Rq = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.where(np.diag(Rq) < 0, -1.0, 1.0)
    spectrum = scale * ratio ** np.arange(n)
    cov = (Q * spectrum) @ Q.T
    cov = 0.5 * (cov + cov.T)
    if labels is None:
        labels = HAND_LABELS if n == len(HAND_LABELS) else None
    return PriorModel.from_moments(np.zeros(n), cov, labels=labels)


def _sqrt_cov(prior: PriorModel) -> np.ndarray:
    w, V = np.linalg.eigh(prior.cov)
    if w.size and w[0] < -1e-10 * max(w[-1], 0.0):
        raise ValidationError("invalid prior: covariance is indefinite")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _draw_poses(prior: PriorModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """count x n poses from N(mean, cov) via the symmetric square root."""
    L = _sqrt_cov(prior)
    return prior.mean + rng.standard_normal((count, prior.n)) @ L


def sample_poses(prior: PriorModel, count: int, seed) -> PoseDataset:
    """Draw ``count`` poses (stored column-wise) from the Gaussian prior."""
    if count < 1:
        raise ValidationError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = _draw_poses(prior, count, rng)
    return PoseDataset(labels=prior.labels, samples=X.T, units=prior.units)


def _as_design(design, n: int) -> MeasurementDesign:
    if isinstance(design, (SelectionDesign, HybridSolution)):
        design = design.design
    elif hasattr(design, "design") and isinstance(design.design, MeasurementDesign):
        design = design.design
    if not isinstance(design, MeasurementDesign):
        design = MeasurementDesign(np.asarray(design, dtype=float), mode="continuous")
    if design.n != n:
        raise ShapeError(f"design has n={design.n}, prior has n={n}")
    return design


def _stats(a: np.ndarray) -> dict:
    return {"mean": float(np.mean(a)), "std": float(np.std(a)), "max": float(np.max(a))}


@dataclass
class ErrorReport:
    """Reconstruction error statistics (angles in the prior's units).

    ``per_dof`` has one entry per DoF; measured DoFs carry :data:`MEASURED`
    in place of their statistics. ``trial_errors`` holds the per-trial
    aggregate error used for paired comparisons.
    """

    design_id: str
    trials: int
    seed: int
    noise_std: float
    labels: tuple[str, ...]
    measured: tuple[int, ...]
    per_dof: list[dict]
    aggregate: dict
    trial_errors: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def to_json(self) -> dict:
        return {
            "design_id": self.design_id,
            "trials": self.trials,
            "seed": self.seed,
            "noise_std": self.noise_std,
            "measured_indices": list(self.measured),
            "aggregate_definition": AGGREGATE_DEFINITION,
            "aggregate": self.aggregate,
            "per_dof": self.per_dof,
        }

    def to_csv(self) -> str:
        """Rows = DoFs, columns = mean, std, max; measured DoFs show ``--``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dof", "mean", "std", "max"])
        for row in self.per_dof:
            w.writerow([row["dof"]] + [_fmt(row[k]) for k in ("mean", "std", "max")])
        return buf.getvalue()


def _fmt(v) -> str:
    return v if isinstance(v, str) else repr(float(v))


def compare_designs(prior: PriorModel, designs: Sequence, noise_std: float, trials: int,
                    seed: int, design_ids: Sequence[str] | None = None) -> list[ErrorReport]:
    """Reconstruction errors of several designs under common random numbers.

    Every design sees the same true poses; sensor ``j`` of every design gets
    the same standard-normal draw in trial ``t`` (scaled by ``noise_std``).
    The reconstructor assumes R = noise_std^2 I.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if noise_std < 0 or not math.isfinite(noise_std):
        raise ValidationError("noise std must be a non-negative number")
    n = prior.n
    mats = [_as_design(d, n) for d in designs]
    if design_ids is None:
        design_ids = [f"design{i + 1}" for i in range(len(mats))]
    if len(design_ids) != len(mats):
        raise ValidationError("one design id per design is required")
    pose_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    X = _draw_poses(prior, trials, np.random.default_rng(pose_ss))
    max_m = max((d.m for d in mats), default=0)
    # sensor-major draw: sensor j's noise does not depend on how many sensors
    # the largest compared design has
    E = np.random.default_rng(noise_ss).standard_normal((max_m, trials)).T

    reports = []
    for did, d in zip(design_ids, mats):
        H = d.matrix
        y = X @ H.T + noise_std * E[:, : d.m]
        xhat = mve_reconstruct(y, d, NoiseModel.isotropic(d.m, noise_std), prior)
        err = np.abs(xhat - X)
        measured = set(d.selected_columns)
        unmeasured = [j for j in range(n) if j not in measured] or list(range(n))
        per_trial = err[:, unmeasured].mean(axis=1)
        per_dof = []
        for j in range(n):
            if j in measured:
                per_dof.append({"dof": prior.labels[j], "mean": MEASURED, "std": MEASURED,
                                "max": MEASURED})
            else:
                per_dof.append({"dof": prior.labels[j], **_stats(err[:, j])})
        reports.append(ErrorReport(
            design_id=str(did), trials=trials, seed=int(seed), noise_std=float(noise_std),
            labels=prior.labels, measured=tuple(sorted(c + 1 for c in measured)),
            per_dof=per_dof, aggregate=_stats(per_trial), trial_errors=per_trial))
    return reports


def run_reconstruction_experiment(prior: PriorModel, design, noise_std: float, trials: int,
                                  seed: int, design_id: str = "design") -> ErrorReport:
    """Single-design version of :func:`compare_designs`."""
    return compare_designs(prior, [design], noise_std, trials, seed, [design_id])[0]


def paired_summary(a: ErrorReport, b: ErrorReport) -> dict:
    """Trial-by-trial comparison of two reports built with common random numbers."""
    if a.trials != b.trials or a.seed != b.seed:
        raise ValidationError("paired summary needs reports from the same run")
    ea, eb = a.trial_errors, b.trial_errors
    a_wins = int(np.sum(ea < eb))
    b_wins = int(np.sum(eb < ea))
    ties = a.trials - a_wins - b_wins
    return {"a": a.design_id, "b": b.design_id, "a_wins": a_wins, "b_wins": b_wins,
            "ties": ties, "fraction_a_better": a_wins / a.trials,
            "fraction_b_better": b_wins / a.trials}


@dataclass
class CurveReport:
    """Best V1 per mode over a range of sensor counts.

    ``reduction`` is (V1(1) - V1(m)) / V1(1) for the continuous mode.
    """

    m_values: list[int]
    v1_values: dict[str, list[float]]
    modes: tuple[str, ...]
    solvers: dict[str, str]
    noise_std: float | None
    reduction: list[float] | None = None
    selected: dict[str, list] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"modes": list(self.modes), "m_values": list(self.m_values),
               "noise_std": self.noise_std, "solvers": dict(self.solvers),
               "v1_values": {k: list(v) for k, v in self.v1_values.items()}}
        if self.reduction is not None:
            out["reduction"] = list(self.reduction)
        if self.selected:
            out["selected_indices"] = {k: [list(s) for s in v] for k, v in self.selected.items()}
        return out

    def to_csv(self, reduction: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = list(self.modes)
        with_red = reduction and self.reduction is not None
        w.writerow(["m"] + cols + (["reduction"] if with_red else []))
        for i, m in enumerate(self.m_values):
            row = [m] + [repr(float(self.v1_values[c][i])) for c in cols]
            if with_red:
                row.append(repr(float(self.reduction[i])))
            w.writerow(row)
        return buf.getvalue()


def _noise_for(noise, m: int) -> np.ndarray:
    """Noise covariance for m sensors: scalar std, or an m x m matrix per m in a mapping."""
    if noise is None:
        return np.zeros((m, m))
    if isinstance(noise, Mapping):
        return np.asarray(noise[m], dtype=float)
    std = float(noise)
    if std < 0:
        raise ValidationError("noise std must be non-negative")
    return std ** 2 * np.eye(m)


def _continuous_v1(prior, R, m, solver, opts):
    if solver == "flow":
        return design_continuous_flow(prior, R, m, opts).v1_achieved
    if not np.any(R):
        return optimal_continuous_noiseless(prior, m).v1_achieved
    return optimal_continuous_noisy(prior, NoiseModel.from_cov(R), m).v1_achieved


def v1_curve(prior: PriorModel, noise=None, modes: Sequence[str] = ("continuous",),
             m_range: Sequence[int] | None = None, opts: FlowOptions | None = None, *,
             solver: str = "auto", budget: int = DEFAULT_BUDGET, m_c: int = 1) -> CurveReport:
    """V1 against the number of sensors for each requested mode.

    ``noise`` is ``None`` (noise-free), a scalar per-sensor std, or a mapping
    from m to an m x m covariance. With ``solver="auto"`` the continuous mode
    uses the closed form and the discrete mode exhaustive search when
    C(n, m) fits ``budget``; otherwise (or with ``solver="flow"``) the flow
    solvers run with ``opts``. The hybrid mode uses ``m_c`` continuous rows.
    """
    n = prior.n
    m_values = list(range(1, n)) if m_range is None else [int(m) for m in m_range]
    if not m_values or min(m_values) < 1 or max(m_values) > n - 1:
        raise ShapeError(f"m range must lie within [1, {n - 1}]")
    modes = tuple(modes)
    for mode in modes:
        if mode not in MODES:
            raise ValidationError(f"mode error: unknown mode {mode!r}")
    if solver not in ("auto", "closed-form", "exhaustive", "flow"):
        raise ValidationError(f"unknown solver {solver!r}")
    opts = opts or FlowOptions()
    values = {mode: [] for mode in modes}
    selected = {}
    solvers = {}
    for mode in modes:
        if mode == "continuous":
            solvers[mode] = "flow" if solver == "flow" else "closed-form"
            for m in m_values:
                values[mode].append(_continuous_v1(prior, _noise_for(noise, m), m, solvers[mode], opts))
        elif mode == "discrete":
            solvers[mode] = "flow" if solver == "flow" else "exhaustive"
            selected[mode] = []
            for m in m_values:
                R = _noise_for(noise, m)
                if solver != "flow" and math.comb(n, m) <= budget:
                    sel = exhaustive_select(prior, R, m, budget)
                else:
                    sel = design_discrete_flow(prior, R, m, opts)
                    if solver != "flow":
                        solvers[mode] = "exhaustive+flow"
                values[mode].append(sel.v1)
                selected[mode].append(sel.indices)
        else:
            solvers[mode] = f"flow(m_c={m_c})"
            selected[mode] = []
            for m in m_values:
                R = _noise_for(noise, m)
                if m <= m_c:
                    v = _continuous_v1(prior, R, m, "flow" if solver == "flow" else "closed-form", opts)
                    values[mode].append(v)
                    selected[mode].append(())
                    continue
                sol = design_hybrid(prior, R, m_c, m - m_c, opts)
                values[mode].append(sol.v1)
                selected[mode].append(sol.indices)
    reduction = None
    if "continuous" in modes:
        base = (values["continuous"][m_values.index(1)] if 1 in m_values
                else _continuous_v1(prior, _noise_for(noise, 1), 1, solvers["continuous"], opts))
        reduction = [(base - v) / base if base > 0 else 0.0 for v in values["continuous"]]
    noise_std = float(noise) if isinstance(noise, (int, float)) else (0.0 if noise is None else None)
    return CurveReport(m_values=m_values, v1_values=values, modes=modes, solvers=solvers,
                       noise_std=noise_std, reduction=reduction, selected=selected)


def dumps_json(obj) -> str:
    """Canonical JSON text used for every report (stable key order, trailing newline)."""
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def random_baselines(n: int, m: int, count: int, seed: int) -> list[tuple[int, ...]]:
    """``count`` random m-subsets of {1..n} (1-based, sorted), deterministic per seed."""
    rng = np.random.default_rng(seed)
    return [tuple(sorted(int(i) + 1 for i in rng.choice(n, size=m, replace=False)))
            for _ in range(count)]


def design_v1(prior: PriorModel, design, noise_std: float = 0.0) -> float:
    d = _as_design(design, prior.n)
    return v1_cost(prior, d, noise_std ** 2 * np.eye(d.m))
