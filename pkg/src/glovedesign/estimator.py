"""Linear-Gaussian measurement model, minimum-variance reconstruction and the
design cost V1 = ||P_p||_F^2."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import DegenerateDesignError, ModeError, ShapeError, ValidationError
from .prior import PriorModel, decompose

MODES = ("continuous", "discrete", "hybrid")
RANK_RTOL = 1e-10
INNOVATION_RTOL = 1e-12
ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class NoiseModel:
    """Measurement-noise covariance R (m x m). The zero matrix is legal."""

    cov: np.ndarray
    spectrum: np.ndarray
    basis: np.ndarray

    @classmethod
    def from_cov(cls, cov) -> "NoiseModel":
        R = np.atleast_2d(np.array(cov, dtype=float))
        if R.shape[0] != R.shape[1]:
            raise ShapeError("noise covariance must be square")
        basis, spectrum = decompose(R)
        if np.linalg.eigvalsh(0.5 * (R + R.T)).min(initial=0.0) < -1e-12 * max(spectrum[0], 1e-300):
            raise ValidationError("noise covariance must be positive semidefinite")
        for a in (R, basis, spectrum):
            a.setflags(write=False)
        return cls(cov=R, spectrum=spectrum, basis=basis)

    @classmethod
    def zero(cls, m: int) -> "NoiseModel":
        return cls.from_cov(np.zeros((m, m)))

    @classmethod
    def isotropic(cls, m: int, std: float) -> "NoiseModel":
        if std < 0:
            raise ValidationError("noise std must be non-negative")
        return cls.from_cov(std ** 2 * np.eye(m))

    @property
    def m(self) -> int:
        return self.cov.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.cov)

    @property
    def is_spd(self) -> bool:
        return bool(self.spectrum[-1] > 1e-12 * self.spectrum[0])


@dataclass(frozen=True)
class MeasurementDesign:
    """An m x n measurement matrix H with a mode tag.

    For hybrid designs ``split = (m_c, m_d)``: the top ``m_c`` rows form the
    continuous block H_c and the bottom ``m_d`` rows a selection block H_d.
    """

    matrix: np.ndarray
    mode: str = "continuous"
    split: tuple[int, int] | None = None
    row_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.array(self.matrix, dtype=float))
        if H.ndim != 2:
            raise ShapeError("measurement matrix must be 2-D")
        m, n = H.shape
        if self.mode not in MODES:
            raise ModeError(f"unknown mode {self.mode!r}")
        if not np.all(np.isfinite(H)):
            raise ValidationError("measurement matrix has non-finite entries")
        s = np.linalg.svd(H, compute_uv=False)
        if m > n or s[-1] <= RANK_RTOL * s[0]:
            raise DegenerateDesignError("H must have full row rank")
        split = self.split
        if self.mode == "discrete":
            _check_selection(H)
            split = (0, m)
        elif self.mode == "hybrid":
            if split is None or len(split) != 2 or sum(split) != m or min(split) < 0:
                raise ShapeError(f"hybrid split {split} does not add up to m={m}")
            mc = split[0]
            Hc = H[:mc]
            if mc and np.linalg.norm(Hc @ Hc.T - np.eye(mc)) > ORTHO_TOL:
                raise ValidationError("hybrid continuous block must have orthonormal rows")
            _check_selection(H[mc:])
        else:
            split = (m, 0)
        if self.row_labels is not None and len(self.row_labels) != m:
            raise ShapeError("row_labels must have one entry per row")
        H.setflags(write=False)
        object.__setattr__(self, "matrix", H)
        object.__setattr__(self, "split", tuple(int(v) for v in split))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def selected_columns(self) -> tuple[int, ...]:
        """0-based columns read by the selection rows (empty if continuous)."""
        mc = self.split[0]
        return tuple(int(np.argmax(row)) for row in self.matrix[mc:])

    def constraint_violation(self) -> float:
        """||H_c H_c^T - I||_F for the continuous block."""
        Hc = self.matrix[: self.split[0]]
        if Hc.shape[0] == 0:
            return 0.0
        return float(np.linalg.norm(Hc @ Hc.T - np.eye(Hc.shape[0])))

    @classmethod
    def selection(cls, columns: Sequence[int], n: int) -> "MeasurementDesign":
        """Discrete design reading the given 0-based columns, in the given order."""
        return cls(matrix=selection_matrix(columns, n), mode="discrete")

    @classmethod
    def hybrid(cls, Hc, columns: Sequence[int], n: int) -> "MeasurementDesign":
        Hc = np.atleast_2d(np.asarray(Hc, dtype=float)).reshape(-1, n)
        Hd = selection_matrix(columns, n)
        return cls(matrix=np.vstack([Hc, Hd]), mode="hybrid",
                   split=(Hc.shape[0], Hd.shape[0]))


def selection_matrix(columns: Sequence[int], n: int) -> np.ndarray:
    columns = [int(c) for c in columns]
    if len(set(columns)) != len(columns) or any(c < 0 or c >= n for c in columns):
        raise ShapeError(f"selection columns {columns} must be distinct and in [0, {n})")
    H = np.zeros((len(columns), n))
    H[np.arange(len(columns)), columns] = 1.0
    return H


def _check_selection(H: np.ndarray) -> None:
    if H.shape[0] == 0:
        return
    ones = H == 1.0
    if not (np.all(ones | (H == 0.0)) and np.all(ones.sum(axis=1) == 1)
            and np.all(ones.sum(axis=0) <= 1)):
        raise ValidationError("discrete rows must select distinct single coordinates")


def _matrix(design) -> np.ndarray:
    if isinstance(design, MeasurementDesign):
        return design.matrix
    return np.atleast_2d(np.asarray(design, dtype=float))


def _noise_cov(noise, m: int) -> np.ndarray:
    if noise is None:
        return np.zeros((m, m))
    R = noise.cov if isinstance(noise, NoiseModel) else np.atleast_2d(np.asarray(noise, dtype=float))
    if R.shape != (m, m):
        raise ShapeError(f"noise covariance {R.shape} does not match m={m}")
    return R


def _innovation_factor(P: np.ndarray, H: np.ndarray, R: np.ndarray):
    S = H @ P @ H.T + R
    S = 0.5 * (S + S.T)
    ev = np.linalg.eigvalsh(S)
    if not np.isfinite(ev).all() or ev[-1] <= 0 or ev[0] <= INNOVATION_RTOL * ev[-1]:
        raise DegenerateDesignError("innovation matrix H P_o H^T + R is singular")
    return linalg.cho_factor(S, lower=True)


def _check_shapes(prior: PriorModel, H: np.ndarray):
    if H.shape[1] != prior.n:
        raise ShapeError(f"design has {H.shape[1]} columns, prior has n={prior.n}")


def posterior_covariance(prior: PriorModel, design, noise=None) -> np.ndarray:
    """P_p = P_o - P_o H^T (H P_o H^T + R)^{-1} H P_o (Woodbury form)."""
    H = _matrix(design)
    _check_shapes(prior, H)
    R = _noise_cov(noise, H.shape[0])
    P = prior.cov
    PHt = P @ H.T
    fac = _innovation_factor(P, H, R)
    Pp = P - PHt @ linalg.cho_solve(fac, PHt.T)
    return 0.5 * (Pp + Pp.T)


def v1_cost(prior: PriorModel, design, noise=None) -> float:
    """Squared Frobenius norm of the a posteriori covariance."""
    Pp = posterior_covariance(prior, design, noise)
    return float(np.sum(Pp * Pp))


def mve_reconstruct(y, design, noise, prior: PriorModel) -> np.ndarray:
    """Minimum-variance estimate mu_o - P_o H^T (H P_o H^T + R)^{-1} (H mu_o - y).

    ``y`` may be a single measurement (length m) or a batch (B x m); the result
    has the matching shape (length n or B x n).
    """
    H = _matrix(design)
    _check_shapes(prior, H)
    m = H.shape[0]
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != m or y.ndim not in (1, 2):
        raise ShapeError(f"measurement shape {y.shape} does not match m={m}")
    R = _noise_cov(noise, m)
    P, mu = prior.cov, prior.mean
    fac = _innovation_factor(P, H, R)
    innov = (H @ mu)[:, None] - np.atleast_2d(y).T
    xhat = mu[:, None] - P @ H.T @ linalg.cho_solve(fac, innov)
    return xhat[:, 0] if y.ndim == 1 else xhat.T


def information_posterior(prior: PriorModel, design, noise) -> np.ndarray:
    """(P_o^{-1} + H^T R^{-1} H)^{-1}; requires SPD R. Cross-check only."""
    H = _matrix(design)
    R = _noise_cov(noise, H.shape[0])
    Rinv = np.linalg.inv(R)
    return np.linalg.inv(prior.precision() + H.T @ Rinv @ H)


def information_reconstruct(y, design, noise, prior: PriorModel) -> np.ndarray:
    """Information-form estimate; requires SPD R. Cross-check only."""
    H = _matrix(design)
    R = _noise_cov(noise, H.shape[0])
    Rinv = np.linalg.inv(R)
    Pp = information_posterior(prior, H, R)
    return Pp @ (H.T @ Rinv @ np.asarray(y, dtype=float) + prior.precision() @ prior.mean)


def measure(x, design, noise_std: float, seed) -> np.ndarray:
    """Simulate y = H x + nu with i.i.d. Gaussian nu of standard deviation ``noise_std``.

    ``seed`` is an int, a SeedSequence or a numpy Generator.
    """
    if noise_std < 0:
        raise ValidationError("noise std must be non-negative")
    H = _matrix(design)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != H.shape[1]:
        raise ShapeError(f"pose length {x.shape[-1]} does not match n={H.shape[1]}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    y = x @ H.T
    return y + noise_std * rng.standard_normal(y.shape)
