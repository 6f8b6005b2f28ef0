"""A priori pose statistics: datasets, mean/covariance estimation and the
principal-component decomposition used by every design algorithm."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ShapeError, ValidationError

UNITS = ("degrees", "radians", "dimensionless")

# Relative tolerances shared by the prior invariants.
SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10
TIE_RTOL = 1e-12
# Eigenvalue floor (relative to the largest) used only when P_o must be inverted.
PRECISION_FLOOR = 1e-12


@dataclass(frozen=True)
class PoseDataset:
    """Configuration samples stored column-wise.

    Parameters
    ----------
    labels : sequence of str
        One distinct name per dimension (n entries).
    samples : ndarray, shape (n, N)
        Column ``j`` is the j-th configuration sample.
    units : str
        One of ``degrees``, ``radians`` or ``dimensionless``.
    """

    labels: tuple[str, ...]
    samples: np.ndarray
    units: str = "degrees"

    def __post_init__(self):
        X = np.array(self.samples, dtype=float)
        if X.ndim != 2:
            raise ShapeError("samples must be an n x N matrix")
        labels = tuple(str(s) for s in self.labels)
        if len(labels) != X.shape[0]:
            raise ShapeError(f"{len(labels)} labels for {X.shape[0]} dimensions")
        if len(set(labels)) != len(labels):
            raise ValidationError("invalid data: labels must be distinct")
        if X.shape[0] < 1:
            raise ShapeError("need at least one dimension")
        if self.units not in UNITS:
            raise ValidationError(f"invalid data: unknown units {self.units!r}")
        X.setflags(write=False)
        object.__setattr__(self, "samples", X)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def N(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class PriorModel:
    """Gaussian prior over configurations.

    ``spectrum`` holds the descending eigenvalues of ``cov`` (equal to its
    singular values, since ``cov`` is PSD) and the columns of ``basis`` are the
    matching principal components.
    """

    mean: np.ndarray
    cov: np.ndarray
    spectrum: np.ndarray
    basis: np.ndarray
    labels: tuple[str, ...] = ()
    units: str = "degrees"
    samples: int | None = None

    @classmethod
    def from_moments(cls, mean, cov, labels: Sequence[str] | None = None,
                     units: str = "degrees", samples: int | None = None) -> "PriorModel":
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ShapeError(f"covariance shape {cov.shape} does not match mean length {n}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("invalid data: non-finite prior entries")
        basis, spectrum = decompose(cov)
        if spectrum.size and np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T))) < -PSD_RTOL * max(spectrum[0], 0.0):
            raise ValidationError("invalid prior: covariance is not positive semidefinite")
        if labels is None:
            labels = tuple(f"x{i + 1}" for i in range(n))
        labels = tuple(str(s) for s in labels)
        if len(labels) != n:
            raise ShapeError(f"{len(labels)} labels for {n} dimensions")
        for a in (mean, cov, spectrum, basis):
            a.setflags(write=False)
        return cls(mean=mean, cov=cov, spectrum=spectrum, basis=basis,
                   labels=labels, units=units, samples=samples)

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    def precision(self) -> np.ndarray:
        """Inverse of ``cov`` with eigenvalues floored at 1e-12 * sigma_1.

        Only the information-form cross-checks need this.
        """
        floor = PRECISION_FLOOR * max(float(self.spectrum[0]), np.finfo(float).tiny)
        vals = np.maximum(self.spectrum, floor)
        return (self.basis / vals) @ self.basis.T

    def to_json(self) -> dict:
        out = {"labels": list(self.labels), "mean": self.mean.tolist(),
               "cov": self.cov.tolist(), "units": self.units}
        if self.samples is not None:
            out["samples"] = self.samples
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PriorModel":
        try:
            return cls.from_moments(obj["mean"], obj["cov"], labels=obj.get("labels"),
                                    units=obj.get("units", "degrees"),
                                    samples=obj.get("samples"))
        except KeyError as exc:
            raise ValidationError(f"invalid data: prior JSON lacks field {exc}") from None


def _dominant_index(v: np.ndarray) -> int:
    a = np.abs(v)
    return int(np.flatnonzero(a >= a.max() - TIE_RTOL * max(a.max(), 1.0))[0])


def decompose(cov) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition with a reproducible ordering and sign.

    Returns ``(basis, spectrum)`` with ``spectrum`` descending and clipped at
    zero. Each basis column has its largest-magnitude entry non-negative (the
    first one on ties); eigenvalues equal within 1e-12 * sigma_1 are ordered
    by ascending index of their dominant coordinate.
    """
    P = np.asarray(cov, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError("covariance must be square")
    scale = np.linalg.norm(P)
    if np.linalg.norm(P - P.T) > SYMMETRY_RTOL * scale:
        raise ValidationError("not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (P + P.T))
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]

    for j in range(vecs.shape[1]):
        if vecs[_dominant_index(vecs[:, j]), j] < 0:
            vecs[:, j] = -vecs[:, j]

    n = vals.shape[0]
    tol = TIE_RTOL * max(abs(vals[0]) if n else 0.0, np.finfo(float).tiny)
    perm = list(range(n))
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and vals[start] - vals[stop] <= tol:
            stop += 1
        if stop - start > 1:
            group = sorted(range(start, stop), key=lambda j: _dominant_index(vecs[:, j]))
            perm[start:stop] = group
        start = stop
    vecs = vecs[:, perm]
    spectrum = np.clip(vals[perm], 0.0, None)
    return vecs, spectrum


def compute_prior(data: PoseDataset) -> PriorModel:
    """Sample mean and unbiased sample covariance of a dataset."""
    X = data.samples
    if X.shape[1] < 2:
        raise ValidationError("insufficient samples: need at least 2 columns")
    if not np.all(np.isfinite(X)):
        raise ValidationError("invalid data: non-finite samples")
    mu = X.mean(axis=1)
    Xc = X - mu[:, None]
    cov = Xc @ Xc.T / (X.shape[1] - 1)
    cov = 0.5 * (cov + cov.T)
    return PriorModel.from_moments(mu, cov, labels=data.labels, units=data.units,
                                   samples=X.shape[1])


def read_dataset_csv(path, units: str = "degrees") -> PoseDataset:
    """Read an N x n CSV (header row of labels, one sample per row)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"invalid data: {path} is empty")
    labels = [s.strip() for s in rows[0]]
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(labels):
            raise ValidationError(
                f"invalid data: line {lineno} has {len(row)} cells, expected {len(labels)}")
        values = []
        for col, cell in enumerate(row, start=1):
            try:
                values.append(float(cell))
            except ValueError:
                raise ValidationError(
                    f"invalid data: line {lineno}, column {col} ({labels[col - 1]}): "
                    f"non-numeric cell {cell!r}") from None
        data.append(values)
    if not data:
        raise ValidationError("insufficient samples: no data rows")
    return PoseDataset(labels=tuple(labels), samples=np.array(data).T, units=units)


def write_dataset_csv(data: PoseDataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(data.labels)
        for col in data.samples.T:
            w.writerow([repr(float(v)) for v in col])


def save_prior(prior: PriorModel, path, extra: dict | None = None) -> None:
    obj = prior.to_json()
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_prior(path) -> PriorModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid data: {path}: {exc}") from None
    return PriorModel.from_json(obj)
