"""Shared data model: datasets, coefficient matrices, penalty specifications,
fit results, synthetic-data specifications and the deterministic RNG contract.

Labels are 1-based in every external interface (files, CLI, reports) and
converted to 0-based indices internally where needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "InvalidInputError",
    "ConvergenceError",
    "NumericError",
    "Dataset",
    "CoefficientMatrix",
    "PenaltySpec",
    "GroupSlope",
    "SparseGroupSlope",
    "RowwiseSlope",
    "Nuclear",
    "group_lasso",
    "sparse_group_lasso",
    "lasso",
    "FitResult",
    "GlobalRowSparse",
    "DoubleRowSparse",
    "LowRank",
    "Gaussian",
    "Rademacher",
    "StudentT",
    "SyntheticSpec",
    "RiskReport",
    "center_rows",
    "rng_stream",
    "load_dataset_csv",
    "save_dataset_csv",
    "save_coefficients",
    "load_coefficients",
]


class InvalidInputError(ValueError):
    """Raised when an input violates a documented precondition."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative routine fails to reach its tolerance.

    Carries the final residual in ``residual``.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class NumericError(RuntimeError):
    """Raised on numerical failures (e.g. SVD non-convergence)."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Datasets and coefficient matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """A classification sample: n feature rows, integer labels in 1..L.

    Parameters
    ----------
    features : ndarray of shape (n, d)
        Feature matrix, one row per observation.
    labels : ndarray of shape (n,)
        Integer class labels in ``1..num_classes``.
    num_classes : int
        Number of classes L, at least 2.
    standardized : bool
        When set, asserts every feature column has mean square 1
        (checked within 1e-8).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    standardized: bool = False

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError("features must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("features must be finite")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InvalidInputError("labels must be 1-D with one entry per feature row")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(y == np.round(y)):
                raise InvalidInputError("labels must be integers")
            y = y.astype(np.int64)
        if self.num_classes < 2:
            raise InvalidInputError("num_classes must be at least 2")
        if y.min() < 1 or y.max() > self.num_classes:
            raise InvalidInputError(
                f"labels must lie in [1, {self.num_classes}]; "
                f"got range [{y.min()}, {y.max()}]"
            )
        if self.standardized:
            msq = np.mean(X**2, axis=0)
            if np.max(np.abs(msq - 1.0)) > 1e-8:
                raise InvalidInputError(
                    "standardized flag set but some column mean square differs "
                    "from 1 by more than 1e-8"
                )
        object.__setattr__(self, "features", _readonly(X))
        y = np.array(y, dtype=np.int64, copy=True)
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def label_indicators(self) -> np.ndarray:
        """One-hot indicator matrix of shape (n, L)."""
        out = np.zeros((self.n, self.num_classes))
        out[np.arange(self.n), self.labels - 1] = 1.0
        return out

    def standardize(self) -> "Dataset":
        """Rescale each column to unit mean square and set the flag."""
        msq = np.mean(self.features**2, axis=0)
        if np.any(msq <= 0):
            raise InvalidInputError("cannot standardize a zero column")
        X = self.features / np.sqrt(msq)
        return Dataset(X, self.labels, self.num_classes, standardized=True)


@dataclass(frozen=True)
class CoefficientMatrix:
    """A d x L real coefficient matrix, one column per class.

    ``centered`` asserts zero row sums (the symmetric identifiability
    constraint), checked within 1e-10.
    """

    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        B = np.asarray(self.values, dtype=float)
        if B.ndim != 2:
            raise InvalidInputError("coefficient values must be a 2-D matrix")
        if not np.all(np.isfinite(B)):
            raise InvalidInputError("coefficient values must be finite")
        if self.centered:
            drift = np.max(np.abs(B.sum(axis=1)))
            if drift > 1e-10:
                raise InvalidInputError(
                    f"centered flag set but max |row sum| = {drift:.3e} > 1e-10"
                )
        object.__setattr__(self, "values", _readonly(B))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


def center_rows(B: CoefficientMatrix | np.ndarray) -> CoefficientMatrix:
    """Subtract each row's mean, yielding zero row sums.

    Class scores shift by a per-feature constant, so predicted labels are
    unchanged for every input. Idempotent.
    """
    vals = B.values if isinstance(B, CoefficientMatrix) else np.asarray(B, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("coefficient values must be finite")
    out = vals - vals.mean(axis=1, keepdims=True)
    return CoefficientMatrix(out, centered=True)


# ---------------------------------------------------------------------------
# Penalty specifications
# ---------------------------------------------------------------------------


def _check_weights(w: np.ndarray, name: str, length: int | None = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size < 1:
        raise InvalidInputError(f"{name} must be a non-empty 1-D sequence")
    if length is not None and w.size != length:
        raise InvalidInputError(f"{name} must have length {length}, got {w.size}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError(f"{name} must be finite")
    if np.any(w <= 0):
        raise InvalidInputError(f"{name} must be strictly positive")
    if np.any(np.diff(w) > 0):
        raise InvalidInputError(f"{name} must be nonincreasing")
    return _readonly(w)


class PenaltySpec:
    """Base class for penalty specifications (a closed tagged union)."""

    __slots__ = ()


@dataclass(frozen=True)
class GroupSlope(PenaltySpec):
    """Sorted-l2-of-rows penalty: sum_j lam_j * (j-th largest row l2 norm).

    ``lam`` must be nonincreasing and strictly positive, one weight per row.
    """

    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_weights(self.lam, "lam"))


@dataclass(frozen=True)
class RowwiseSlope(PenaltySpec):
    """Per-row sorted-l1 penalty: sum_j sum_l kappa_l * (l-th largest |entry|
    of row j). ``kappa`` has one weight per class column."""

    kappa: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "kappa", _check_weights(self.kappa, "kappa"))


@dataclass(frozen=True)
class SparseGroupSlope(PenaltySpec):
    """Sum of the group Slope penalty (weights ``lam``, length d) and the
    per-row sorted-l1 penalty (weights ``kappa``, length L)."""

    lam: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_weights(self.lam, "lam"))
        object.__setattr__(self, "kappa", _check_weights(self.kappa, "kappa"))


@dataclass(frozen=True)
class Nuclear(PenaltySpec):
    """Nuclear-norm penalty lam * sum of singular values."""

    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidInputError("lam must be a positive finite scalar")


def group_lasso(d: int, lam: float) -> GroupSlope:
    """Group Lasso: constant-weight special case of the group Slope."""
    return GroupSlope(np.full(d, float(lam)))


def sparse_group_lasso(d: int, L: int, lam: float, kappa: float) -> SparseGroupSlope:
    """Sparse group Lasso: constant weights in both penalty parts."""
    return SparseGroupSlope(np.full(d, float(lam)), np.full(L, float(kappa)))


def lasso(L: int, lam: float) -> RowwiseSlope:
    """Entrywise Lasso: constant-weight special case of the row-wise Slope."""
    return RowwiseSlope(np.full(L, float(lam)))


# ---------------------------------------------------------------------------
# Fit results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    """Outcome of a penalized fit.

    ``fixed_point_residual`` is the Frobenius norm of the difference between
    the returned iterate and one prox-gradient step from it, divided by the
    step size. ``pre_centering_row_mean`` records the max absolute row mean
    of the raw optimizer output before any explicit centering (diagnostic for
    the inherent-centering property of row-norm penalties).
    """

    coefficients: CoefficientMatrix
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    fixed_point_residual: float
    pre_centering_row_mean: float = float("nan")

    def __post_init__(self):
        object.__setattr__(
            self, "objective_trace", _readonly(np.asarray(self.objective_trace))
        )


# ---------------------------------------------------------------------------
# Synthetic-data specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlobalRowSparse:
    """Truth with at most d0 non-zero rows."""

    d0: int


@dataclass(frozen=True)
class DoubleRowSparse:
    """Truth with d0 non-zero rows, the j-th carrying at most m[j] non-zero
    entries (each at least 2, so a non-zero row can satisfy zero row sums)."""

    d0: int
    m: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))


@dataclass(frozen=True)
class LowRank:
    """Truth of rank at most r0."""

    r0: int


@dataclass(frozen=True)
class Gaussian:
    """Zero-mean Gaussian features; identity covariance when None."""

    covariance: np.ndarray | None = None

    def __post_init__(self):
        if self.covariance is not None:
            C = np.asarray(self.covariance, dtype=float)
            if C.ndim != 2 or C.shape[0] != C.shape[1]:
                raise InvalidInputError("covariance must be square")
            object.__setattr__(self, "covariance", _readonly(C))


@dataclass(frozen=True)
class Rademacher:
    """Independent +/-1 features (unit second moment by construction)."""


@dataclass(frozen=True)
class StudentT:
    """Student-t features scaled to unit second moment; requires dof > 2."""

    dof: float

    def __post_init__(self):
        if not self.dof > 2:
            raise InvalidInputError("StudentT requires dof > 2 for a finite, unit-scalable second moment")


Structure = GlobalRowSparse | DoubleRowSparse | LowRank
FeatureLaw = Gaussian | Rademacher | StudentT


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic classification problem with known truth.

    ``delta`` bounds all class probabilities into [delta, 1-delta] on the
    realized sample, equivalently |score| <= ln((1-delta)/delta).
    """

    n: int
    d: int
    L: int
    structure: Structure
    signal_scale: float
    delta: float
    feature_law: FeatureLaw = field(default_factory=Gaussian)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or self.L < 2:
            raise InvalidInputError("need n >= 1, d >= 1, L >= 2")
        if not (0.0 < self.delta < 0.5):
            raise InvalidInputError("delta must lie in (0, 1/2)")
        if self.signal_scale < 0 or not np.isfinite(self.signal_scale):
            raise InvalidInputError("signal_scale must be a nonnegative real")
        s = self.structure
        if isinstance(s, GlobalRowSparse):
            if not (1 <= s.d0 <= min(self.d, self.n)):
                raise InvalidInputError("need 1 <= d0 <= min(d, n)")
        elif isinstance(s, DoubleRowSparse):
            if not (1 <= s.d0 <= min(self.d, self.n)):
                raise InvalidInputError("need 1 <= d0 <= min(d, n)")
            if len(s.m) != s.d0:
                raise InvalidInputError("m must have one entry per non-zero row")
            if any(mj > self.L for mj in s.m):
                raise InvalidInputError("each m_j must be <= L")
            if any(mj < 2 for mj in s.m):
                raise InvalidInputError(
                    "each m_j must be >= 2: a 1-sparse non-zero row cannot have zero sum"
                )
        elif isinstance(s, LowRank):
            if not (1 <= s.r0 <= min(self.L - 1, self.d)):
                raise InvalidInputError("need 1 <= r0 <= min(L - 1, d)")
        else:
            raise InvalidInputError(f"unknown structure {type(s).__name__}")
        law = self.feature_law
        if isinstance(law, Gaussian) and law.covariance is not None:
            if law.covariance.shape[0] != self.d:
                raise InvalidInputError("covariance dimension must equal d")

    @property
    def c_star(self) -> float:
        return math.log((1.0 - self.delta) / self.delta)


# ---------------------------------------------------------------------------
# Risk reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RiskReport:
    """Misclassification/excess/KL risks plus a margin-distribution curve.

    ``margin_cdf`` is a tuple of (h, P(p_(1) - p_(2) <= h)) pairs on an
    increasing h grid. ``train_error`` is NaN when no training data was
    supplied.
    """

    train_error: float
    test_error: float
    bayes_risk: float
    excess_risk: float
    kl_risk: float
    margin_cdf: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "margin_cdf",
            tuple((float(h), float(p)) for h, p in self.margin_cdf),
        )


# ---------------------------------------------------------------------------
# Deterministic RNG streams
# ---------------------------------------------------------------------------


def rng_stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Independent, reproducible random stream.

    Uses the Philox 4x64 counter-mode generator with the 128-bit key
    ``(stream_id << 64) | (master_seed mod 2**64)``; distinct (seed, stream)
    pairs give independent streams, identical pairs give identical streams on
    every platform, and consumption order across streams is irrelevant.
    """
    key = (int(stream_id) % (1 << 64)) << 64 | (int(master_seed) % (1 << 64))
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_dataset_csv(path: str | Path) -> Dataset:
    """Read a dataset from CSV with header ``y, x1, ..., xd``.

    Labels must be integers 1..L; L is taken as the max label. Raises
    InvalidInputError naming the offending line on malformed input.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InvalidInputError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    if not header or header[0] != "y":
        raise InvalidInputError(f"{path}: line 1: header must start with 'y'")
    d = len(header) - 1
    if d < 1 or header[1:] != [f"x{j}" for j in range(1, d + 1)]:
        raise InvalidInputError(f"{path}: line 1: header must be y, x1..x{max(d,1)}")
    ys = []
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise InvalidInputError(
                f"{path}: line {i}: expected {d + 1} fields, got {len(parts)}"
            )
        try:
            y = int(parts[0])
            xs = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise InvalidInputError(f"{path}: line {i}: {exc}") from exc
        ys.append(y)
        rows.append(xs)
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    y = np.asarray(ys, dtype=np.int64)
    if y.min() < 1:
        raise InvalidInputError(f"{path}: labels must be >= 1")
    return Dataset(np.asarray(rows, dtype=float), y, num_classes=int(y.max()))


def save_dataset_csv(data: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("y," + ",".join(f"x{j}" for j in range(1, data.d + 1)) + "\n")
        for i in range(data.n):
            row = ",".join(repr(float(v)) for v in data.features[i])
            fh.write(f"{data.labels[i]},{row}\n")


def _penalty_metadata(spec: PenaltySpec | None) -> dict:
    if spec is None:
        return {"family": "none"}
    if isinstance(spec, GroupSlope):
        return {"family": "group-slope", "lam": [float(v) for v in spec.lam]}
    if isinstance(spec, SparseGroupSlope):
        return {
            "family": "sparse-group-slope",
            "lam": [float(v) for v in spec.lam],
            "kappa": [float(v) for v in spec.kappa],
        }
    if isinstance(spec, RowwiseSlope):
        return {"family": "rowwise-slope", "kappa": [float(v) for v in spec.kappa]}
    if isinstance(spec, Nuclear):
        return {"family": "nuclear", "lam": float(spec.lam)}
    raise InvalidInputError(f"unknown penalty spec {type(spec).__name__}")


def save_coefficients(
    B: CoefficientMatrix, path: str | Path, penalty: PenaltySpec | None = None
) -> None:
    """Write coefficients as CSV (d rows x L columns) plus a JSON sidecar
    with d, L, centered and penalty metadata at ``<path>.meta.json``."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in B.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    meta = {
        "d": B.d,
        "L": B.num_classes,
        "centered": bool(B.centered),
        "penalty": _penalty_metadata(penalty),
    }
    sidecar = path.with_name(path.name + ".meta.json")
    with sidecar.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_coefficients(path: str | Path) -> CoefficientMatrix:
    path = Path(path)
    vals = np.loadtxt(path, delimiter=",", ndmin=2)
    sidecar = path.with_name(path.name + ".meta.json")
    centered = False
    if sidecar.exists():
        with sidecar.open("r", encoding="utf-8") as fh:
            meta = json.load(fh)
        centered = bool(meta.get("centered", False))
        if meta.get("d") != vals.shape[0] or meta.get("L") != vals.shape[1]:
            raise InvalidInputError(f"{path}: sidecar dimensions disagree with CSV")
    return CoefficientMatrix(vals, centered=centered)
