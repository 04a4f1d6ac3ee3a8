"""Synthetic data with known truth, risk estimation and experiment sweeps.

Stream layout inside one SyntheticSpec seed (Philox streams of the spec's
seed): 0 draws the truth matrix, 1 the training sample, 2 the Bayes-risk
Monte Carlo features, 3 the held-out test sample. Every quantity is therefore
reproducible from the spec alone, and the test sample is shared across
penalties fitted to the same spec (common random numbers).
"""

from __future__ import annotations

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import model, penalties
from .core import (
    CoefficientMatrix,
    Dataset,
    DoubleRowSparse,
    Gaussian,
    GlobalRowSparse,
    GroupSlope,
    InvalidInputError,
    LowRank,
    Nuclear,
    PenaltySpec,
    Rademacher,
    RiskReport,
    SparseGroupSlope,
    StudentT,
    SyntheticSpec,
    rng_stream,
)
from .penalties import WeightConfig
from .solver import SolverConfig, fit

__all__ = [
    "SecondMomentReport",
    "MarginReport",
    "PenaltyRecipe",
    "ExperimentRow",
    "AggregateRow",
    "generate",
    "estimate_bayes_risk",
    "margin_report",
    "risk_report",
    "rademacher_mc",
    "second_moments",
    "scaling_experiment",
    "aggregate_rows",
    "rate_slope",
    "RUN_COLUMNS",
    "AGGREGATE_COLUMNS",
]

_STREAM_TRUTH = 0
_STREAM_TRAIN = 1
_STREAM_BAYES = 2
_STREAM_TEST = 3

_DEFAULT_MARGIN_GRID = np.geomspace(1e-3, 1.0, 25)


@dataclass(frozen=True)
class SecondMomentReport:
    """Extreme eigenvalues of the sample second-moment matrix X^T X / n and
    the mean squared row norm (equal to its trace)."""

    tau_1: float
    tau_d: float
    m_hat: float


@dataclass(frozen=True)
class MarginReport:
    """Empirical CDF of the top-two probability gap p_(1)(x) - p_(2)(x).

    ``fitted_alpha`` is a log-log least-squares slope of the CDF over the
    smallest grid decade, a diagnostic for the low-noise exponent; None when
    the CDF vanishes there.
    """

    h_grid: tuple[float, ...]
    cdf: tuple[float, ...]
    fitted_alpha: float | None


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def _draw_features(spec: SyntheticSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    law = spec.feature_law
    if isinstance(law, Gaussian):
        Z = rng.standard_normal((size, spec.d))
        if law.covariance is None:
            return Z
        chol = np.linalg.cholesky(law.covariance)
        return Z @ chol.T
    if isinstance(law, Rademacher):
        return rng.integers(0, 2, size=(size, spec.d)).astype(float) * 2.0 - 1.0
    if isinstance(law, StudentT):
        Z = rng.standard_t(law.dof, size=(size, spec.d))
        return Z / math.sqrt(law.dof / (law.dof - 2.0))
    raise InvalidInputError(f"unknown feature law {type(law).__name__}")


def _draw_truth(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    d, L = spec.d, spec.L
    B = np.zeros((d, L))
    s = spec.structure
    if isinstance(s, GlobalRowSparse):
        rows = np.sort(rng.choice(d, size=s.d0, replace=False))
        vals = spec.signal_scale * rng.standard_normal((s.d0, L))
        vals -= vals.mean(axis=1, keepdims=True)
        B[rows] = vals
    elif isinstance(s, DoubleRowSparse):
        rows = np.sort(rng.choice(d, size=s.d0, replace=False))
        for j, mj in zip(rows, s.m):
            cols = rng.choice(L, size=mj, replace=False)
            v = spec.signal_scale * rng.standard_normal(mj)
            v -= v.mean()  # zero row sum on the support keeps the row mj-sparse
            B[j, cols] = v
    elif isinstance(s, LowRank):
        left = rng.standard_normal((d, s.r0))
        right = rng.standard_normal((s.r0, L))
        right -= right.mean(axis=1, keepdims=True)
        B = spec.signal_scale * (left @ right) / math.sqrt(s.r0)
    else:
        raise InvalidInputError(f"unknown structure {type(s).__name__}")
    return B


def _draw_labels(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(P, axis=1)
    u = rng.random(P.shape[0])
    y = (u[:, None] >= cum).sum(axis=1) + 1
    return np.minimum(y, P.shape[1]).astype(np.int64)


def generate(spec: SyntheticSpec) -> tuple[Dataset, CoefficientMatrix]:
    """Draw a truth matrix with the requested structure and a sample from it.

    The truth has exact zero row sums; it is rescaled globally so that the
    realized sample satisfies max |score| <= ln((1-delta)/delta), and labels
    are drawn from the softmax probabilities. Bitwise deterministic given the
    spec.
    """
    B = _draw_truth(spec, rng_stream(spec.seed, _STREAM_TRUTH))
    rng = rng_stream(spec.seed, _STREAM_TRAIN)
    X = _draw_features(spec, rng, spec.n)
    max_score = float(np.max(np.abs(X @ B))) if B.any() else 0.0
    if max_score > spec.c_star:
        B = B * (spec.c_star / max_score)
    B -= B.mean(axis=1, keepdims=True)  # remove float residue before flagging
    P = np.exp(model._log_softmax(X @ B))
    y = _draw_labels(P, rng)
    return (
        Dataset(X, y, spec.L),
        CoefficientMatrix(B, centered=True),
    )


def estimate_bayes_risk(
    B: CoefficientMatrix | np.ndarray, spec: SyntheticSpec, mc_samples: int
) -> tuple[float, float]:
    """Monte-Carlo Bayes risk 1 - E max_l p_l(X) with a binomial-style
    standard error, on fresh feature draws from the spec's law."""
    if mc_samples < 1:
        raise InvalidInputError("mc_samples must be >= 1")
    vals = B.values if isinstance(B, CoefficientMatrix) else np.asarray(B, dtype=float)
    rng = rng_stream(spec.seed, _STREAM_BAYES)
    X = _draw_features(spec, rng, mc_samples)
    P = np.exp(model._log_softmax(X @ vals))
    loss = 1.0 - P.max(axis=1)
    se = float(loss.std(ddof=1) / math.sqrt(mc_samples)) if mc_samples > 1 else 0.0
    return float(loss.mean()), se


def margin_report(
    B: CoefficientMatrix | np.ndarray,
    X: np.ndarray,
    h_grid: np.ndarray | None = None,
) -> MarginReport:
    """Empirical margin CDF P(p_(1) - p_(2) <= h) under B on the rows of X."""
    vals = B.values if isinstance(B, CoefficientMatrix) else np.asarray(B, dtype=float)
    grid = _DEFAULT_MARGIN_GRID if h_grid is None else np.asarray(h_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("h_grid must be strictly increasing")
    P = np.exp(model._log_softmax(np.asarray(X, dtype=float) @ vals))
    top2 = -np.partition(-P, 1, axis=1)[:, :2]
    gap = top2[:, 0] - top2[:, 1]
    cdf = np.array([(gap <= h).mean() for h in grid])

    # Diagnostic slope of ln cdf vs ln h over the smallest decade of the grid.
    alpha = None
    lo = grid[0]
    mask = (grid <= 10.0 * lo) & (cdf > 0.0)
    if mask.sum() >= 2:
        coef = np.polyfit(np.log(grid[mask]), np.log(cdf[mask]), deg=1)
        alpha = float(coef[0])
    return MarginReport(tuple(float(h) for h in grid), tuple(map(float, cdf)), alpha)


def risk_report(
    B_hat: CoefficientMatrix | np.ndarray,
    B_true: CoefficientMatrix | np.ndarray,
    spec: SyntheticSpec,
    test_size: int,
    mc_samples: int,
    train_data: Dataset | None = None,
) -> RiskReport:
    """Risks of the plug-in classifier of B_hat against the truth B_true.

    A fresh test sample of ``test_size`` is drawn from the spec (shared by
    every call with the same spec); the Bayes risk uses its own Monte-Carlo
    stream of ``mc_samples`` draws. ``train_error`` is filled only when the
    training data is supplied.
    """
    hat = B_hat.values if isinstance(B_hat, CoefficientMatrix) else np.asarray(B_hat, float)
    true = B_true.values if isinstance(B_true, CoefficientMatrix) else np.asarray(B_true, float)
    if hat.shape != true.shape:
        raise InvalidInputError("B_hat and B_true must have equal shapes")
    if test_size < 1:
        raise InvalidInputError("test_size must be >= 1")

    rng = rng_stream(spec.seed, _STREAM_TEST)
    X_test = _draw_features(spec, rng, test_size)
    P_true = np.exp(model._log_softmax(X_test @ true))
    y_test = _draw_labels(P_true, rng)

    test_error = float((model.predict_many(hat, X_test) != y_test).mean())
    bayes, _ = estimate_bayes_risk(true, spec, mc_samples)
    kl = model.kl_divergence(true, hat, X_test)
    margins = margin_report(true, X_test)
    train_error = float("nan")
    if train_data is not None:
        train_error = float(
            (model.predict_many(hat, train_data.features) != train_data.labels).mean()
        )
    return RiskReport(
        train_error=train_error,
        test_error=test_error,
        bayes_risk=bayes,
        excess_risk=test_error - bayes,
        kl_risk=kl,
        margin_cdf=tuple(zip(margins.h_grid, margins.cdf)),
    )


# ---------------------------------------------------------------------------
# Rademacher complexity and second moments
# ---------------------------------------------------------------------------


def rademacher_mc(
    spec: PenaltySpec,
    X: np.ndarray,
    L: int,
    num_draws: int,
    seed: int = 0,
    return_draws: bool = False,
):
    """Monte-Carlo empirical Rademacher complexity of the unit penalty ball.

    For each n x L sign matrix S the supremum over the ball equals the dual
    norm of X^T S / sqrt(n); returns (mean, standard error), plus the
    per-draw values when requested. L is explicit because not every penalty
    spec encodes the class count.
    """
    if num_draws < 1:
        raise InvalidInputError("num_draws must be >= 1")
    if L < 1:
        raise InvalidInputError("L must be >= 1")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    rng = rng_stream(seed, 0)
    vals = np.empty(num_draws)
    for i in range(num_draws):
        signs = rng.integers(0, 2, size=(n, L)).astype(float) * 2.0 - 1.0
        vals[i] = penalties.dual_norm(spec, X.T @ signs / math.sqrt(n))
    se = float(vals.std(ddof=1) / math.sqrt(num_draws)) if num_draws > 1 else 0.0
    if return_draws:
        return float(vals.mean()), se, vals
    return float(vals.mean()), se


def second_moments(X: np.ndarray) -> SecondMomentReport:
    """Eigen-extremes of X^T X / n and the mean squared row norm."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidInputError("X must be a non-empty 2-D matrix")
    V = X.T @ X / X.shape[0]
    eigs = np.linalg.eigvalsh(V)
    tau_d = float(eigs[0])
    if -1e-10 < tau_d < 0.0:
        tau_d = 0.0
    return SecondMomentReport(
        tau_1=float(eigs[-1]),
        tau_d=tau_d,
        m_hat=float(np.mean((X * X).sum(axis=1))),
    )


# ---------------------------------------------------------------------------
# Scaling experiments
# ---------------------------------------------------------------------------

_FAMILIES = (
    "group-slope",
    "sparse-group-slope",
    "nuclear",
    "group-lasso",
    "sparse-group-lasso",
)


@dataclass(frozen=True)
class PenaltyRecipe:
    """A penalty family plus its weight constants; materialized per dataset
    because the formula weights depend on (d, L, n) and, for the nuclear
    family, on sample second moments. ``lambda_scale`` multiplies every
    weight."""

    family: str
    weights: WeightConfig = WeightConfig()
    lambda_scale: float = 1.0
    name: str | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidInputError(
                f"unknown penalty family {self.family!r}; choose from {_FAMILIES}"
            )
        if not (np.isfinite(self.lambda_scale) and self.lambda_scale > 0):
            raise InvalidInputError("lambda_scale must be strictly positive")

    @property
    def label(self) -> str:
        return self.name if self.name is not None else self.family

    def materialize(self, data: Dataset) -> PenaltySpec:
        return self.materialize_dims(data.d, data.num_classes, data.n, data.features)

    def materialize_dims(
        self, d: int, L: int, n: int, features: np.ndarray | None = None
    ) -> PenaltySpec:
        s = self.lambda_scale
        if self.family == "group-slope":
            return GroupSlope(s * penalties.group_slope_weights(d, L, n, self.weights))
        if self.family == "group-lasso":
            lam = s * math.sqrt((L + math.log(d)) / n) / self.weights.c0
            return GroupSlope(np.full(d, lam))
        if self.family == "sparse-group-slope":
            lam, kappa = penalties.sparse_group_slope_weights(d, L, n, self.weights)
            return SparseGroupSlope(s * lam, s * kappa)
        if self.family == "sparse-group-lasso":
            # Constant weights sqrt(ln d / n), sqrt(ln L / n); d = 1 degenerates
            # to the 1/sqrt(n) floor.
            lam = s * self.weights.c1 * (
                math.sqrt(math.log(d) / n) if d > 1 else 1.0 / math.sqrt(n)
            )
            kappa = s * self.weights.c2 * math.sqrt(math.log(L) / n)
            return SparseGroupSlope(np.full(d, lam), np.full(L, kappa))
        if self.family == "nuclear":
            if features is None:
                raise InvalidInputError(
                    "the nuclear family needs sample features for its tuning formula"
                )
            return Nuclear(s * penalties.nuclear_lambda(features, L, self.weights))
        raise InvalidInputError(f"unknown penalty family {self.family!r}")


RUN_COLUMNS = (
    "grid_id",
    "penalty",
    "replicate",
    "seed",
    "n",
    "d",
    "L",
    "structure",
    "d0_or_r0",
    "train_err",
    "test_err",
    "bayes_risk",
    "excess_risk",
    "kl_risk",
    "iterations",
    "converged",
    "wall_ms",
)

AGGREGATE_COLUMNS = (
    "grid_id",
    "penalty",
    "n",
    "d",
    "L",
    "structure",
    "d0_or_r0",
    "replicates",
    "n_converged",
    "mean_excess_risk",
    "stderr_excess_risk",
    "mean_test_err",
    "stderr_test_err",
    "mean_kl_risk",
    "stderr_kl_risk",
)


@dataclass(frozen=True)
class ExperimentRow:
    grid_id: int
    penalty: str
    replicate: int
    seed: int
    n: int
    d: int
    L: int
    structure: str
    d0_or_r0: int
    train_err: float
    test_err: float
    bayes_risk: float
    excess_risk: float
    kl_risk: float
    iterations: int
    converged: bool
    wall_ms: float


@dataclass(frozen=True)
class AggregateRow:
    grid_id: int
    penalty: str
    n: int
    d: int
    L: int
    structure: str
    d0_or_r0: int
    replicates: int
    n_converged: int
    mean_excess_risk: float
    stderr_excess_risk: float
    mean_test_err: float
    stderr_test_err: float
    mean_kl_risk: float
    stderr_kl_risk: float


def _structure_fields(spec: SyntheticSpec) -> tuple[str, int]:
    s = spec.structure
    if isinstance(s, GlobalRowSparse):
        return "global_row_sparse", s.d0
    if isinstance(s, DoubleRowSparse):
        return "double_row_sparse", s.d0
    return "low_rank", s.r0


def _cell_seed(master_seed: int, grid_id: int, replicate: int) -> int:
    stream = grid_id * 1_000_003 + replicate
    return int(rng_stream(master_seed, stream).integers(2**63))


def _run_cell(args) -> list[ExperimentRow]:
    (grid_id, spec, replicate, recipes, master_seed, solver_cfg, test_size, mc_samples) = args
    spec_r = dataclasses.replace(spec, seed=_cell_seed(master_seed, grid_id, replicate))
    structure, size0 = _structure_fields(spec_r)
    train, B_true = generate(spec_r)
    rows = []
    for recipe in recipes:
        t0 = time.perf_counter()
        try:
            pen_spec = recipe.materialize(train)
            result = fit(train, pen_spec, solver_cfg)
            wall_ms = (time.perf_counter() - t0) * 1000.0
            report = risk_report(
                result.coefficients, B_true, spec_r, test_size, mc_samples, train
            )
            row = ExperimentRow(
                grid_id=grid_id,
                penalty=recipe.label,
                replicate=replicate,
                seed=spec_r.seed,
                n=spec_r.n,
                d=spec_r.d,
                L=spec_r.L,
                structure=structure,
                d0_or_r0=size0,
                train_err=report.train_error,
                test_err=report.test_error,
                bayes_risk=report.bayes_risk,
                excess_risk=report.excess_risk,
                kl_risk=report.kl_risk,
                iterations=result.iterations,
                converged=result.converged,
                wall_ms=wall_ms,
            )
        except Exception:
            wall_ms = (time.perf_counter() - t0) * 1000.0
            row = ExperimentRow(
                grid_id=grid_id,
                penalty=recipe.label,
                replicate=replicate,
                seed=spec_r.seed,
                n=spec_r.n,
                d=spec_r.d,
                L=spec_r.L,
                structure=structure,
                d0_or_r0=size0,
                train_err=float("nan"),
                test_err=float("nan"),
                bayes_risk=float("nan"),
                excess_risk=float("nan"),
                kl_risk=float("nan"),
                iterations=0,
                converged=False,
                wall_ms=wall_ms,
            )
        rows.append(row)
    return rows


def scaling_experiment(
    grid: list[SyntheticSpec],
    recipes: list[PenaltyRecipe],
    replicates: int,
    master_seed: int,
    threads: int = 1,
    solver_cfg: SolverConfig = SolverConfig(),
    test_size: int = 20000,
    mc_samples: int = 20000,
) -> list[ExperimentRow]:
    """Full sweep: for every grid point x penalty x replicate, generate, fit
    and report risks. Each (grid point, replicate) cell has its own derived
    seed, so results are independent of scheduling; rows come back sorted by
    (grid_id, penalty, replicate). Individual fit failures become NaN rows
    with converged=False, never aborting the sweep.
    """
    if not grid:
        raise InvalidInputError("grid must be nonempty")
    if replicates < 1:
        raise InvalidInputError("replicates must be >= 1")
    tasks = [
        (gid, spec, rep, tuple(recipes), master_seed, solver_cfg, test_size, mc_samples)
        for gid, spec in enumerate(grid)
        for rep in range(replicates)
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.grid_id, r.penalty, r.replicate))
    return rows


def _mean_stderr(vals: list[float]) -> tuple[float, float]:
    arr = np.asarray([v for v in vals if not math.isnan(v)])
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def aggregate_rows(rows: list[ExperimentRow]) -> list[AggregateRow]:
    """Mean/stderr per (grid_id, penalty), order-independent."""
    groups: dict[tuple[int, str], list[ExperimentRow]] = {}
    for row in rows:
        groups.setdefault((row.grid_id, row.penalty), []).append(row)
    out = []
    for (gid, pen), members in sorted(groups.items()):
        members = sorted(members, key=lambda r: r.replicate)
        head = members[0]
        m_ex, s_ex = _mean_stderr([r.excess_risk for r in members])
        m_te, s_te = _mean_stderr([r.test_err for r in members])
        m_kl, s_kl = _mean_stderr([r.kl_risk for r in members])
        out.append(
            AggregateRow(
                grid_id=gid,
                penalty=pen,
                n=head.n,
                d=head.d,
                L=head.L,
                structure=head.structure,
                d0_or_r0=head.d0_or_r0,
                replicates=len(members),
                n_converged=sum(1 for r in members if r.converged),
                mean_excess_risk=m_ex,
                stderr_excess_risk=s_ex,
                mean_test_err=m_te,
                stderr_test_err=s_te,
                mean_kl_risk=m_kl,
                stderr_kl_risk=s_kl,
            )
        )
    return out


def rate_slope(ns: np.ndarray, mean_risks: np.ndarray) -> float:
    """Least-squares slope of log mean risk against log n."""
    ns = np.asarray(ns, dtype=float)
    risks = np.asarray(mean_risks, dtype=float)
    mask = np.isfinite(risks) & (risks > 0)
    if mask.sum() < 2:
        return float("nan")
    coef = np.polyfit(np.log(ns[mask]), np.log(risks[mask]), deg=1)
    return float(coef[0])
