"""Optimization engines for the penalized maximum-likelihood estimators.

``fit`` minimizes  nll(B) + penalty(B)  by FISTA with backtracking line
search and adaptive restart (momentum is dropped whenever the objective
would increase, falling back to a plain prox-gradient step whose descent the
backtracking condition guarantees). ``fit_exhaustive_complexity`` is the
combinatorial oracle for the complexity penalty, feasible only at tiny d.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import model, penalties
from .core import (
    CoefficientMatrix,
    Dataset,
    FitResult,
    GroupSlope,
    InvalidInputError,
    Nuclear,
    NumericError,
    PenaltySpec,
    RowwiseSlope,
    SparseGroupSlope,
    center_rows,
)

__all__ = ["SolverConfig", "fit", "fit_exhaustive_complexity"]

_STEP_FLOOR = 1e-18


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the FISTA engine.

    ``initial_step="auto"`` estimates 1 / lambda_max(X^T X / n) by 50 power
    iterations (the gradient Lipschitz bound of the multinomial NLL);
    backtracking corrects any slack. ``prox_tol`` controls inner Dykstra
    loops for the sparse-group prox.
    """

    max_iter: int = 5000
    grad_map_tol: float = 1e-7
    backtrack_factor: float = 0.5
    initial_step: float | str = "auto"
    enforce_centering: bool = False
    prox_tol: float = 1e-9

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be >= 1")
        if not self.grad_map_tol > 0:
            raise InvalidInputError("grad_map_tol must be positive")
        if not (0.0 < self.backtrack_factor < 1.0):
            raise InvalidInputError("backtrack_factor must lie in (0, 1)")
        if isinstance(self.initial_step, str):
            if self.initial_step != "auto":
                raise InvalidInputError("initial_step must be positive or 'auto'")
        elif not self.initial_step > 0:
            raise InvalidInputError("initial_step must be positive or 'auto'")
        if not self.prox_tol > 0:
            raise InvalidInputError("prox_tol must be positive")


def _auto_step(X: np.ndarray) -> float:
    """1 / lambda_max(X^T X / n) via 50 deterministic power iterations."""
    n, d = X.shape
    v = np.ones(d) + np.linspace(0.0, 0.5, d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(50):
        w = X.T @ (X @ v) / n
        nw = np.linalg.norm(w)
        if nw <= 0.0:
            return 1.0
        lam = nw
        v = w / nw
    return 1.0 / lam if lam > 0 else 1.0


def _check_spec_dims(spec: PenaltySpec | None, d: int, L: int) -> None:
    if spec is None:
        return
    if isinstance(spec, GroupSlope) and spec.lam.size != d:
        raise InvalidInputError(f"lam has length {spec.lam.size}, expected {d}")
    if isinstance(spec, RowwiseSlope) and spec.kappa.size != L:
        raise InvalidInputError(f"kappa has length {spec.kappa.size}, expected {L}")
    if isinstance(spec, SparseGroupSlope) and (
        spec.lam.size != d or spec.kappa.size != L
    ):
        raise InvalidInputError("weight lengths must match (d, L)")


def fit(
    data: Dataset, spec: PenaltySpec | None, cfg: SolverConfig = SolverConfig()
) -> FitResult:
    """Penalized maximum-likelihood fit.

    ``spec=None`` fits the unpenalized MLE (used by the exhaustive oracle);
    starting from zero its iterates stay row-centered because the NLL
    gradient has exact zero row sums.

    Group Slope and nuclear fits are solved unconstrained and row-centered
    afterwards; centering cannot increase either objective, and this is
    asserted. For sparse group Slope with ``enforce_centering`` the centering
    projection is composed into the prox through the Dykstra splitting.

    Never raises on non-convergence: returns converged=False with
    diagnostics instead.
    """
    d, L = data.d, data.num_classes
    _check_spec_dims(spec, d, L)
    X = data.features

    in_prox_center = cfg.enforce_centering and isinstance(
        spec, (SparseGroupSlope, RowwiseSlope)
    )
    post_center = spec is None or isinstance(spec, (GroupSlope, Nuclear))

    def pen(Bv: np.ndarray) -> float:
        return 0.0 if spec is None else penalties.penalty_value(spec, Bv)

    def prox(V: np.ndarray, s: float) -> np.ndarray:
        return penalties.prox_step(spec, V, s, tol=cfg.prox_tol, center=in_prox_center)

    step = _auto_step(X) if cfg.initial_step == "auto" else float(cfg.initial_step)
    # Dykstra-based proxes are only tol-exact; give the monotonicity check slack.
    mono_slack_scale = 20.0 * cfg.prox_tol if isinstance(spec, SparseGroupSlope) else 0.0

    B = np.zeros((d, L))
    B_prev = B
    t = 1.0
    f_B = model.nll(B, data)
    obj = f_B + pen(B)
    trace = [obj]
    fp_residual = math.inf
    converged = False
    iterations = 0

    def backtracked_step(Y: np.ndarray, s: float) -> tuple[np.ndarray, float, float]:
        gY = model.grad_nll(Y, data)
        fY = model.nll(Y, data)
        while True:
            cand = prox(Y - s * gY, s)
            diff = cand - Y
            quad = fY + float((gY * diff).sum()) + float((diff * diff).sum()) / (2 * s)
            f_cand = model.nll(cand, data)
            if f_cand <= quad + 1e-12 * (1.0 + abs(quad)) or s <= _STEP_FLOOR:
                return cand, f_cand, s
            s *= cfg.backtrack_factor

    for _ in range(cfg.max_iter):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        Y = B + ((t - 1.0) / t_next) * (B - B_prev)
        cand, f_cand, step = backtracked_step(Y, step)
        obj_cand = f_cand + pen(cand)

        if obj_cand > trace[-1]:
            # Adaptive restart: momentum overshot, take a plain descent step.
            t = 1.0
            t_next = 1.0
            Y = B
            cand, f_cand, step = backtracked_step(B, step)
            obj_cand = f_cand + pen(cand)

        slack = 1e-10 * (1.0 + abs(trace[-1])) + mono_slack_scale
        if obj_cand > trace[-1] + slack:
            raise NumericError(
                f"objective increased by {obj_cand - trace[-1]:.3e} on an accepted step"
            )
        obj_cand = min(obj_cand, trace[-1])

        B_prev = B
        B = cand
        t = t_next
        trace.append(obj_cand)
        iterations += 1

        # Cheap gate on the step just taken before paying for the exact
        # fixed-point residual at B.
        scale = cfg.grad_map_tol * (1.0 + float(np.linalg.norm(B)))
        gate = float(np.linalg.norm(B - Y)) / step
        if gate < scale:
            g = model.grad_nll(B, data)
            raw = float(np.linalg.norm(B - prox(B - step * g, step)))
            fp_residual = raw / step
            if raw < scale and fp_residual < scale:
                converged = True
                break

    drift = float(np.max(np.abs(B.mean(axis=1))))

    if post_center:
        B_centered = B - B.mean(axis=1, keepdims=True)
        obj_centered = model.nll(B_centered, data) + pen(B_centered)
        if obj_centered > trace[-1] + 1e-10 * (1.0 + abs(trace[-1])):
            raise NumericError(
                "row centering increased the objective by "
                f"{obj_centered - trace[-1]:.3e}"
            )
        B = B_centered
        coeffs = CoefficientMatrix(B, centered=True)
    elif in_prox_center:
        coeffs = center_rows(B)  # final snap; Dykstra leaves tol-level drift
    else:
        coeffs = CoefficientMatrix(B, centered=False)

    # Report the residual at the matrix actually returned.
    g = model.grad_nll(coeffs.values, data)
    raw = float(np.linalg.norm(coeffs.values - prox(coeffs.values - step * g, step)))
    fp_residual = raw / step

    return FitResult(
        coefficients=coeffs,
        objective_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        fixed_point_residual=fp_residual,
        pre_centering_row_mean=drift,
    )


def _complexity_penalty(r: int, d: int, L: int, c1: float, c2: float) -> float:
    if r == 0:
        return 0.0
    return c1 * r * (L - 1) + c2 * r * math.log(d * math.e / r)


def fit_exhaustive_complexity(
    data: Dataset,
    c1: float,
    c2: float,
    max_support: int,
    cfg: SolverConfig = SolverConfig(),
) -> FitResult:
    """Combinatorial oracle: enumerate all row supports of size <= max_support,
    refit the unpenalized restricted MLE on each, and pick the support
    minimizing  n * nll + c1 * r (L-1) + c2 * r ln(d e / r).

    Refuses d > 15 (the search is exponential). Ties resolve to the
    lexicographically smallest support; enumeration order makes the result
    deterministic.
    """
    d, L = data.d, data.num_classes
    if d > 15:
        raise InvalidInputError(f"exhaustive search refused for d = {d} > 15")
    if not (0 <= max_support <= d):
        raise InvalidInputError("need 0 <= max_support <= d")
    if c1 < 0 or c2 < 0:
        raise InvalidInputError("c1, c2 must be nonnegative")

    n = data.n
    best_crit = n * math.log(L)  # empty support: B = 0
    best_support: tuple[int, ...] = ()
    best_fit: FitResult | None = None
    evaluated = 1

    for r in range(1, max_support + 1):
        pen_r = _complexity_penalty(r, d, L, c1, c2)
        for support in itertools.combinations(range(d), r):
            sub = Dataset(
                data.features[:, list(support)], data.labels, data.num_classes
            )
            sub_fit = fit(sub, None, cfg)
            crit = n * model.nll(sub_fit.coefficients.values, sub) + pen_r
            evaluated += 1
            if crit < best_crit:
                best_crit = crit
                best_support = support
                best_fit = sub_fit

    B = np.zeros((d, L))
    if best_fit is not None:
        B[list(best_support), :] = best_fit.coefficients.values
    return FitResult(
        coefficients=CoefficientMatrix(B, centered=True),
        objective_trace=np.asarray([best_crit]),
        iterations=evaluated,
        converged=best_fit.converged if best_fit is not None else True,
        fixed_point_residual=(
            best_fit.fixed_point_residual if best_fit is not None else 0.0
        ),
    )
