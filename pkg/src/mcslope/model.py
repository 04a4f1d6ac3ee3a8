"""Multinomial logistic regression primitives.

Class probabilities are the softmax of the linear scores B^T x. The negative
log-likelihood is averaged over the sample (1/n scaling) so that penalty
weight formulas expressed per-sample apply directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CoefficientMatrix, Dataset, InvalidInputError

__all__ = [
    "ModelBounds",
    "class_probs",
    "nll",
    "grad_nll",
    "predict",
    "predict_many",
    "kl_divergence",
]


@dataclass(frozen=True)
class ModelBounds:
    """Probability bound delta in (0, 1/2) and the equivalent score bound
    c_star = ln((1 - delta)/delta)."""

    delta: float
    c_star: float = float("nan")

    def __post_init__(self):
        if not (0.0 < self.delta < 0.5):
            raise InvalidInputError("delta must lie in (0, 1/2)")
        implied = math.log((1.0 - self.delta) / self.delta)
        if math.isnan(self.c_star):
            object.__setattr__(self, "c_star", implied)
        elif abs(self.c_star - implied) > 1e-12:
            raise InvalidInputError(
                f"c_star = {self.c_star!r} inconsistent with delta (expected {implied!r})"
            )


def _values(B: CoefficientMatrix | np.ndarray) -> np.ndarray:
    return B.values if isinstance(B, CoefficientMatrix) else np.asarray(B, dtype=float)


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max subtraction."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


def class_probs(B: CoefficientMatrix | np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probability vector p_l = exp(b_l^T x) / sum_k exp(b_k^T x).

    Overflow-safe via max subtraction; output sums to 1 within 1e-12.
    """
    vals = _values(B)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != vals.shape[0]:
        raise InvalidInputError(
            f"x has length {x.shape[0] if x.ndim == 1 else x.shape}, expected {vals.shape[0]}"
        )
    return np.exp(_log_softmax(vals.T @ x))


def _scores(vals: np.ndarray, data: Dataset) -> np.ndarray:
    if vals.shape != (data.d, data.num_classes):
        raise InvalidInputError(
            f"coefficients are {vals.shape}, expected {(data.d, data.num_classes)}"
        )
    return data.features @ vals


def nll(B: CoefficientMatrix | np.ndarray, data: Dataset) -> float:
    """Averaged negative log-likelihood
    (1/n) sum_i [ln sum_l exp(b_l^T x_i) - (b_{y_i})^T x_i]."""
    vals = _values(B)
    scores = _scores(vals, data)
    logp = _log_softmax(scores)
    picked = logp[np.arange(data.n), data.labels - 1]
    return float(-picked.mean())


def grad_nll(B: CoefficientMatrix | np.ndarray, data: Dataset) -> np.ndarray:
    """Gradient of the averaged NLL: (1/n) X^T (P - Xi).

    Rows sum to zero (probabilities and indicators both sum to 1).
    """
    vals = _values(B)
    scores = _scores(vals, data)
    P = np.exp(_log_softmax(scores))
    P[np.arange(data.n), data.labels - 1] -= 1.0
    return data.features.T @ P / data.n


def predict(B: CoefficientMatrix | np.ndarray, x: np.ndarray) -> int:
    """Predicted 1-based class label: argmax_l b_l^T x.

    Ties are broken by the smallest class index.
    """
    vals = _values(B)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != vals.shape[0]:
        raise InvalidInputError(
            f"x has length {x.shape[0] if x.ndim == 1 else x.shape}, expected {vals.shape[0]}"
        )
    return int(np.argmax(vals.T @ x)) + 1


def predict_many(B: CoefficientMatrix | np.ndarray, X: np.ndarray) -> np.ndarray:
    """Vectorized ``predict`` over the rows of X; returns 1-based labels."""
    vals = _values(B)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != vals.shape[0]:
        raise InvalidInputError(
            f"X is {X.shape}, expected (*, {vals.shape[0]})"
        )
    return np.argmax(X @ vals, axis=1).astype(np.int64) + 1


def kl_divergence(
    B1: CoefficientMatrix | np.ndarray,
    B2: CoefficientMatrix | np.ndarray,
    x_sample: np.ndarray,
) -> float:
    """Monte-Carlo Kullback-Leibler divergence between the conditional class
    distributions of two coefficient matrices:
    (1/m) sum_x sum_l p1_l(x) [ln p1_l(x) - ln p2_l(x)].
    """
    v1, v2 = _values(B1), _values(B2)
    X = np.asarray(x_sample, dtype=float)
    if X.ndim != 2 or v1.shape != v2.shape or X.shape[1] != v1.shape[0]:
        raise InvalidInputError("x_sample columns must match both coefficient matrices")
    logp1 = _log_softmax(X @ v1)
    logp2 = _log_softmax(X @ v2)
    per_point = (np.exp(logp1) * (logp1 - logp2)).sum(axis=1)
    return float(per_point.mean())
