"""Independent oracles used to check proxes, duals and fits.

Everything here minimizes или evaluates the relevant objective through a
route disjoint from the library's own algorithms: generic convex descent
with restarts, cvxpy cone programs, closed forms and exhaustive grids.
"""

import numpy as np
import scipy.optimize

from mcslope.core import GroupSlope, Nuclear, RowwiseSlope, SparseGroupSlope
from mcslope.penalties import penalty_value


def prox_objective(spec, u: np.ndarray, v: np.ndarray, step: float) -> float:
    """0.5 |u - v|_F^2 + step * penalty(u)."""
    diff = u - v
    return 0.5 * float((diff * diff).sum()) + step * penalty_value(spec, u)


def descent_prox_oracle(spec, v: np.ndarray, step: float, restarts: int = 20, seed: int = 0):
    """Generic convex descent (Powell) on the prox objective from multiple
    restarts; returns the best minimizer found."""
    rng = np.random.default_rng(seed)
    shape = v.shape

    def fun(flat):
        return prox_objective(spec, flat.reshape(shape), v, step)

    starts = [v.ravel(), np.zeros(v.size)]
    while len(starts) < restarts:
        starts.append(v.ravel() + rng.standard_normal(v.size) * 0.5)
    best_x, best_f = None, np.inf
    for x0 in starts[:restarts]:
        res = scipy.optimize.minimize(fun, x0, method="Powell", options={"xtol": 1e-10, "ftol": 1e-12, "maxiter": 4000})
        if res.fun < best_f:
            best_f, best_x = res.fun, res.x
    return best_x.reshape(shape), best_f


def _cvx():
    import cvxpy as cp

    return cp


def _sorted_l1_cvx(cp, u, w):
    # sum_j w_j |u|_(j) = sum_k (w_k - w_{k+1}) sum_largest(|u|, k)
    expr = 0
    K = len(w)
    for k in range(K):
        c = w[k] - (w[k + 1] if k + 1 < K else 0.0)
        if c > 0:
            expr = expr + c * cp.sum_largest(cp.abs(u), k + 1)
    return expr


def _group_slope_cvx(cp, U, lam):
    norms = cp.norm(U, 2, axis=1)
    expr = 0
    K = len(lam)
    for k in range(K):
        c = lam[k] - (lam[k + 1] if k + 1 < K else 0.0)
        if c > 0:
            expr = expr + c * cp.sum_largest(norms, k + 1)
    return expr


def _penalty_cvx(cp, spec, U):
    if isinstance(spec, GroupSlope):
        return _group_slope_cvx(cp, U, np.asarray(spec.lam))
    if isinstance(spec, RowwiseSlope):
        return sum(_sorted_l1_cvx(cp, U[j], np.asarray(spec.kappa)) for j in range(U.shape[0]))
    if isinstance(spec, SparseGroupSlope):
        rows = sum(_sorted_l1_cvx(cp, U[j], np.asarray(spec.kappa)) for j in range(U.shape[0]))
        return _group_slope_cvx(cp, U, np.asarray(spec.lam)) + rows
    if isinstance(spec, Nuclear):
        return spec.lam * cp.normNuc(U)
    raise TypeError(type(spec))


def cvxpy_prox_oracle(spec, v: np.ndarray, step: float):
    """Prox objective minimized by a generic cone solver."""
    cp = _cvx()
    U = cp.Variable(v.shape)
    problem = cp.Problem(
        cp.Minimize(0.5 * cp.sum_squares(U - v) + step * _penalty_cvx(cp, spec, U))
    )
    problem.solve(solver=cp.CLARABEL)
    return np.asarray(U.value), float(problem.value)


def best_prox_oracle(spec, v: np.ndarray, step: float, restarts: int = 20, seed: int = 0):
    """Best of descent-with-restarts and the cone solver, by objective."""
    xd, fd = descent_prox_oracle(spec, v, step, restarts=restarts, seed=seed)
    xc, fc = cvxpy_prox_oracle(spec, v, step)
    return (xc, fc) if fc < fd else (xd, fd)


def sparse_group_lasso_prox_closed_form(
    v: np.ndarray, lam: float, kappa: float, step: float
) -> np.ndarray:
    """Known closed form for constant weights: entrywise soft threshold by
    step*kappa, then group (row) soft threshold by step*lam."""
    w = np.sign(v) * np.maximum(np.abs(v) - step * kappa, 0.0)
    norms = np.sqrt((w * w).sum(axis=1))
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - step * lam / norms[nz])
    return w * scale[:, None]


def random_search_dual_lower_bound(
    spec, A: np.ndarray, draws: int = 2000, seed: int = 0
) -> float:
    """sup <A, B> over random matrices normalized to unit penalty norm.

    A lower bound of the dual norm that tightens as dimensions shrink.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(draws):
        G = rng.standard_normal(A.shape)
        p = penalty_value(spec, G)
        if p <= 0:
            continue
        best = max(best, float((A * (G / p)).sum()))
    return best


def grid_prox_oracle_2d(v: np.ndarray, weights: np.ndarray, step: float) -> np.ndarray:
    """Two-stage exhaustive grid minimization of the sorted-l1 prox objective
    for 2-vectors (fully independent of any solver)."""
    assert v.size == 2

    def objective(u0, u1):
        a = np.abs(np.stack([u0, u1]))
        hi = np.maximum(a[0], a[1])
        lo = np.minimum(a[0], a[1])
        pen = weights[0] * hi + weights[1] * lo
        return 0.5 * ((u0 - v[0]) ** 2 + (u1 - v[1]) ** 2) + step * pen

    lo0, hi0 = min(0.0, v[0]) - 0.1, max(0.0, v[0]) + 0.1
    lo1, hi1 = min(0.0, v[1]) - 0.1, max(0.0, v[1]) + 0.1
    center = None
    span0, span1 = hi0 - lo0, hi1 - lo1
    for _ in range(3):
        g0 = np.linspace(lo0, hi0, 301)
        g1 = np.linspace(lo1, hi1, 301)
        U0, U1 = np.meshgrid(g0, g1, indexing="ij")
        F = objective(U0, U1)
        i, j = np.unravel_index(np.argmin(F), F.shape)
        center = (g0[i], g1[j])
        span0 /= 50
        span1 /= 50
        lo0, hi0 = center[0] - span0, center[0] + span0
        lo1, hi1 = center[1] - span1, center[1] + span1
    return np.array(center)
