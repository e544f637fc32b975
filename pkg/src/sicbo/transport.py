"""Wasserstein-2 distances between finite weighted point clouds."""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from ._random import stream
from .consensus import WeightedEmpiricalMeasure

__all__ = ["BudgetExceeded", "EXACT_BUDGET", "w2_exact", "w2_sliced", "w2_squared_1d"]

EXACT_BUDGET = 512


class BudgetExceeded(ValueError):
    """Too many atoms for the exact solver; use :func:`w2_sliced` instead."""


def w2_squared_1d(x, a, y, b) -> float:
    """Squared W2 on the line via the quantile coupling."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, a, y, b = x[ox], a[ox], y[oy], b[oy]
    ca = np.cumsum(a)
    cb = np.cumsum(b)
    ca /= ca[-1]
    cb /= cb[-1]
    u = np.union1d(ca, cb)
    u = u[u > 0]
    lengths = np.diff(np.concatenate(([0.0], u)))
    mids = u - 0.5 * lengths
    ix = np.minimum(np.searchsorted(ca, mids), x.size - 1)
    iy = np.minimum(np.searchsorted(cb, mids), y.size - 1)
    return float(lengths @ (x[ix] - y[iy]) ** 2)


def _lp_w2sq(mu, nu, cost) -> float:
    n, m = cost.shape
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    a_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([mu.masses, nu.masses])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def w2_exact(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure,
             budget: int = EXACT_BUDGET) -> float:
    """Exact W2 between two empirical measures.

    On the line the quantile coupling is used at any size. In higher
    dimension, equal-size uniform measures go through an optimal assignment
    and everything else through the transport linear program; both need
    ``len(mu) + len(nu) <= budget``.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    if mu.dim == 1:
        return float(np.sqrt(w2_squared_1d(mu.points[:, 0], mu.masses, nu.points[:, 0], nu.masses)))
    if len(mu) + len(nu) > budget:
        raise BudgetExceeded(f"{len(mu)} + {len(nu)} atoms exceed the exact budget {budget}")
    cost = cdist(mu.points, nu.points, "sqeuclidean")
    if len(mu) == len(nu) and mu.is_uniform() and nu.is_uniform():
        r, c = linear_sum_assignment(cost)
        return float(np.sqrt(cost[r, c].mean()))
    return float(np.sqrt(_lp_w2sq(mu, nu, cost)))


def w2_sliced(mu: WeightedEmpiricalMeasure, nu: WeightedEmpiricalMeasure,
              n_projections: int = 128, rng_seed: int = 0) -> float:
    """Sliced W2: root mean of squared 1-D distances over random unit directions.

    A surrogate, not W2 itself; it never exceeds the exact value.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    dirs = stream(rng_seed, 11).standard_normal((n_projections, mu.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    px, py = mu.points @ dirs.T, nu.points @ dirs.T
    vals = [w2_squared_1d(px[:, j], mu.masses, py[:, j], nu.masses) for j in range(n_projections)]
    return float(np.sqrt(np.mean(vals)))
