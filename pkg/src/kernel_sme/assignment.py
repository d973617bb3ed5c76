"""Minimum-cost perfect assignment with deterministic tie-breaking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import PreconditionError

__all__ = ["Assignment", "hungarian"]


@dataclass(frozen=True)
class Assignment:
    """Row ``r`` is assigned to column ``mapping[r]``."""

    mapping: tuple
    total_cost: float


def _row_sum(cost: np.ndarray, mapping) -> float:
    total = 0.0
    for r, c in enumerate(mapping):
        total += float(cost[r, c])
    return total


def _solve(cost: np.ndarray):
    rows, cols = linear_sum_assignment(cost)
    return list(cols[np.argsort(rows)])


def hungarian(cost) -> Assignment:
    """Optimal assignment of an N x N cost matrix.

    The optimum comes from :func:`scipy.optimize.linear_sum_assignment`.
    Among optimal assignments the lexicographically smallest mapping is
    returned: rows are fixed one at a time to the smallest column that still
    admits an optimal completion.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise PreconditionError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise PreconditionError("cost matrix has non-finite entries")
    n = cost.shape[0]
    if n == 0:
        return Assignment((), 0.0)

    current = _solve(cost)
    optimum = _row_sum(cost, current)
    tol = 1e-12 * max(1.0, abs(optimum)) + 1e-12 * n * float(np.abs(cost).max())

    fixed: list = []
    free = list(range(n))
    for r in range(n):
        rest_rows = list(range(r + 1, n))
        for c in sorted(free):
            if c >= current[r]:
                break
            cols = [f for f in free if f != c]
            if rest_rows:
                sub = _solve(cost[np.ix_(rest_rows, cols)])
                completion = [cols[k] for k in sub]
            else:
                completion = []
            candidate = fixed + [c] + completion
            if _row_sum(cost, candidate) <= optimum + tol:
                current = candidate
                break
        fixed.append(current[r])
        free.remove(current[r])

    mapping = tuple(int(c) for c in current)
    return Assignment(mapping, _row_sum(cost, mapping))
