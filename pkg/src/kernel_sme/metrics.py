"""Scoring of point estimates against ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assignment import hungarian
from .errors import ConfigError, PreconditionError
from .models import GroundTruth, LinearModelBank, MultiTargetBelief

__all__ = ["OspaParams", "ospa", "point_estimates", "labeled_rmse"]


@dataclass(frozen=True)
class OspaParams:
    """OSPA order ``p`` and cutoff ``c``."""

    p: float = 1.0
    c: float = 10.0

    def __post_init__(self):
        if not self.p >= 1.0:
            raise ConfigError(f"OSPA order must be >= 1, got {self.p}")
        if not self.c > 0.0:
            raise ConfigError(f"OSPA cutoff must be positive, got {self.c}")


def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def ospa(a, b, params: OspaParams = OspaParams()) -> float:
    """OSPA distance between two point sets of equal cardinality.

    Each row is a point.  Distances are Euclidean, capped at ``c`` and
    raised to ``p``; the optimal pairing is found by :func:`hungarian`.
    """
    a, b = _as_points(a), _as_points(b)
    if a.shape[0] != b.shape[0]:
        raise PreconditionError(f"cardinalities differ ({a.shape[0]} vs {b.shape[0]})")
    if a.shape[1] != b.shape[1]:
        raise PreconditionError(f"point dimensions differ ({a.shape[1]} vs {b.shape[1]})")
    n = a.shape[0]
    if n == 0:
        return 0.0
    dist = np.sqrt(np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2))
    cost = np.minimum(dist, params.c) ** params.p
    total = hungarian(cost).total_cost
    return float((total / n) ** (1.0 / params.p))


def point_estimates(
    belief: MultiTargetBelief,
    bank: Optional[LinearModelBank] = None,
    position_dims: Optional[int] = None,
) -> np.ndarray:
    """Per-target point estimates as rows.

    With a model bank the estimates are the predicted measurements
    ``H_l x_l``; otherwise the first ``position_dims`` entries of each
    target's mean (the whole block by default).
    """
    means = belief.block_means()
    if bank is not None:
        return np.array([t.H @ m for t, m in zip(bank.targets, means)])
    k = belief.n if position_dims is None else position_dims
    return means[:, :k].copy()


def labeled_rmse(estimates, truth) -> float:
    """Root mean squared error between estimate l and truth l, averaged over targets.

    Only the leading ``estimates.shape[1]`` components of the true states
    are compared, so position estimates can be scored against full states.
    """
    est = _as_points(estimates)
    states = truth.states if isinstance(truth, GroundTruth) else _as_points(truth)
    if est.shape[0] != states.shape[0]:
        raise PreconditionError(f"{est.shape[0]} estimates for {states.shape[0]} targets")
    err = est - states[:, : est.shape[1]]
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))
