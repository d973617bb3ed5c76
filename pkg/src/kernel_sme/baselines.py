"""Reference trackers: Kalman filters with known or hard-assigned association."""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .assignment import hungarian
from .errors import PreconditionError
from .models import LinearModelBank, MeasurementSet, MultiTargetBelief, symmetrize

__all__ = ["kalman_update", "oracle_kf_update", "gnn_update", "gnn_cost"]


def kalman_update(prior: MultiTargetBelief, y: np.ndarray, bank: LinearModelBank) -> MultiTargetBelief:
    """Joint Kalman update with measurements already stacked in target order."""
    H = bank.stacked_H
    innovation_cov = symmetrize(H @ prior.cov @ H.T + bank.stacked_Cv)
    PHt = prior.cov @ H.T
    innovation = np.ravel(y) - H @ prior.mean
    try:
        factor = cho_factor(innovation_cov, lower=True)
        X = cho_solve(factor, np.column_stack([innovation, PHt.T]))
    except LinAlgError:
        # singular when prior and noise are both degenerate; the minimum-norm solve keeps a zero gain there
        X = np.linalg.lstsq(innovation_cov, np.column_stack([innovation, PHt.T]), rcond=None)[0]
    mean = prior.mean + PHt @ X[:, 0]
    cov = prior.cov - PHt @ X[:, 1:]
    return prior.with_moments(mean, cov)


def _check(prior, measurements, bank):
    if measurements.N != bank.N:
        raise PreconditionError(f"expected exactly {bank.N} measurements, got {measurements.N}")
    if prior.N != bank.N or prior.n != bank.state_dim:
        raise PreconditionError("prior belief does not match the model bank")


def oracle_kf_update(prior: MultiTargetBelief, measurements: MeasurementSet, bank: LinearModelBank) -> MultiTargetBelief:
    """Kalman update using the simulator's true measurement-to-target association."""
    _check(prior, measurements, bank)
    if measurements.true_permutation is None:
        raise PreconditionError("oracle update needs the true permutation")
    return kalman_update(prior, measurements.in_target_order(), bank)


def gnn_cost(prior: MultiTargetBelief, measurements: MeasurementSet, bank: LinearModelBank) -> np.ndarray:
    """Squared Mahalanobis distance of measurement j from target l's predicted measurement."""
    cost = np.empty((bank.N, measurements.N))
    for l, model in enumerate(bank.targets):
        S = symmetrize(model.H @ prior.block_cov(l, l) @ model.H.T + model.Cv)
        r = measurements.measurements - model.H @ prior.block_mean(l)
        cost[l] = np.einsum("jd,jd->j", r, np.linalg.lstsq(S, r.T, rcond=None)[0].T)
    return cost


def gnn_update(prior: MultiTargetBelief, measurements: MeasurementSet, bank: LinearModelBank) -> MultiTargetBelief:
    """Kalman update under the single most likely association (global nearest neighbour)."""
    _check(prior, measurements, bank)
    assignment = hungarian(gnn_cost(prior, measurements, bank))
    return kalman_update(prior, measurements.measurements[list(assignment.mapping)], bank)
