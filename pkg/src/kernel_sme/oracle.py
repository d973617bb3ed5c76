"""Monte Carlo reference values for the pseudo-measurement moments.

Nothing here uses the closed-form expressions: the prior and the
measurement noise are sampled, the kernel transform is evaluated on each
sample, and empirical moments are formed.  Standard errors come from
batch means over independent random substreams, so a run is reproducible
for a fixed seed and batch count regardless of how batches are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import (
    STREAM_ORACLE,
    LinearModelBank,
    MultiTargetBelief,
    _psd_factor,
    rng_stream,
    symmetrize,
)
from .errors import PreconditionError
from .sme import KernelConfig, PseudoMeasurementMoments, TestVectorSet, _Predicted, _sum_over_targets

__all__ = ["OracleEstimate", "mc_pseudo_moments", "phd_convolved_with_kernel"]

MIN_SAMPLES = 10_000


@dataclass(frozen=True)
class OracleEstimate:
    moments: PseudoMeasurementMoments
    standard_errors: PseudoMeasurementMoments
    sample_count: int

    def z_scores(self, other: PseudoMeasurementMoments, floor: float = 1e-300) -> dict:
        """|other - estimate| / SE for each moment, keyed by field name."""
        out = {}
        for name in ("mean_s", "cross_cov", "cov_ss"):
            err = np.abs(getattr(other, name) - getattr(self.moments, name))
            se = np.maximum(getattr(self.standard_errors, name), floor)
            out[name] = err / se
        return out


def _batch_moments(x: np.ndarray, s: np.ndarray):
    # shifted by the first sample: exact zeros for degenerate (constant) data
    dx = x - x[0]
    ds = s - s[0]
    n = x.shape[0]
    mx, ms = dx.mean(axis=0), ds.mean(axis=0)
    mean_s = s[0] + ms
    cross = (dx.T @ ds - n * np.outer(mx, ms)) / (n - 1)
    cov = (ds.T @ ds - n * np.outer(ms, ms)) / (n - 1)
    return mean_s, cross, symmetrize(cov)


def mc_pseudo_moments(
    prior: MultiTargetBelief,
    bank: LinearModelBank,
    kernel: KernelConfig,
    tests: TestVectorSet,
    samples: int = 1_000_000,
    seed: int = 0,
    batches: int = 32,
    chunk: int = 50_000,
) -> OracleEstimate:
    """Sampled moments of s = [F_y(a_1), ..., F_y(a_Na)] with y = H x + v."""
    if samples < MIN_SAMPLES:
        raise PreconditionError(f"at least {MIN_SAMPLES} samples are required, got {samples}")
    if batches < 2:
        raise PreconditionError("at least two batches are needed for standard errors")
    N, d = bank.N, bank.meas_dim
    H, Cv = bank.stacked_H, bank.stacked_Cv
    x_factor = _psd_factor(prior.cov)
    v_factor = _psd_factor(Cv)
    L = np.linalg.cholesky(kernel.K)
    Linv = np.linalg.inv(L)
    log_norm = -np.log(np.diag(L)).sum() - 0.5 * d * np.log(2.0 * np.pi)
    wa = tests.vectors @ Linv.T  # whitened test vectors

    sizes = np.full(batches, samples // batches)
    sizes[: samples % batches] += 1
    est = {"mean_s": [], "cross_cov": [], "cov_ss": []}
    for b, size in enumerate(sizes):
        rng = rng_stream(seed, STREAM_ORACLE, b)
        xs, ss = [], []
        remaining = int(size)
        while remaining > 0:
            m = min(chunk, remaining)
            remaining -= m
            x = prior.mean + rng.standard_normal((m, prior.mean.size)) @ x_factor.T
            y = x @ H.T + rng.standard_normal((m, Cv.shape[0])) @ v_factor.T
            wy = y.reshape(m, N, d) @ Linv.T
            s = np.zeros((m, len(tests)))
            for l in range(N):
                r = wa[None, :, :] - wy[:, l, None, :]
                s += np.exp(log_norm - 0.5 * np.sum(r * r, axis=2))
            xs.append(x)
            ss.append(s)
        mean_s, cross, cov = _batch_moments(np.concatenate(xs), np.concatenate(ss))
        est["mean_s"].append(mean_s)
        est["cross_cov"].append(cross)
        est["cov_ss"].append(cov)

    weights = sizes / sizes.sum()
    moments, errors = {}, {}
    for name, values in est.items():
        arr = np.array(values)
        moments[name] = np.tensordot(weights, arr, axes=1)
        errors[name] = arr.std(axis=0, ddof=1) / np.sqrt(batches)
    return OracleEstimate(
        moments=PseudoMeasurementMoments(**moments),
        standard_errors=PseudoMeasurementMoments(**errors),
        sample_count=int(samples),
    )


def phd_convolved_with_kernel(
    prior: MultiTargetBelief,
    bank: LinearModelBank,
    kernel: KernelConfig,
    z,
) -> float:
    """Predicted measurement PHD convolved with the kernel, evaluated at z.

    In the linear-Gaussian case each target's predicted measurement density
    is N(mu_l, S_l), and its convolution with N(0, K) is N(mu_l, S_l + K).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (bank.meas_dim,):
        raise PreconditionError(f"z must be a {bank.meas_dim}-vector, got shape {z.shape}")
    P = _Predicted(prior, bank, kernel.K).kernel_values(z[None, :])
    return float(_sum_over_targets(P)[0])
