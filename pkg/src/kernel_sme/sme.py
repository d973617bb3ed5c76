"""Kernel-SME measurement update.

The unordered measurement set is mapped to the Gaussian mixture
``F(z) = sum_l N(z; y_l, K)``, which does not depend on the order of the
measurements.  Evaluating F at a set of test vectors placed around the
measurements gives a pseudo-measurement ``s`` whose first two moments
(jointly with the state) are available in closed form for linear-Gaussian
models, so the belief can be updated with the usual LMMSE formulas.

Closed-form pieces, with mu_l = H_l x_l, S_l = H_l C_ll H_l^T + Cv_l:

* P[i, l]   = N(a_i; mu_l, S_l + K)                      (predicted kernel value)
* s_hat[i]  = sum_l P[i, l]
* C_xs[:, i] = sum_l P[i, l] G_l (a_i - mu_l),  G_l = C[:, l] H_l^T (S_l + K)^-1
* C_ss[i, j] = sum_l ( N(a_i; a_j, 2K) N((a_i + a_j)/2; mu_l, S_l + K/2) - P[i, l] P[j, l] )

The last line treats different targets' measurements as uncorrelated,
which is exact for a block-diagonal prior and keeps the cost cubic in N.
``correlated=True`` adds the exact cross-target terms (quartic in N).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular

from .errors import ConfigError, NumericalError, PreconditionError
from .models import (
    LinearModelBank,
    MeasurementSet,
    MultiTargetBelief,
    predict,
    symmetrize,
)

__all__ = [
    "KernelConfig",
    "TestVectorSet",
    "PseudoMeasurementMoments",
    "kernel_transform_eval",
    "kernel_transform",
    "select_test_vectors",
    "pseudo_moments",
    "measurement_update",
    "filter_step",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel covariance K (the kernel width), d x d symmetric positive definite."""

    K: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.ndim == 0:
            K = K.reshape(1, 1)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ConfigError(f"kernel covariance must be square, got shape {K.shape}")
        if not np.allclose(K, K.T, rtol=1e-12, atol=0.0):
            raise ConfigError("kernel covariance must be symmetric")
        if not np.all(np.isfinite(K)) or np.linalg.eigvalsh(K)[0] <= 0.0:
            raise ConfigError("kernel covariance must be positive definite")
        K = symmetrize(K)
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def dim(self) -> int:
        return self.K.shape[0]

    @classmethod
    def from_noise(cls, bank: LinearModelBank) -> "KernelConfig":
        """Default kernel width: the first target's measurement-noise covariance."""
        return cls(bank.targets[0].Cv)


@dataclass(frozen=True)
class TestVectorSet:
    """Evaluation points of the kernel transform.

    ``vectors[k]`` was placed around measurement row ``source[k]``, displaced
    along principal column ``abs(direction[k]) - 1`` with the sign of
    ``direction[k]``.
    """

    __test__ = False  # not a pytest class despite the name

    vectors: np.ndarray
    source: np.ndarray
    direction: np.ndarray

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def permuted(self, order) -> "TestVectorSet":
        return TestVectorSet(self.vectors[order], self.source[order], self.direction[order])


@dataclass(frozen=True)
class PseudoMeasurementMoments:
    """Predicted pseudo-measurement mean, state cross-covariance (N*n x N_a) and covariance."""

    mean_s: np.ndarray
    cross_cov: np.ndarray
    cov_ss: np.ndarray


def _log_gauss(z: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log N(z_k; mu, cov) for each row z_k."""
    L = np.linalg.cholesky(cov)
    r = solve_triangular(L, (z - mu).T, lower=True)
    return -0.5 * np.einsum("ik,ik->k", r, r) - np.log(np.diag(L)).sum() - 0.5 * cov.shape[0] * _LOG_2PI


def _whitener(cov: np.ndarray):
    """Inverse Cholesky factors and log normalizers for a stack of (..., d, d) covariances."""
    L = np.linalg.cholesky(cov)
    Linv = np.linalg.inv(L)
    d = cov.shape[-1]
    log_norm = -np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1) - 0.5 * d * _LOG_2PI
    return Linv, log_norm


def _check_dims(meas_dim: int, kernel: KernelConfig):
    if kernel.dim != meas_dim:
        raise PreconditionError(f"kernel is {kernel.dim}-dimensional but measurements are {meas_dim}-dimensional")


def _kernel_values(y: np.ndarray, kernel: KernelConfig, z: np.ndarray) -> np.ndarray:
    """F evaluated at each row of z, summed in a canonical order.

    Terms are sorted by value before summation, so the result is bit-for-bit
    independent of the row order of y.
    """
    Linv, log_norm = _whitener(kernel.K)
    r = (z[:, None, :] - y[None, :, :]) @ Linv.T
    terms = np.exp(log_norm - 0.5 * np.sum(r * r, axis=2))
    return np.sort(terms, axis=1).sum(axis=1)


def kernel_transform_eval(measurements: MeasurementSet, kernel: KernelConfig, z) -> float:
    """Value of the Gaussian mixture sum_l N(z; y_l, K) at a single point z."""
    _check_dims(measurements.meas_dim, kernel)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return float(_kernel_values(measurements.measurements, kernel, z[None, :])[0])


def kernel_transform(measurements: MeasurementSet, kernel: KernelConfig, tests: TestVectorSet) -> np.ndarray:
    """Discretized kernel transform: the mixture evaluated at every test vector."""
    _check_dims(measurements.meas_dim, kernel)
    return _kernel_values(measurements.measurements, kernel, tests.vectors)


def _principal_sqrt(m: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(m)
    if lam[0] <= 0.0:
        raise ConfigError("kernel covariance must be positive definite")
    return (vec * np.sqrt(lam)) @ vec.T


def select_test_vectors(measurements: MeasurementSet, kernel: KernelConfig) -> TestVectorSet:
    """2*d test vectors per measurement: y_l +/- each column of sqrt(d*K)."""
    d = measurements.meas_dim
    _check_dims(d, kernel)
    N = measurements.N
    root = _principal_sqrt(d * kernel.K)
    signs = np.array([1.0, -1.0])
    # (N, column, sign, d): measurement-major, then column, then +/-
    vectors = measurements.measurements[:, None, None, :] + signs[None, None, :, None] * root.T[None, :, None, :]
    source = np.repeat(np.arange(N), 2 * d)
    direction = np.tile((np.arange(1, d + 1)[:, None] * signs[None, :]).astype(int).ravel(), N)
    return TestVectorSet(vectors.reshape(N * 2 * d, d), source, direction)


class _Predicted:
    """Per-target predicted measurement quantities, stacked over targets."""

    def __init__(self, prior: MultiTargetBelief, bank: LinearModelBank, K: np.ndarray):
        N, n = prior.N, prior.n
        self.H = np.array([t.H for t in bank.targets])  # (N, d, n)
        cov4 = prior.cov.reshape(N, n, N, n)
        idx = np.arange(N)
        C_ll = cov4[idx, :, idx, :]  # (N, n, n)
        S = self.H @ C_ll @ self.H.transpose(0, 2, 1) + np.array([t.Cv for t in bank.targets])
        self.S = 0.5 * (S + S.transpose(0, 2, 1))
        self.mu = np.einsum("ldn,ln->ld", self.H, prior.block_means())
        self.K = K
        self.prior = prior

    def kernel_values(self, a: np.ndarray) -> np.ndarray:
        """P[i, l] = N(a_i; mu_l, S_l + K)."""
        Linv, log_norm = _whitener(self.S + self.K)
        r = np.einsum("lde,ile->ild", Linv, a[:, None, :] - self.mu[None, :, :])
        return np.exp(log_norm[None, :] - 0.5 * np.sum(r * r, axis=2))

    def gains(self) -> np.ndarray:
        """G_l = Cov(x, x_l) H_l^T (S_l + K)^-1, stacked as (N, N*n, d)."""
        N, n = self.prior.N, self.prior.n
        cols = self.prior.cov.reshape(N * n, N, n).transpose(1, 0, 2)  # (N, N*n, n)
        cross = cols @ self.H.transpose(0, 2, 1)  # (N, N*n, d)
        return np.linalg.solve(self.S + self.K, cross.transpose(0, 2, 1)).transpose(0, 2, 1)


def _sum_over_targets(P: np.ndarray) -> np.ndarray:
    # cumsum runs strictly left to right: ascending target order
    return np.cumsum(P, axis=1)[:, -1]


def pseudo_moments(
    prior: MultiTargetBelief,
    bank: LinearModelBank,
    kernel: KernelConfig,
    tests: TestVectorSet,
    correlated: bool = False,
) -> PseudoMeasurementMoments:
    """Closed-form mean, cross-covariance and covariance of the pseudo-measurement.

    Test vectors are treated as fixed points.  With ``correlated=False`` the
    covariance neglects prior correlation between different targets'
    measurements; set ``correlated=True`` to include it exactly.
    """
    if prior.N != bank.N or prior.n != bank.state_dim:
        raise PreconditionError("prior belief does not match the model bank")
    _check_dims(bank.meas_dim, kernel)
    a = tests.vectors
    K = kernel.K
    pred = _Predicted(prior, bank, K)

    P = pred.kernel_values(a)  # (Na, N)
    mean_s = _sum_over_targets(P)

    diff = a[:, None, :] - pred.mu[None, :, :]  # (Na, N, d)
    cross_cov = np.einsum("il,lxd,ild->xi", P, pred.gains(), diff)

    # same-target term: N(a_i; a_j, 2K) * N((a_i+a_j)/2; mu_l, S_l + K/2).
    # Built from elementwise symmetric expressions so cov_ss == cov_ss.T exactly.
    Linv2, log_norm2 = _whitener(2.0 * K)
    c = a @ Linv2.T
    log_pair = log_norm2 - 0.5 * np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=2)

    Linv_h, log_norm_h = _whitener(pred.S + 0.5 * K)
    b = np.einsum("lde,ile->ild", Linv_h, diff)
    quad = np.zeros((len(a), len(a), bank.N))
    for k in range(bank.meas_dim):
        mid = 0.5 * (b[:, None, :, k] + b[None, :, :, k])
        quad += mid * mid
    same = np.exp(log_pair[:, :, None] - 0.5 * quad + log_norm_h[None, None, :])
    cov_ss = np.sum(same - P[:, None, :] * P[None, :, :], axis=2)

    if correlated:
        cov_ss = cov_ss + _cross_target_cov(prior, bank, K, a, pred, P)

    return PseudoMeasurementMoments(mean_s=mean_s, cross_cov=cross_cov, cov_ss=cov_ss)


def _cross_target_cov(prior, bank, K, a, pred, P) -> np.ndarray:
    """sum over l != m of E[k_il k_jm] - P[i,l] P[j,m] for correlated measurements y_l, y_m."""
    Na, d = a.shape
    out = np.zeros((Na, Na))
    for l in range(bank.N):
        for m in range(l + 1, bank.N):
            C_lm = pred.H[l] @ prior.block_cov(l, m) @ pred.H[m].T
            if not np.any(C_lm):
                continue
            joint = np.block([[pred.S[l] + K, C_lm], [C_lm.T, pred.S[m] + K]])
            L = np.linalg.cholesky(joint)
            L11, L21, L22 = L[:d, :d], L[d:, :d], L[d:, d:]
            e = solve_triangular(L11, (a - pred.mu[l]).T, lower=True)
            f = solve_triangular(L22, (a - pred.mu[m]).T, lower=True)
            g = solve_triangular(L22, L21 @ e, lower=True)
            # (f[:, j] - g[:, i]) indexed [k, i, j]
            quad = np.sum(e**2, axis=0)[:, None] + np.sum((f[:, None, :] - g[:, :, None]) ** 2, axis=0)
            log_norm = -np.log(np.diag(L)).sum() - d * _LOG_2PI
            term = np.exp(log_norm - 0.5 * quad) - P[:, l, None] * P[None, :, m]
            out += term + term.T
    return out


def _spd_solve(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve M X = B for symmetric positive definite M, escalating diagonal jitter on failure."""
    try:
        return cho_solve(cho_factor(M, lower=True), B)
    except LinAlgError:
        pass
    trace = float(np.trace(M))
    scale = trace if trace > 0 else 1.0
    eye = np.eye(M.shape[0])
    tried = []
    for exponent in range(-12, -5):
        jitter = 10.0**exponent * scale
        tried.append(jitter)
        try:
            return cho_solve(cho_factor(M + jitter * eye, lower=True), B)
        except LinAlgError:
            continue
    raise NumericalError(
        "pseudo-measurement covariance is not positive definite",
        {
            "size": M.shape[0],
            "trace": trace,
            "min_eigenvalue": float(np.linalg.eigvalsh(symmetrize(M))[0]),
            "jitter_tried": tried,
        },
    )


def _lmmse(prior: MultiTargetBelief, s: np.ndarray, moments: PseudoMeasurementMoments) -> MultiTargetBelief:
    X = _spd_solve(moments.cov_ss, moments.cross_cov.T)  # C_ss^-1 C_sx
    mean = prior.mean + X.T @ (s - moments.mean_s)
    cov = prior.cov - moments.cross_cov @ X
    return prior.with_moments(mean, cov)


def _update(prior, y, bank, kernel, correlated):
    meas = MeasurementSet(y)
    tests = select_test_vectors(meas, kernel)
    s = kernel_transform(meas, kernel, tests)
    moments = pseudo_moments(prior, bank, kernel, tests, correlated=correlated)
    return _lmmse(prior, s, moments)


def measurement_update(
    prior: MultiTargetBelief,
    measurements: MeasurementSet,
    bank: LinearModelBank,
    kernel: KernelConfig,
    correlated: bool = False,
) -> MultiTargetBelief:
    """LMMSE update of the joint belief with the kernel pseudo-measurement.

    Measurement rows are put into lexicographic order first; the transform
    is symmetric anyway, and a canonical order makes the result exactly
    reproducible for any input ordering.
    """
    if measurements.N != bank.N:
        raise PreconditionError(f"expected exactly {bank.N} measurements, got {measurements.N}")
    if measurements.meas_dim != bank.meas_dim:
        raise PreconditionError(
            f"measurements are {measurements.meas_dim}-dimensional, model expects {bank.meas_dim}"
        )
    y = measurements.measurements
    y = y[np.lexsort(y.T[::-1])]
    return _update(prior, y, bank, kernel, correlated)


def filter_step(
    prior: MultiTargetBelief,
    measurements: MeasurementSet,
    bank: LinearModelBank,
    kernel: KernelConfig,
    correlated: bool = False,
) -> MultiTargetBelief:
    """Time update followed by the Kernel-SME measurement update."""
    return measurement_update(predict(prior, bank), measurements, bank, kernel, correlated=correlated)
