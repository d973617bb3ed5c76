"""Linear-Gaussian multi-target models, beliefs and simulation.

Every target l obeys

    x'_l = A_l x_l + w_l,   w_l ~ N(0, Cw_l)
    y_l  = H_l x'_l + v_l,  v_l ~ N(0, Cv_l)

and the N measurements of a time step arrive in an unknown order.  The
joint state stacks the N per-target states; the stacked matrices are the
block-diagonal compositions of the per-target ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

from .errors import ConfigError, PreconditionError

__all__ = [
    "SingleTargetModel",
    "LinearModelBank",
    "MultiTargetBelief",
    "MeasurementSet",
    "GroundTruth",
    "stack_models",
    "predict",
    "simulate_step",
    "rng_stream",
    "symmetrize",
    "psd_floor",
    "min_eig_ratio",
    "sample_gaussian",
]

# purpose codes for rng_stream; stable, never renumber
STREAM_TRUTH = 0
STREAM_INIT = 1
STREAM_SIMULATION = 2
STREAM_ORACLE = 3


def rng_stream(seed: int, *counters: int) -> np.random.Generator:
    """Independent random stream for ``(seed, *counters)``.

    The counters become the spawn key of a :class:`numpy.random.SeedSequence`,
    so ``rng_stream(seed, run, purpose)`` gives one stream per Monte Carlo
    run and per purpose (truth, initial mean, simulation, ...) that does not
    depend on which worker executes the run or in which order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(c) for c in counters))
    return np.random.default_rng(ss)


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0 and ndim == 2:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 0 and ndim == 1:
        arr = arr.reshape(1)
    if arr.ndim != ndim:
        raise ConfigError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def psd_floor(cov: np.ndarray) -> float:
    """Tolerance ``1e-9 * trace / dim`` below which eigenvalues count as negative."""
    dim = cov.shape[0]
    return 1e-9 * abs(float(np.trace(cov))) / max(dim, 1)


def min_eig_ratio(cov: np.ndarray) -> float:
    """Smallest eigenvalue divided by the mean diagonal entry (0 for a zero matrix)."""
    scale = float(np.trace(cov)) / cov.shape[0]
    lam = float(np.linalg.eigvalsh(symmetrize(cov))[0])
    if scale <= 0.0:
        return 0.0 if lam == 0.0 else -np.inf
    return lam / scale


def _is_psd(m: np.ndarray, strict: bool = False) -> bool:
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12):
        return False
    lam = np.linalg.eigvalsh(symmetrize(m))
    if strict:
        return bool(lam[0] > 0.0)
    return bool(lam[0] >= -psd_floor(m) - 1e-15)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Square-root factor L with L L^T = cov, tolerating singular PSD input."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        lam, vec = np.linalg.eigh(symmetrize(cov))
        return vec * np.sqrt(np.clip(lam, 0.0, None))


def sample_gaussian(rng: np.random.Generator, mean, cov, size: Optional[int] = None) -> np.ndarray:
    """Draw from N(mean, cov) with an explicit factor so zero covariances give exact means."""
    mean = np.asarray(mean, dtype=float)
    factor = _psd_factor(np.asarray(cov, dtype=float))
    if size is None:
        return mean + factor @ rng.standard_normal(mean.shape[0])
    return mean + rng.standard_normal((size, mean.shape[0])) @ factor.T


@dataclass(frozen=True)
class SingleTargetModel:
    """Measurement and motion model of one target.

    ``H`` is d x n, ``Cv`` d x d, ``A`` n x n, ``Cw`` n x n.  Noise
    covariances must be symmetric PSD.  A zero ``Cv`` is accepted because
    noise-free simulation is useful; the Kernel-SME update stays well posed
    since the kernel covariance is added to it.
    """

    H: np.ndarray
    Cv: np.ndarray
    A: np.ndarray
    Cw: np.ndarray

    def __post_init__(self):
        for name in ("H", "Cv", "A", "Cw"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 2, name))
        d, n = self.H.shape
        if self.A.shape != (n, n):
            raise ConfigError(f"A has shape {self.A.shape}, expected {(n, n)}")
        if self.Cw.shape != (n, n):
            raise ConfigError(f"Cw has shape {self.Cw.shape}, expected {(n, n)}")
        if self.Cv.shape != (d, d):
            raise ConfigError(f"Cv has shape {self.Cv.shape}, expected {(d, d)}")
        if not _is_psd(self.Cv):
            raise ConfigError("Cv must be symmetric positive semi-definite")
        if not _is_psd(self.Cw):
            raise ConfigError("Cw must be symmetric positive semi-definite")

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]

    @property
    def meas_dim(self) -> int:
        return self.H.shape[0]

    @classmethod
    def random_walk(cls, dim: int, cv: float, cw: float) -> "SingleTargetModel":
        """Identity dynamics observed directly, with scaled-identity noises."""
        eye = np.eye(dim)
        return cls(H=eye, Cv=cv * eye, A=eye, Cw=cw * eye)


@dataclass(frozen=True)
class LinearModelBank:
    """N per-target models plus their block-diagonal stacked forms."""

    targets: tuple
    stacked_H: np.ndarray = field(repr=False)
    stacked_A: np.ndarray = field(repr=False)
    stacked_Cv: np.ndarray = field(repr=False)
    stacked_Cw: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.targets)

    @property
    def state_dim(self) -> int:
        return self.targets[0].state_dim

    @property
    def meas_dim(self) -> int:
        return self.targets[0].meas_dim

    def __getitem__(self, l: int) -> SingleTargetModel:
        return self.targets[l]

    def __len__(self) -> int:
        return len(self.targets)


def stack_models(targets: Sequence[SingleTargetModel]) -> LinearModelBank:
    targets = tuple(targets)
    if not targets:
        raise ConfigError("at least one target model is required")
    n, d = targets[0].state_dim, targets[0].meas_dim
    for idx, t in enumerate(targets):
        if not isinstance(t, SingleTargetModel):
            raise ConfigError(f"target {idx} is not a SingleTargetModel")
        if (t.state_dim, t.meas_dim) != (n, d):
            raise ConfigError(
                f"target {idx} has state/measurement dims {(t.state_dim, t.meas_dim)}, "
                f"expected {(n, d)} as for target 0"
            )

    def stacked(name):
        m = block_diag(*(getattr(t, name) for t in targets))
        m.setflags(write=False)
        return m

    return LinearModelBank(
        targets=targets,
        stacked_H=stacked("H"),
        stacked_A=stacked("A"),
        stacked_Cv=stacked("Cv"),
        stacked_Cw=stacked("Cw"),
    )


@dataclass(frozen=True)
class MultiTargetBelief:
    """Joint Gaussian N(mean, cov) over the stacked state of N targets of dimension n."""

    mean: np.ndarray
    cov: np.ndarray
    N: int
    n: int

    def __post_init__(self):
        mean = _frozen(self.mean, 1, "mean")
        cov = _frozen(self.cov, 2, "cov")
        dim = self.N * self.n
        if self.N < 1 or self.n < 1:
            raise PreconditionError("N and n must be positive")
        if mean.shape != (dim,) or cov.shape != (dim, dim):
            raise PreconditionError(
                f"belief shapes {mean.shape}, {cov.shape} inconsistent with N={self.N}, n={self.n}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_blocks(cls, means: Sequence, covs: Sequence) -> "MultiTargetBelief":
        """Block-diagonal belief from per-target means and covariances."""
        means = [np.atleast_1d(np.asarray(m, dtype=float)) for m in means]
        return cls(
            mean=np.concatenate(means),
            cov=block_diag(*(np.atleast_2d(c) for c in covs)),
            N=len(means),
            n=means[0].shape[0],
        )

    def _sl(self, l: int) -> slice:
        if not 0 <= l < self.N:
            raise IndexError(f"target index {l} out of range for N={self.N}")
        return slice(l * self.n, (l + 1) * self.n)

    def block_mean(self, l: int) -> np.ndarray:
        return self.mean[self._sl(l)]

    def block_cov(self, i: int, l: int) -> np.ndarray:
        """Cross-covariance block C^{x_i x_l}; ``block_cov(l, l)`` is target l's covariance."""
        return self.cov[self._sl(i), self._sl(l)]

    def column_block(self, l: int) -> np.ndarray:
        """Covariance between the joint state and target l, shape (N*n, n)."""
        return self.cov[:, self._sl(l)]

    def block_means(self) -> np.ndarray:
        return self.mean.reshape(self.N, self.n)

    def with_moments(self, mean, cov) -> "MultiTargetBelief":
        return MultiTargetBelief(mean=mean, cov=symmetrize(np.asarray(cov)), N=self.N, n=self.n)

    def is_psd(self) -> bool:
        lam = np.linalg.eigvalsh(self.cov)[0]
        return bool(np.array_equal(self.cov, self.cov.T) and lam >= -psd_floor(self.cov))


@dataclass(frozen=True)
class MeasurementSet:
    """One time step's N measurements as rows of an (N, d) array.

    Row order carries no meaning.  ``true_permutation`` is set only by the
    simulator: row ``true_permutation[l]`` was generated by target ``l``.
    """

    measurements: np.ndarray
    true_permutation: Optional[tuple] = None

    def __post_init__(self):
        y = np.array(self.measurements, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] == 0:
            raise PreconditionError(f"measurements must be a nonempty (N, d) array, got {y.shape}")
        y.setflags(write=False)
        object.__setattr__(self, "measurements", y)
        if self.true_permutation is not None:
            perm = tuple(int(p) for p in self.true_permutation)
            if sorted(perm) != list(range(y.shape[0])):
                raise PreconditionError(f"true_permutation {perm} is not a permutation of 0..{y.shape[0] - 1}")
            object.__setattr__(self, "true_permutation", perm)

    @property
    def N(self) -> int:
        return self.measurements.shape[0]

    @property
    def meas_dim(self) -> int:
        return self.measurements.shape[1]

    def in_target_order(self) -> np.ndarray:
        """Rows reordered so that row l belongs to target l."""
        if self.true_permutation is None:
            raise PreconditionError("measurement set carries no true permutation")
        return self.measurements[list(self.true_permutation)]

    def permuted(self, order: Sequence[int]) -> "MeasurementSet":
        """Same set with rows reordered as ``measurements[order]``; the permutation is kept consistent."""
        order = [int(o) for o in order]
        perm = None
        if self.true_permutation is not None:
            inverse = np.argsort(order)
            perm = tuple(int(inverse[p]) for p in self.true_permutation)
        return MeasurementSet(self.measurements[order], perm)


@dataclass(frozen=True)
class GroundTruth:
    states: np.ndarray
    k: int = 0

    def __post_init__(self):
        s = np.array(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] == 0:
            raise PreconditionError(f"states must be a nonempty (N, n) array, got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    @property
    def N(self) -> int:
        return self.states.shape[0]


def _check_belief(belief: MultiTargetBelief, bank: LinearModelBank):
    if belief.N != bank.N or belief.n != bank.state_dim:
        raise PreconditionError(
            f"belief (N={belief.N}, n={belief.n}) does not match model bank "
            f"(N={bank.N}, n={bank.state_dim})"
        )


def predict(belief: MultiTargetBelief, bank: LinearModelBank) -> MultiTargetBelief:
    """Kalman time update of the joint belief."""
    _check_belief(belief, bank)
    A = bank.stacked_A
    return belief.with_moments(A @ belief.mean, A @ belief.cov @ A.T + bank.stacked_Cw)


def simulate_step(truth: GroundTruth, bank: LinearModelBank, rng: np.random.Generator):
    """Advance every target one step and measure it; rows are shuffled uniformly at random."""
    if truth.N != bank.N or truth.states.shape[1] != bank.state_dim:
        raise PreconditionError(
            f"ground truth shape {truth.states.shape} does not match model bank "
            f"(N={bank.N}, n={bank.state_dim})"
        )
    new_states = np.empty_like(truth.states)
    y = np.empty((bank.N, bank.meas_dim))
    for l, model in enumerate(bank.targets):
        new_states[l] = sample_gaussian(rng, model.A @ truth.states[l], model.Cw)
    for l, model in enumerate(bank.targets):
        y[l] = sample_gaussian(rng, model.H @ new_states[l], model.Cv)
    perm = rng.permutation(bank.N)
    rows = np.empty_like(y)
    rows[perm] = y
    return GroundTruth(new_states, truth.k + 1), MeasurementSet(rows, tuple(int(p) for p in perm))
