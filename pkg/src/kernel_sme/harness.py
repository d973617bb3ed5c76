"""Seeded Monte Carlo experiments: scenario configs, tracking runs, reports, benchmarks.

Scenario files are plain text, one ``key = value`` per line, ``#`` starts a
comment.  Keys (defaults reproduce the 8-target random-walk scenario)::

    model.targets    = 8          number of targets N
    model.state_dim  = 2          n
    model.meas_dim   = 2          d
    model.H          = eye        eye | scalar (times eye) | [[row], ...]
    model.A          = eye
    model.Cv         = 0.1        scalar means scalar * identity
    model.Cw         = 0.1
    kernel.K         = cv         cv (same as model.Cv) | scalar | [[row], ...]
    kernel.correlated = false     exact cross-target terms in the update
    init.truth       = circle     circle | [[x1, ...], ...] explicit per-target states
    init.radius      = 1.0        circle radius (positions in the first two state entries)
    init.C0          = 0.5        initial covariance: scalar, n x n block, or full
    init.mean        = sampled    sampled (from N(truth, C0)) | truth | [m1, ...]
    run.horizon      = 15
    run.runs         = 30
    run.seed         = 0
    ospa.p           = 1
    ospa.c           = 10
    trackers         = kernel-sme, gnn, oracle-kf, predict-only
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

from . import __version__
from .baselines import gnn_update, oracle_kf_update
from .errors import ConfigError, KernelSMEError
from .metrics import OspaParams, ospa, point_estimates
from .models import (
    STREAM_INIT,
    STREAM_SIMULATION,
    GroundTruth,
    LinearModelBank,
    MeasurementSet,
    MultiTargetBelief,
    SingleTargetModel,
    min_eig_ratio,
    predict,
    rng_stream,
    sample_gaussian,
    simulate_step,
    stack_models,
)
from .oracle import mc_pseudo_moments
from .sme import KernelConfig, measurement_update, pseudo_moments, select_test_vectors

__all__ = [
    "TRACKERS",
    "SCHEMA_VERSION",
    "ScenarioConfig",
    "RunReport",
    "BenchResult",
    "parse_config",
    "load_config",
    "run_scenario",
    "run_complexity_bench",
    "validate_moments",
    "random_moment_case",
]

SCHEMA_VERSION = "kernel-sme-report/1"
TRACKERS = ("kernel-sme", "gnn", "oracle-kf", "predict-only")
FAILURE_THRESHOLD = 0.05


@dataclass(frozen=True)
class ScenarioConfig:
    """Full experiment description.  Matrix-valued fields hold the raw config value
    (scalar, ``"eye"`` or nested lists) until :meth:`bank` expands them."""

    targets: int = 8
    state_dim: int = 2
    meas_dim: int = 2
    H: object = "eye"
    A: object = "eye"
    Cv: object = 0.1
    Cw: object = 0.1
    K: object = "cv"
    correlated: bool = False
    truth: object = "circle"
    radius: float = 1.0
    C0: object = 0.5
    init_mean: object = "sampled"
    horizon: int = 15
    runs: int = 30
    seed: int = 0
    ospa_p: float = 1.0
    ospa_c: float = 10.0
    trackers: tuple = TRACKERS

    def __post_init__(self):
        for name in ("targets", "state_dim", "meas_dim", "horizon", "runs"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.meas_dim > self.state_dim and isinstance(self.H, str) and self.H == "eye":
            raise ConfigError("model.H = eye needs meas_dim <= state_dim")
        unknown = [t for t in self.trackers if t not in TRACKERS]
        if unknown or not self.trackers:
            raise ConfigError(f"trackers: unknown {unknown}; choose from {', '.join(TRACKERS)}")
        OspaParams(self.ospa_p, self.ospa_c)
        # expand once to surface matrix errors at construction
        self.bank()
        self.kernel()
        self.initial_truth()
        self.initial_cov()

    def _matrix(self, value, rows: int, cols: int, name: str) -> np.ndarray:
        if isinstance(value, str):
            if value != "eye":
                raise ConfigError(f"{name}: unrecognized value {value!r}")
            return np.eye(rows, cols)
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return float(arr) * np.eye(rows, cols)
        if arr.shape != (rows, cols):
            raise ConfigError(f"{name}: expected a {rows}x{cols} matrix, got shape {arr.shape}")
        return arr

    def bank(self) -> LinearModelBank:
        n, d = self.state_dim, self.meas_dim
        try:
            model = SingleTargetModel(
                H=self._matrix(self.H, d, n, "model.H"),
                Cv=self._matrix(self.Cv, d, d, "model.Cv"),
                A=self._matrix(self.A, n, n, "model.A"),
                Cw=self._matrix(self.Cw, n, n, "model.Cw"),
            )
        except ConfigError as exc:
            raise ConfigError(f"model: {exc}") from None
        return stack_models([model] * self.targets)

    def kernel(self) -> KernelConfig:
        value = self.Cv if isinstance(self.K, str) and self.K == "cv" else self.K
        try:
            return KernelConfig(self._matrix(value, self.meas_dim, self.meas_dim, "kernel.K"))
        except ConfigError as exc:
            raise ConfigError(f"kernel.K: {exc}") from None

    def ospa_params(self) -> OspaParams:
        return OspaParams(self.ospa_p, self.ospa_c)

    def initial_truth(self) -> GroundTruth:
        N, n = self.targets, self.state_dim
        if isinstance(self.truth, str):
            if self.truth != "circle":
                raise ConfigError(f"init.truth: unrecognized value {self.truth!r}")
            states = np.zeros((N, n))
            angles = 2.0 * np.pi * np.arange(N) / N
            states[:, 0] = self.radius * np.cos(angles)
            if n > 1:
                states[:, 1] = self.radius * np.sin(angles)
            return GroundTruth(states)
        states = np.asarray(self.truth, dtype=float)
        if states.shape != (N, n):
            raise ConfigError(f"init.truth: expected {N} rows of length {n}, got shape {states.shape}")
        return GroundTruth(states)

    def initial_cov(self) -> np.ndarray:
        N, n = self.targets, self.state_dim
        arr = np.asarray(self.C0, dtype=float)
        if arr.ndim == 0:
            cov = float(arr) * np.eye(N * n)
        elif arr.shape == (n, n):
            cov = block_diag(*([arr] * N))
        elif arr.shape == (N * n, N * n):
            cov = arr
        else:
            raise ConfigError(f"init.C0: expected scalar, {n}x{n} or {N * n}x{N * n}, got shape {arr.shape}")
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(0.5 * (cov + cov.T))[0] < -1e-12:
            raise ConfigError("init.C0 must be symmetric positive semi-definite")
        return cov

    def initial_belief(self, truth: GroundTruth, rng: np.random.Generator) -> MultiTargetBelief:
        cov = self.initial_cov()
        centre = truth.states.ravel()
        if isinstance(self.init_mean, str):
            if self.init_mean == "sampled":
                mean = sample_gaussian(rng, centre, cov)
            elif self.init_mean == "truth":
                mean = centre.copy()
            else:
                raise ConfigError(f"init.mean: unrecognized value {self.init_mean!r}")
        else:
            mean = np.asarray(self.init_mean, dtype=float)
            if mean.shape != centre.shape:
                raise ConfigError(f"init.mean: expected {centre.size} entries, got shape {mean.shape}")
        return MultiTargetBelief(mean, cov, self.targets, self.state_dim)

    def echo(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            out[key] = list(value) if isinstance(value, tuple) else value
        return out


_KEYS = {
    "model.targets": ("targets", int),
    "model.state_dim": ("state_dim", int),
    "model.meas_dim": ("meas_dim", int),
    "model.H": ("H", "matrix"),
    "model.A": ("A", "matrix"),
    "model.Cv": ("Cv", "matrix"),
    "model.Cw": ("Cw", "matrix"),
    "kernel.K": ("K", "matrix"),
    "kernel.correlated": ("correlated", "bool"),
    "init.truth": ("truth", "matrix"),
    "init.radius": ("radius", float),
    "init.C0": ("C0", "matrix"),
    "init.mean": ("init_mean", "matrix"),
    "run.horizon": ("horizon", int),
    "run.runs": ("runs", int),
    "run.seed": ("seed", int),
    "ospa.p": ("ospa_p", float),
    "ospa.c": ("ospa_c", float),
    "trackers": ("trackers", "list"),
}


def _convert(key: str, raw: str, kind):
    try:
        if kind == "matrix":
            if raw.startswith("["):
                return json.loads(raw)
            try:
                return float(raw)
            except ValueError:
                return raw
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "list":
            return tuple(item.strip() for item in raw.split(",") if item.strip())
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def parse_config(text: str, **overrides) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from key-value text; keyword overrides win."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name, kind = _KEYS[key]
        values[name] = _convert(key, raw, kind)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, **overrides) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), **overrides)


@dataclass
class RunReport:
    """Aggregated OSPA curves plus per-run detail.

    ``ospa_runs[tracker]`` is an (R_ok, T) array over the runs that tracker
    finished; ``run_ids[tracker]`` names those runs.  ``min_eig_ratio`` is
    the smallest eigenvalue / mean variance seen in any posterior.
    """

    config: ScenarioConfig
    trackers: tuple
    ospa_runs: dict
    run_ids: dict
    failures: dict
    seconds_per_update: dict
    min_eig_ratio: dict

    def rows(self):
        for tracker in self.trackers:
            values = self.ospa_runs[tracker]
            count = values.shape[0]
            for step in range(self.config.horizon):
                column = values[:, step]
                mean = float(column.mean()) if count else float("nan")
                se = float(column.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
                yield tracker, step + 1, mean, se, count

    def mean_curve(self, tracker: str) -> np.ndarray:
        return self.ospa_runs[tracker].mean(axis=0)

    def failure_fraction(self) -> float:
        if not self.failures:
            return 0.0
        return max(len(v) for v in self.failures.values()) / self.config.runs

    def failed(self) -> bool:
        return self.failure_fraction() > FAILURE_THRESHOLD

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA_VERSION}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tracker", "step", "mean_ospa", "se_ospa", "runs"])
        for tracker, step, mean, se, count in self.rows():
            writer.writerow([tracker, step, f"{mean:.12g}", f"{se:.12g}", count])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "schema": SCHEMA_VERSION,
            "version": __version__,
            "seed": self.config.seed,
            "config": self.config.echo(),
            "rows": [
                {"tracker": t, "step": s, "mean_ospa": m, "se_ospa": e, "runs": c}
                for t, s, m, e, c in self.rows()
            ],
            "seconds_per_update": self.seconds_per_update,
            "min_eig_ratio": self.min_eig_ratio,
            "failures": {t: [{"run": r, "error": msg} for r, msg in v] for t, v in self.failures.items()},
        }
        return json.dumps(doc, indent=2, default=float)


def _tracker_update(name, belief, measurements, bank, kernel, correlated):
    prior = predict(belief, bank)
    if name == "kernel-sme":
        return measurement_update(prior, measurements, bank, kernel, correlated=correlated)
    if name == "gnn":
        return gnn_update(prior, measurements, bank)
    if name == "oracle-kf":
        return oracle_kf_update(prior, measurements, bank)
    return prior


def _run_once(config: ScenarioConfig, run: int) -> dict:
    """One Monte Carlo run of every configured tracker on a shared simulated trajectory."""
    bank = config.bank()
    kernel = config.kernel()
    params = config.ospa_params()
    truth = config.initial_truth()
    initial = config.initial_belief(truth, rng_stream(config.seed, run, STREAM_INIT))
    sim_rng = rng_stream(config.seed, run, STREAM_SIMULATION)
    trajectory = []
    for _ in range(config.horizon):
        truth, measurements = simulate_step(truth, bank, sim_rng)
        trajectory.append((truth, measurements))

    results = {}
    for name in config.trackers:
        belief = initial
        scores = np.empty(config.horizon)
        worst = np.inf
        elapsed = 0.0
        try:
            for k, (truth_k, meas_k) in enumerate(trajectory):
                start = time.perf_counter()
                belief = _tracker_update(name, belief, meas_k, bank, kernel, config.correlated)
                elapsed += time.perf_counter() - start
                worst = min(worst, min_eig_ratio(belief.cov))
                scores[k] = ospa(point_estimates(belief, bank), truth_k.states @ bank.targets[0].H.T, params)
        except (KernelSMEError, np.linalg.LinAlgError) as exc:
            results[name] = {"error": f"{type(exc).__name__}: {exc}"}
            continue
        results[name] = {"ospa": scores, "seconds": elapsed / config.horizon, "min_eig_ratio": worst}
    return results


def _workers(requested: Optional[int], runs: int) -> int:
    cap = os.environ.get("KSME_THREADS")
    count = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        try:
            count = min(count, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"KSME_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(count, runs))


def run_scenario(config: ScenarioConfig, workers: Optional[int] = None) -> RunReport:
    """Run ``config.runs`` seeded Monte Carlo runs and aggregate OSPA per step.

    Runs are independent given the master seed, so the report does not
    depend on the number of workers.
    """
    count = _workers(workers, config.runs)
    if count == 1:
        outcomes = [_run_once(config, r) for r in range(config.runs)]
    else:
        with ProcessPoolExecutor(max_workers=count) as pool:
            outcomes = list(pool.map(_run_once, [config] * config.runs, range(config.runs)))

    ospa_runs, run_ids, failures, seconds, eig = {}, {}, {}, {}, {}
    for name in config.trackers:
        rows, ids, times, worst = [], [], [], np.inf
        for run, outcome in enumerate(outcomes):
            result = outcome[name]
            if "error" in result:
                failures.setdefault(name, []).append((run, result["error"]))
                continue
            rows.append(result["ospa"])
            ids.append(run)
            times.append(result["seconds"])
            worst = min(worst, result["min_eig_ratio"])
        ospa_runs[name] = np.array(rows).reshape(len(rows), config.horizon)
        run_ids[name] = ids
        seconds[name] = float(np.mean(times)) if times else float("nan")
        eig[name] = float(worst)
    return RunReport(
        config=config,
        trackers=tuple(config.trackers),
        ospa_runs=ospa_runs,
        run_ids=run_ids,
        failures=failures,
        seconds_per_update=seconds,
        min_eig_ratio=eig,
    )


@dataclass(frozen=True)
class BenchResult:
    rows: tuple  # (N, median seconds)
    slope: Optional[float]

    def to_csv(self) -> str:
        lines = ["targets,median_seconds"]
        lines += [f"{n},{t:.6g}" for n, t in self.rows]
        lines.append(f"# slope,{'' if self.slope is None else f'{self.slope:.4f}'}")
        return "\n".join(lines) + "\n"


def run_complexity_bench(
    config: ScenarioConfig,
    target_counts: Sequence[int],
    repeats: int = 9,
) -> BenchResult:
    """Median wall-clock time of one Kernel-SME measurement update per target count.

    Targets sit on a circle whose radius grows with N so the spacing stays
    that of ``config``.  The slope of log(time) against log(N) is fitted
    when at least two counts are given.
    """
    counts = [int(c) for c in target_counts]
    if not counts or any(c < 1 for c in counts):
        raise ConfigError("target counts must be positive integers")
    if len(set(counts)) != len(counts):
        raise ConfigError(f"target counts must be distinct, got {counts}")
    rows = []
    for N in counts:
        scenario = replace(config, targets=N, radius=config.radius * N / config.targets, truth="circle")
        bank, kernel = scenario.bank(), scenario.kernel()
        truth = scenario.initial_truth()
        belief = predict(scenario.initial_belief(truth, rng_stream(config.seed, N, STREAM_INIT)), bank)
        _, measurements = simulate_step(truth, bank, rng_stream(config.seed, N, STREAM_SIMULATION))
        measurement_update(belief, measurements, bank, kernel, correlated=config.correlated)  # warm-up
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            measurement_update(belief, measurements, bank, kernel, correlated=config.correlated)
            times.append(time.perf_counter() - start)
        rows.append((N, float(np.median(times))))
    slope = None
    if len(rows) >= 2:
        slope = float(np.polyfit(np.log([r[0] for r in rows]), np.log([r[1] for r in rows]), 1)[0])
    return BenchResult(tuple(rows), slope)


def random_moment_case(rng: np.random.Generator, N: int, d: int, correlated_prior: bool):
    """A random model bank, PSD prior, kernel and measurement-based test vectors."""
    n = d + int(rng.integers(0, 2))
    targets = []
    for _ in range(N):
        B = rng.normal(size=(d, d))
        targets.append(
            SingleTargetModel(
                H=rng.normal(size=(d, n)),
                Cv=0.2 * B @ B.T + 0.05 * np.eye(d),
                A=np.eye(n),
                Cw=0.1 * np.eye(n),
            )
        )
    bank = stack_models(targets)
    if correlated_prior:
        B = rng.normal(size=(N * n, N * n))
        cov = 0.5 * B @ B.T / (N * n)
    else:
        blocks = []
        for _ in range(N):
            B = rng.normal(size=(n, n))
            blocks.append(0.5 * B @ B.T / n)
        cov = block_diag(*blocks)
    prior = MultiTargetBelief(rng.normal(size=N * n), cov, N, n)
    B = rng.normal(size=(d, d))
    kernel = KernelConfig(0.2 * B @ B.T + 0.05 * np.eye(d))
    x = sample_gaussian(rng, prior.mean, prior.cov)
    y = bank.stacked_H @ x + sample_gaussian(rng, np.zeros(N * d), bank.stacked_Cv)
    tests = select_test_vectors(MeasurementSet(y.reshape(N, d)), kernel)
    return prior, bank, kernel, tests


def validate_moments(cases: int = 20, samples: int = 1_000_000, seed: int = 0, correlated_prior: bool = False):
    """Closed-form vs Monte Carlo moments on random configurations.

    Yields one dict per case with the largest |closed form - MC| / SE of each
    moment.  Correlated priors are checked against the exact cross-target
    covariance; block-diagonal ones against the default cubic form.
    """
    rng = rng_stream(seed, 99)
    shapes = [(N, d) for N in (1, 2, 3) for d in (1, 2)]
    for case in range(cases):
        N, d = shapes[case % len(shapes)]
        prior, bank, kernel, tests = random_moment_case(rng, N, d, correlated_prior)
        closed = pseudo_moments(prior, bank, kernel, tests, correlated=correlated_prior)
        estimate = mc_pseudo_moments(prior, bank, kernel, tests, samples=samples, seed=seed + case)
        z = estimate.z_scores(closed)
        yield {
            "case": case,
            "N": N,
            "d": d,
            "n": prior.n,
            "entries": int(sum(v.size for v in z.values())),
            **{f"max_z_{k}": float(v.max()) for k, v in z.items()},
        }
