"""Headline acceptance checks.  Each test records one PASS/FAIL line that is
printed in the terminal summary, then asserts."""

import itertools
import time

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from kernel_sme import (
    MeasurementSet,
    OspaParams,
    hungarian,
    mc_pseudo_moments,
    measurement_update,
    ospa,
    phd_convolved_with_kernel,
    pseudo_moments,
    rng_stream,
)
from kernel_sme.harness import parse_config, random_moment_case, run_complexity_bench, validate_moments

from conftest import ACCEPTANCE_LINES
from test_sme import _measurement_case


def record(name, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


@pytest.mark.slow
def test_moment_correctness():
    """20 block-diagonal priors with the default update moments, 20 full priors with
    the exact cross-target covariance; 1e6 samples each; every entry within 5 SE."""
    start = time.perf_counter()
    rows = list(validate_moments(cases=20, samples=1_000_000, seed=0, correlated_prior=False))
    rows += list(validate_moments(cases=20, samples=1_000_000, seed=1000, correlated_prior=True))
    elapsed = time.perf_counter() - start
    worst = max(max(v for k, v in r.items() if k.startswith("max_z")) for r in rows)
    entries = sum(r["entries"] for r in rows)
    shapes = {(r["N"], r["d"]) for r in rows}
    ok = worst < 5 and shapes == {(N, d) for N in (1, 2, 3) for d in (1, 2)} and elapsed < 300
    record("moment correctness", ok, f"{len(rows)} configs, {entries} entries, max |z| = {worst:.2f} (< 5), {elapsed:.0f} s")


def test_phd_convolution_identity():
    rng = rng_stream(1, 0)
    exact = True
    worst_z = 0.0
    for N, d in [(1, 1), (2, 2), (3, 1), (3, 2)]:
        prior, bank, kernel, tests = random_moment_case(rng, N, d, correlated_prior=True)
        mean_s = pseudo_moments(prior, bank, kernel, tests).mean_s
        phd = np.array([phd_convolved_with_kernel(prior, bank, kernel, a) for a in tests.vectors])
        exact &= bool(np.array_equal(phd, mean_s))
        est = mc_pseudo_moments(prior, bank, kernel, tests, samples=1_000_000, seed=N * 10 + d)
        worst_z = max(worst_z, float(np.max(np.abs(phd - est.moments.mean_s) / est.standard_errors.mean_s)))
    prior, bank, kernel, _ = random_moment_case(rng, 3, 1, correlated_prior=False)
    grid = np.linspace(-60, 60, 12_001)
    integral = trapezoid([phd_convolved_with_kernel(prior, bank, kernel, [z]) for z in grid], grid)
    ok = exact and worst_z < 5 and abs(integral - 3) < 1e-3
    record(
        "PHD convolution identity",
        ok,
        f"equal to closed-form mean exactly: {exact}; max |z| vs MC = {worst_z:.2f}; integral for N=3 = {integral:.6f}",
    )


def test_symmetry():
    rng = rng_stream(2, 0)
    worst = 0.0
    for _ in range(100):
        N, d = int(rng.integers(1, 7)), int(rng.integers(1, 3))
        prior, bank, kernel, y = _measurement_case(rng, N, d, n=d + int(rng.integers(0, 2)))
        ref = measurement_update(prior, MeasurementSet(y), bank, kernel)
        out = measurement_update(prior, MeasurementSet(y[rng.permutation(N)]), bank, kernel)
        for a, b in ((out.mean, ref.mean), (out.cov, ref.cov)):
            worst = max(worst, float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)))
    record("permutation symmetry", worst <= 1e-9, f"100 cases, max relative difference {worst:.1e} (<= 1e-9)")


def test_assignment_and_ospa_enumeration():
    rng = rng_stream(3, 0)
    start = time.perf_counter()
    mismatches = 0
    instances = 0
    for _ in range(300):
        n = int(rng.integers(1, 7))
        cost = rng.integers(0, 4, size=(n, n)).astype(float) if rng.random() < 0.3 else rng.uniform(0, 10, (n, n))
        best, best_map = np.inf, None
        for perm in itertools.permutations(range(n)):
            total = sum(cost[r, perm[r]] for r in range(n))
            if total < best - 1e-12:
                best, best_map = total, perm
        result = hungarian(cost)
        mismatches += result.mapping != best_map or abs(result.total_cost - best) > 1e-12 * max(1, best)
        instances += 1
    for _ in range(300):
        n, d = int(rng.integers(1, 7)), int(rng.integers(1, 3))
        params = OspaParams(float(rng.choice([1.0, 2.0])), float(rng.uniform(0.5, 5)))
        a, b = rng.normal(scale=2, size=(n, d)), rng.normal(scale=2, size=(n, d))
        dist = np.minimum(np.linalg.norm(a[:, None] - b[None], axis=2), params.c) ** params.p
        best = min(sum(dist[i, perm[i]] for i in range(n)) for perm in itertools.permutations(range(n)))
        mismatches += abs(ospa(a, b, params) - (best / n) ** (1 / params.p)) > 1e-12 * max(1, best)
        instances += 1
    elapsed = time.perf_counter() - start
    record(
        "assignment / OSPA enumeration",
        mismatches == 0 and elapsed < 60,
        f"{instances} instances (N <= 6), {mismatches} mismatches, {elapsed:.1f} s",
    )


def test_complexity_slope():
    result = run_complexity_bench(parse_config(""), [5, 10, 20, 40], repeats=9)
    times = ", ".join(f"N={n}: {t * 1e3:.2f} ms" for n, t in result.rows)
    record("cubic update cost", 2.5 <= result.slope <= 3.5, f"log-log slope {result.slope:.2f} (target [2.5, 3.5]); {times}")


def test_eight_target_scenario(eight_target_report):
    report = eight_target_report
    complete = not report.failures and all(report.ospa_runs[t].shape == (30, 15) for t in report.trackers)
    sme = report.ospa_runs["kernel-sme"]
    idle = report.ospa_runs["predict-only"]
    t_a = stats.ttest_rel(sme[:, -1], idle[:, -1], alternative="less")
    ratio = report.mean_curve("kernel-sme") / report.mean_curve("oracle-kf")
    part_a = bool(t_a.pvalue < 0.05)
    part_b = bool(np.all(ratio <= 3.0))
    detail = (
        f"(a) step-15 OSPA {sme[:, -1].mean():.3f} vs predict-only {idle[:, -1].mean():.3f}, one-sided p = {t_a.pvalue:.1e}: "
        f"{'pass' if part_a else 'fail'}; (b) max ratio to oracle-KF {ratio.max():.2f} at step {int(ratio.argmax()) + 1} "
        f"(limit 3): {'pass' if part_b else 'fail'}"
    )
    record("eight-target scenario", complete and part_a and part_b, detail)


def test_numerical_hygiene(eight_target_report):
    worst = min(eight_target_report.min_eig_ratio.values())
    record(
        "covariance hygiene",
        worst >= -1e-9,
        f"smallest eigenvalue / (trace / N n) over all runs, steps and trackers = {worst:.3g} (>= -1e-9)",
    )
