import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm

from kernel_sme import (
    KernelConfig,
    MeasurementSet,
    MultiTargetBelief,
    PreconditionError,
    SingleTargetModel,
    TestVectorSet,
    mc_pseudo_moments,
    phd_convolved_with_kernel,
    pseudo_moments,
    select_test_vectors,
    stack_models,
)
from kernel_sme.harness import random_moment_case

from conftest import block_prior


def _scalar_case():
    bank = stack_models([SingleTargetModel(H=[[1.0]], Cv=[[0.1]], A=[[1.0]], Cw=[[0.0]])])
    prior = MultiTargetBelief([0.0], [[1.0]], 1, 1)
    return prior, bank, KernelConfig(0.1), TestVectorSet(np.array([[0.0]]), np.array([0]), np.array([1]))


def test_scalar_mean_matches_density():
    prior, bank, kernel, tests = _scalar_case()
    est = mc_pseudo_moments(prior, bank, kernel, tests, samples=1_000_000, seed=1)
    exact = 1.0 / math.sqrt(2 * math.pi * 1.2)
    assert abs(est.moments.mean_s[0] - exact) < 5 * est.standard_errors.mean_s[0]
    assert est.sample_count == 1_000_000


def test_degenerate_distribution_has_zero_covariance():
    bank = stack_models([SingleTargetModel(H=np.eye(2), Cv=np.zeros((2, 2)), A=np.eye(2), Cw=np.zeros((2, 2)))] * 2)
    prior = MultiTargetBelief([0.0, 0.0, 1.0, 0.5], np.zeros((4, 4)), 2, 2)
    kernel = KernelConfig(0.2 * np.eye(2))
    tests = select_test_vectors(MeasurementSet([[0.1, 0.0], [1.0, 0.4]]), kernel)
    est = mc_pseudo_moments(prior, bank, kernel, tests, samples=10_000, seed=0)
    np.testing.assert_array_equal(est.moments.cov_ss, 0.0)
    np.testing.assert_array_equal(est.moments.cross_cov, 0.0)
    closed = pseudo_moments(prior, bank, kernel, tests)
    np.testing.assert_allclose(est.moments.mean_s, closed.mean_s, rtol=1e-13)


def test_standard_error_shrinks_with_samples(rng):
    prior, bank, kernel, tests = random_moment_case(rng, 2, 2, correlated_prior=False)
    small = mc_pseudo_moments(prior, bank, kernel, tests, samples=100_000, seed=3)
    large = mc_pseudo_moments(prior, bank, kernel, tests, samples=200_000, seed=4)
    for name in ("mean_s", "cross_cov", "cov_ss"):
        ratio = np.mean(getattr(large.standard_errors, name)) / np.mean(getattr(small.standard_errors, name))
        assert ratio == pytest.approx(1 / math.sqrt(2), rel=0.2), name


def test_oracle_is_reproducible(rng):
    prior, bank, kernel, tests = random_moment_case(rng, 2, 1, correlated_prior=True)
    a = mc_pseudo_moments(prior, bank, kernel, tests, samples=20_000, seed=9)
    b = mc_pseudo_moments(prior, bank, kernel, tests, samples=20_000, seed=9)
    np.testing.assert_array_equal(a.moments.cov_ss, b.moments.cov_ss)
    np.testing.assert_array_equal(a.standard_errors.cross_cov, b.standard_errors.cross_cov)


def test_oracle_rejects_few_samples():
    prior, bank, kernel, tests = _scalar_case()
    with pytest.raises(PreconditionError):
        mc_pseudo_moments(prior, bank, kernel, tests, samples=9_999)


def test_eight_target_one_step_moments(eight_target_bank, rng):
    """Predicted moments after one time update of the 8-target scenario."""
    from kernel_sme import predict

    angles = 2 * np.pi * np.arange(8) / 8
    truth = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    prior = predict(MultiTargetBelief(truth.ravel() + rng.normal(scale=math.sqrt(0.5), size=16), 0.5 * np.eye(16), 8, 2), eight_target_bank)
    kernel = KernelConfig(0.1 * np.eye(2))
    y = truth + rng.normal(scale=math.sqrt(0.7), size=(8, 2))
    tests = select_test_vectors(MeasurementSet(y), kernel)
    closed = pseudo_moments(prior, eight_target_bank, kernel, tests)
    z = mc_pseudo_moments(prior, eight_target_bank, kernel, tests, samples=1_000_000, seed=5).z_scores(closed)
    for name, values in z.items():
        assert values.max() < 5, name


def _literal_same_component(a_i, a_j, mu, S, K):
    # N(a_i; a_j, 0.5 K) N((a_i + a_j)/2; mu, S), without the K/2 in the second factor
    return norm.pdf(a_i, a_j, math.sqrt(0.5 * K)) * norm.pdf(0.5 * (a_i + a_j), mu, math.sqrt(S))


def _identity_same_component(a_i, a_j, mu, S, K):
    return norm.pdf(a_i, a_j, math.sqrt(2 * K)) * norm.pdf(0.5 * (a_i + a_j), mu, math.sqrt(S + 0.5 * K))


def test_same_component_term_variants():
    """E[k(a_i - y) k(a_j - y)] for y ~ N(mu, S): the product identity is exact, the printed form is not."""
    from scipy.integrate import quad

    mu, S, K = 0.3, 0.9, 0.2
    for a_i, a_j in [(0.0, 0.0), (0.5, 0.1), (-0.4, 0.9)]:
        exact = quad(
            lambda y: norm.pdf(a_i, y, math.sqrt(K)) * norm.pdf(a_j, y, math.sqrt(K)) * norm.pdf(y, mu, math.sqrt(S)),
            -np.inf,
            np.inf,
            epsabs=1e-14,
        )[0]
        assert _identity_same_component(a_i, a_j, mu, S, K) == pytest.approx(exact, rel=1e-9)
        assert abs(_literal_same_component(a_i, a_j, mu, S, K) - exact) > 0.05 * exact


def test_phd_convolution_equals_mean_exactly(rng):
    for N, d in [(1, 1), (3, 2), (5, 2)]:
        prior, bank, kernel, tests = random_moment_case(rng, N, d, correlated_prior=True)
        mean_s = pseudo_moments(prior, bank, kernel, tests).mean_s
        for i, a in enumerate(tests.vectors):
            assert phd_convolved_with_kernel(prior, bank, kernel, a) == mean_s[i]


def test_phd_convolution_matches_direct_sum(rng):
    prior, bank, kernel, _ = random_moment_case(rng, 3, 2, correlated_prior=True)
    z = rng.normal(size=2)
    direct = 0.0
    for l, model in enumerate(bank.targets):
        S = model.H @ prior.block_cov(l, l) @ model.H.T + model.Cv + kernel.K
        direct += multivariate_normal(model.H @ prior.block_mean(l), S).pdf(z)
    assert phd_convolved_with_kernel(prior, bank, kernel, z) == pytest.approx(direct, rel=1e-12)


def test_small_kernel_recovers_measurement_phd(rng):
    prior = block_prior(rng, 3, 2)
    bank = stack_models([SingleTargetModel.random_walk(2, 0.1, 0.1)] * 3)
    z = rng.normal(size=2)
    phd = sum(multivariate_normal(prior.block_mean(l), prior.block_cov(l, l) + 0.1 * np.eye(2)).pdf(z) for l in range(3))
    value = phd_convolved_with_kernel(prior, bank, KernelConfig(1e-10 * np.eye(2)), z)
    assert value == pytest.approx(phd, rel=1e-7)


def test_phd_convolution_integrates_to_target_count(rng):
    prior, bank, kernel, _ = random_moment_case(rng, 3, 1, correlated_prior=False)
    from scipy.integrate import trapezoid

    grid = np.linspace(-60, 60, 12_001)
    values = np.array([phd_convolved_with_kernel(prior, bank, kernel, [z]) for z in grid])
    assert trapezoid(values, grid) == pytest.approx(3.0, abs=1e-3)


def test_phd_convolution_dimension_checked(rng):
    prior, bank, kernel, _ = random_moment_case(rng, 2, 2, correlated_prior=False)
    with pytest.raises(PreconditionError):
        phd_convolved_with_kernel(prior, bank, kernel, [0.0])
