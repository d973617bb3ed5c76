import numpy as np
import pytest

from kernel_sme import MultiTargetBelief, SingleTargetModel, stack_models

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def eight_target_bank():
    return stack_models([SingleTargetModel.random_walk(2, 0.1, 0.1)] * 8)


@pytest.fixture
def scalar_bank():
    return stack_models([SingleTargetModel(H=[[1.0]], Cv=[[0.1]], A=[[1.0]], Cw=[[0.0]])])


def block_prior(rng, N, n, scale=0.5):
    blocks = []
    for _ in range(N):
        B = rng.normal(size=(n, n))
        blocks.append(scale * B @ B.T / n + 0.01 * np.eye(n))
    return MultiTargetBelief.from_blocks(list(rng.normal(size=(N, n))), blocks)


@pytest.fixture(scope="session")
def eight_target_report():
    """The 8-target, 30-run, 15-step scenario from scenarios/eight_targets.cfg, run once per session."""
    from pathlib import Path

    from kernel_sme.harness import load_config, run_scenario

    config = load_config(Path(__file__).resolve().parents[1] / "scenarios" / "eight_targets.cfg")
    return run_scenario(config, workers=1)
