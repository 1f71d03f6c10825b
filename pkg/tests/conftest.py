import numpy as np
import pytest

from jointsync import NoiseSpec, default_schedule, sample_scenario, simulate_network

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def scaled_rel_err(theta_hat, theta_true, A):
    """Max column-scaled error relative to the largest column-scaled entry."""
    s = np.linalg.norm(A, axis=0)
    return np.max(np.abs(theta_hat - theta_true) * s) / np.max(np.abs(theta_true) * s)


@pytest.fixture
def rng():
    return np.random.default_rng(20121)


@pytest.fixture
def scenario4(rng):
    return sample_scenario(4, rng)


@pytest.fixture
def clean_log4(scenario4):
    return simulate_network(scenario4, default_schedule(20), NoiseSpec(0.0))
