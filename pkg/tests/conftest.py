import numpy as np
import pytest

from loadid.dataset import synth_dataset
from loadid.features import DescriptorKind, extract

# (criterion number, title, passed, detail) rows filled in by test_acceptance
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_LINES):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} -- {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def benchmark_signals():
    """5 classes x 50 signals, M = 4096 samples, seed 0."""
    return synth_dataset(5, 50, 4096, seed=0)


@pytest.fixture(scope="session")
def benchmark_features(benchmark_signals):
    return extract(benchmark_signals, DescriptorKind.parse("rmsf"), 128)

