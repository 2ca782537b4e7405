import numpy as np
import pytest

from qmsr import TrainingConfig, train_qmsr

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Log one acceptance line; the lines are repeated in the terminal summary."""

    def _record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def decaying_data(rng, n, k, decay=0.85):
    """Random ``n x k`` matrix of full rank with geometrically decaying spectrum."""
    rank = min(n, k)
    U, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    Vt, _ = np.linalg.qr(rng.standard_normal((k, rank)))
    return (U * decay ** np.arange(rank)) @ Vt.T


@pytest.fixture(scope="session")
def toy_model():
    rng = np.random.default_rng(7)
    S = decaying_data(rng, 120, 40)
    return train_qmsr(S, TrainingConfig(r=4, m=8, M=20)), S
