import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def zscore(estimate, target, std_error):
    return np.abs(np.asarray(estimate) - target) / np.asarray(std_error)


def sample_cov_se(x):
    """Sample covariance of rows of x with entrywise standard errors (iid rows)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    xc = x - x.mean(axis=0)
    prod = xc[:, :, None] * xc[:, None, :]
    cov = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / np.sqrt(n)
    return cov, se


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Remember one acceptance result; printed again in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
