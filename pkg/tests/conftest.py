import numpy as np
import pytest

from kbl import KillingFunction, TimeGrid


@pytest.fixture
def unit_grid():
    return TimeGrid(1.0, 50)


@pytest.fixture
def const_zeta():
    return KillingFunction.constant(1.0)


@pytest.fixture
def abs_zeta():
    return KillingFunction.abs_power(1.0)


def ks_2samp_pvalue(a, b):
    from scipy.stats import ks_2samp
    return ks_2samp(np.asarray(a), np.asarray(b)).pvalue


ACCEPTANCE_LINES = []


def record_criterion(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
