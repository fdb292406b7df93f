import numpy as np
import pytest

from paradae.dae import DaeSystem
from paradae.models import ZeroSource


def scalar_decay(rate=2.0, t_span=(0.0, 1.0), u0=1.0):
    """u' = -rate * u as a 1x1 system; picklable."""
    return DaeSystem([[1.0]], [[rate]], ZeroSource(1), t_span, initial=[u0], name="scalar")


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


@pytest.fixture
def decay():
    return scalar_decay()


ACCEPTANCE_LINES = []


def record_criterion(label, ok, detail=""):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
