import numpy as np
import pytest

from dipspin.experiments import InitialState, run_fid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; printed together at the end of the session."""

    def add(tag: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}")

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[1:].split(":")[0].split(" ")[0].rstrip("abcdefg"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fid_1000():
    """N = 1000 periodic cube, f = 0.7, rotating-secular, default RK4 step, t~ in [0, 10]."""
    return run_fid(t_end=10.0, init=InitialState(0.7))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
