import numpy as np
import pytest

from sfnls.grid import SpectralField, make_grid


@pytest.fixture
def grid1():
    return make_grid(1, 40.0, 256, 0.8)


@pytest.fixture
def grid2():
    return make_grid(2, 30.0, 64, 0.8)


def gaussian(grid, amp=1.0, width=1.0, chirp=0.0):
    x0 = grid.coords()[0]
    return SpectralField(grid, amp * np.exp(-grid.radius() ** 2 / (2 * width**2)) * (1 + 1j * chirp * x0))


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line; shown in the terminal summary."""

    def record(label: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
