import numpy as np
import pytest

from raman_memory.presets import case_setup, get_preset
from raman_memory.solver import SimGrid


@pytest.fixture(scope="session")
def sim750():
    p = get_preset("sim750")
    return p.medium_params(), p.sequence()


@pytest.fixture(scope="session")
def coarse(sim750):
    """Low-energy sequence on a small grid for kernel-heavy tests."""
    medium, _ = sim750
    seq = get_preset("sim750").sequence(read_in_pJ=330.0, read_out_pJ=330.0)
    grid = SimGrid.for_sequence(seq, 24, 600, tol=1e-12)
    return medium, seq, grid


def setup(case, medium, **kw):
    kw.setdefault("with_decay", False)
    return case_setup(case, medium, **kw)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
