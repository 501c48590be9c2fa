import sys

import pytest

from porlab import catalog


@pytest.fixture(scope="session")
def cross48():
    return catalog.cross_space(48, 1 / 64)


@pytest.fixture(scope="session")
def cross16():
    return catalog.cross_space(16, 1 / 16)


@pytest.fixture(scope="session")
def integer_segment():
    """E = Z on [-4, 4] at h = 1/64."""
    return catalog.segment_with_integer_set(4, 1 / 64)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
