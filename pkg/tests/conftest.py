import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nsf.fixed_point import iterate  # noqa: E402
from nsf.mesh import build_rectangle_channel  # noqa: E402
from nsf.presets import channel_setup  # noqa: E402


@pytest.fixture(scope="session")
def channel():
    return build_rectangle_channel(1.0, 0.25, 32, 8)


@pytest.fixture(scope="session")
def square():
    return build_rectangle_channel(1.0, 1.0, 1, 1)


@pytest.fixture(scope="session")
def baseline_run():
    setup = channel_setup()
    state, derived, report = iterate(setup)
    return setup, state, derived, report


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import lines

    rows = lines()
    if rows:
        terminalreporter.section("acceptance criteria")
        for row in rows:
            terminalreporter.write_line(row)
