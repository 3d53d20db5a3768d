import pytest
from hypothesis import settings

from wavemaps.config import SimConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pulse_config(amplitude=0.5, **kw):
    return SimConfig(amplitude=amplitude, radius=2.0, delta=0.4, **kw)


@pytest.fixture
def pulse():
    return pulse_config


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
