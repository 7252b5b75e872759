import json
import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("layerlab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("layerlab")

_HERE = os.path.dirname(__file__)


@pytest.fixture(scope="session")
def frozen():
    with open(os.path.join(_HERE, "oracles", "frozen.json")) as fh:
        return json.load(fh)


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
