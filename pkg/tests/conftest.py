import pytest

from rtsangle.model import FrontEndLayout, RadarConfig, ScenarioConfig


@pytest.fixture
def radar():
    return RadarConfig()


@pytest.fixture
def table1():
    return ScenarioConfig()


@pytest.fixture
def ideal():
    return ScenarioConfig(layout=FrontEndLayout.square())


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
