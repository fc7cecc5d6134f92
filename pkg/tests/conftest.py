import pytest

from hypercoord import vocab
from hypercoord.graph import TripleStore
from hypercoord.model import build_chilled_water_fixture, load_fixture_asset

P = vocab.P


@pytest.fixture
def fixture_store():
    return TripleStore(load_fixture_asset())


@pytest.fixture
def built_fixture():
    return build_chilled_water_fixture()


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
