import pytest

from sirnode.model import EpidemicParams, SirState


@pytest.fixture(scope="session")
def params():
    return EpidemicParams()


@pytest.fixture(scope="session")
def x0():
    return SirState.from_counts(200, 1e7)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0].lstrip("#"))):
            terminalreporter.write_line(line)
