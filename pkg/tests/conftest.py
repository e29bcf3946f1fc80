import pytest


from tauleap_mlmc.model import decay, dimerization


@pytest.fixture(scope="session")
def dimer_1e3():
    return dimerization(1e3)


@pytest.fixture(scope="session")
def dimer_1e4():
    return dimerization(1e4)


@pytest.fixture(scope="session")
def decay_1e4():
    return decay(10_000)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
