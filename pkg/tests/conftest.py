import warnings

import pytest

from index_skew_lab.model import single_asset_reference, three_asset_reference, two_asset_example

# Lines recorded by the acceptance suite, echoed in the terminal summary so
# that one pass/fail line per criterion is visible even with captured output.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def ref_model():
    return single_asset_reference()


@pytest.fixture
def bs_model():
    return single_asset_reference(eta=0.0)


@pytest.fixture
def two_asset():
    return two_asset_example()


@pytest.fixture
def three_asset():
    return three_asset_reference()


@pytest.fixture(autouse=True)
def _quiet_overflow():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield
