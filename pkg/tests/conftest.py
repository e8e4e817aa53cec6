import pytest

from household_merton import MarketParams, ProblemSpec, simulate

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def market():
    return MarketParams.calibrated()


@pytest.fixture(scope="session")
def base_spec(market):
    return ProblemSpec.calibrated_example(market=market)


@pytest.fixture(scope="session")
def ensemble(market):
    """Shared ensemble: 1e5 paths, 252 steps, antithetic."""
    return simulate(market, 100_000, 252, seed=20240607)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
