import pytest

from chainkit import scenario_registry
from zanon.attribute import run_pipeline
from zanon.chain import ChainView
from zanon.synth import ScenarioConfig, build


@pytest.fixture(scope="session")
def scenario():
    """Default 5000-block scenario."""
    return build(ScenarioConfig(seed=11))


@pytest.fixture(scope="session")
def view(scenario):
    return ChainView.from_blocks(scenario.blocks)


@pytest.fixture(scope="session")
def registry(scenario, view):
    return scenario_registry(scenario, view)


@pytest.fixture(scope="session")
def attribution(view, registry):
    return run_pipeline(view, registry)


@pytest.fixture(scope="session")
def small_scenario():
    return build(ScenarioConfig(seed=5, block_count=600))


@pytest.fixture(scope="session")
def small_view(small_scenario):
    return ChainView.from_blocks(small_scenario.blocks)


@pytest.fixture(scope="session")
def tsb_scenario():
    """Planted price-schedule buyers and decoys, with low address churn."""
    return build(ScenarioConfig(
        seed=3, block_count=3000, block_interval=3000, tsb_buyers=6, tsb_decoys=6, h3_decoys=2,
        exchange_member_rate=0.3, tsb_busy_txs=30,
    ))


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
