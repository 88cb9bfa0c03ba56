import pytest

from issf.graph import load_scenario
from toys import toy_graph


@pytest.fixture(scope="session")
def chain():
    return load_scenario("three_service_chain")


@pytest.fixture
def toy():
    return toy_graph()


@pytest.fixture
def sure_scan_toy():
    """Toy graph whose scans are deterministic: every touched node is caught, nothing else."""
    return toy_graph(scan_true_positive_rate=1.0, scan_false_positive_rate=0.0)


@pytest.fixture
def pool(tmp_path):
    from issf.pool import ServicePool

    return ServicePool(tmp_path / "pool")


def pytest_terminal_summary(terminalreporter):
    from criteria import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
