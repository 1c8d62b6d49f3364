import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dhnet import synthetic

settings.register_profile(
    "dhnet",
    deadline=None,
    derandomize=True,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("dhnet")


@pytest.fixture(scope="session")
def mini_spec():
    return synthetic.mini_system()


@pytest.fixture(scope="session")
def mini_scenarios(mini_spec):
    return synthetic.history_scenarios(mini_spec, 24)


@pytest.fixture
def rng():
    return np.random.default_rng(20210104)


def pytest_terminal_summary(terminalreporter):
    import sys

    results = None
    for name, module in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            results = getattr(module, "RESULTS", None) or results
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
