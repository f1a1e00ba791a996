import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from acceptance_log import LINES
from salitrack import SaliencyNetwork
from salitrack.synthetic import blob_dataset

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def blob_pairs():
    return blob_dataset(10, seed=0)


@pytest.fixture(scope="session")
def trained_net(blob_pairs):
    return SaliencyNetwork(random_state=0).fit([p[0] for p in blob_pairs], [p[1] for p in blob_pairs])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
