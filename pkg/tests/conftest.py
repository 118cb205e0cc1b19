import numpy as np
import pytest

from clusysid import ClusterGroundTruth, SystemSpec
from clusysid.harness import load_config

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def bench_config():
    return load_config("paper_sec4")


@pytest.fixture(scope="session")
def bench_truths(bench_config):
    return bench_config.truths


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_spec(sigma=0.1, N=3, T=4, sigma_w=None, cluster=0, sid=0):
    sw = sigma if sigma_w is None else sigma_w
    return SystemSpec(sid, cluster, sigma, sigma, sw, N, T)


def random_truth(rng, n_x=3, n_u=2, scale=0.4):
    return ClusterGroundTruth(scale * rng.standard_normal((n_x, n_x)), rng.standard_normal((n_x, n_u)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
