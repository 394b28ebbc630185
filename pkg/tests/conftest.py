import numpy as np
import pytest

from lib.config import ExperimentConfig
from lib.experiments import run_simple_case


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the ensemble studies marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="ensemble study; pass --runslow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for var in ("SINDYG_SEED", "SINDYG_OUT_DIR", "SINDYG_WORKERS"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture(scope="session")
def simple_case(tmp_path_factory):
    """The three-node study at default solver settings, seed 0, five unseen
    test trajectories, heatmap included."""
    out = tmp_path_factory.mktemp("simple")
    return run_simple_case(ExperimentConfig(out_dir=str(out), seed=0, n_test=5, heatmap=True))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
