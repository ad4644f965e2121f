import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

import ohsize.config as config
from ohsize.types.cost import CostParameters, PowerLawTheta

ENV_NAMES = (
    "OHSIZE_GRID_SIZE",
    "OHSIZE_WORKERS",
    "OHSIZE_ORACLE_TIMEOUT",
    "OHSIZE_ORACLE_MAX_CALLS",
    "OHSIZE_LOG_LEVEL",
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow Monte-Carlo checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo check, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def _reset() -> None:
    config.set_grid_size(None)
    config.set_worker_count(None)
    config.set_log_level(None)
    config.oracle_timeout.cache_clear()
    config.oracle_max_calls.cache_clear()


@pytest.fixture(autouse=True)
def configure_env(monkeypatch):
    for name in ENV_NAMES:
        monkeypatch.delenv(name, raising=False)
    _reset()
    yield
    _reset()


@pytest.fixture
def default_params():
    return CostParameters(N=100_000, k1=0.4, theta=PowerLawTheta(a=10_000, b=1.2, c=0.2))
