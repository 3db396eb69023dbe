import numpy as np
import pytest

from config import AgentSettings, ExperimentConfig
from environments import EnvironmentId
from mdp import build_mdp
from variation import BinaryIid


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run long benchmark checks')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


def random_mdp(rng, num_states, num_actions, horizon, discount=1.0):
    transitions = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    rewards = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    return build_mdp(transitions, rewards, horizon=horizon, discount=discount)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_config(tmp_path):
    """Small single-process experiment config; keyword overrides are passed through."""

    def factory(**overrides):
        params = {
            'environment': EnvironmentId.RIVER_SWIM,
            'agent': AgentSettings(kind='opp_ucrl2'),
            'variation': BinaryIid(eps0=0.0, eps1=0.0, rho=0.5),
            'num_episodes': 5,
            'seeds': (1, 2),
            'output_dir': str(tmp_path / 'out'),
            'jobs': 1,
        }
        params.update(overrides)
        return ExperimentConfig(**params)

    return factory
