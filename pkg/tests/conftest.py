import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import lexisafe as lx


@pytest.fixture(scope="session")
def chain_env():
    return lx.make_chain_hazard(9)


@pytest.fixture(scope="session")
def grid_env():
    return lx.make_grid_twocost(6, 6, seed=0)


@pytest.fixture(scope="session")
def chain_dataset(chain_env):
    return lx.generate_dataset(chain_env, lx.BehaviorPolicySpec(), 600, seed=0)


@pytest.fixture(scope="session")
def grid_dataset(grid_env):
    return lx.generate_dataset(grid_env, lx.BehaviorPolicySpec(), 400, seed=0)
