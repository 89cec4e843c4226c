from pathlib import Path

import numpy as np
import pytest

from humanreach.chain import canonical_7dof
from humanreach.oracles import TwoLinkPlanar

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def arm7():
    return canonical_7dof()


@pytest.fixture(scope="session")
def planar():
    return TwoLinkPlanar()


@pytest.fixture(scope="session")
def planar_chain(planar):
    return planar.chain()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS
