import numpy as np
import pytest

from models.config import IntervalPrior, PriorModeEnum, PriorSpec, ScaleEnum, SmcConfig
from models.mjp import Theta
from tests.toy_models import capped_predation, double_decay
from utils.builtin_models import builtin_lotka_volterra, builtin_repressilator


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def lv():
    return builtin_lotka_volterra()


@pytest.fixture
def repressilator():
    return builtin_repressilator()


@pytest.fixture
def toy():
    return capped_predation()


@pytest.fixture
def toy_theta() -> Theta:
    return Theta(beta=(1.5, 0.8, 1.0), phi=1.0, reference=2)


@pytest.fixture
def decay():
    return double_decay()


@pytest.fixture
def toy_prior() -> PriorSpec:
    return PriorSpec(
        mode=PriorModeEnum.INDEPENDENT,
        beta=(IntervalPrior(lo=0.2, hi=3.0), IntervalPrior(lo=0.2, hi=3.0)),
        phi=IntervalPrior(lo=0.0, hi=2.0),
    )


@pytest.fixture
def toy_config() -> SmcConfig:
    return SmcConfig(M=50, h=0.2, seed=7, scales=(ScaleEnum.IDENTITY, ScaleEnum.IDENTITY), max_attempts=200_000)
