import numpy as np
import pytest

from dualporo import constitutive as law


@pytest.fixture(scope="session")
def rock_f():
    return law.RockParams("fracture", phi=0.2, k=1.0, a=1.0)


@pytest.fixture(scope="session")
def rock_m():
    return law.RockParams("matrix", phi=0.4, k=0.05, a=2.0)


@pytest.fixture(scope="session")
def system(rock_f, rock_m):
    return law.TwoRockSystem(fracture=rock_f, matrix=rock_m)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260826)
