import os

import numpy as np
import pytest
from hypothesis import settings

# reproducible property runs by default; HYPOTHESIS_PROFILE=explore draws fresh examples
settings.register_profile("repro", derandomize=True, deadline=None)
settings.register_profile("explore", deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repro"))

from mapwh import examples as ex
from mapwh.friendship import bond


def rand_terms(rng, k, max_power=0, wlo=0.2, whi=2.0, blo=0.5, bhi=3.0):
    return [(float(rng.uniform(wlo, whi)), int(rng.integers(0, max_power + 1)), float(rng.uniform(blo, bhi)))
            for _ in range(k)]


@pytest.fixture(scope="session")
def de_params():
    return ex.sample_double_exp(np.random.default_rng(0))


@pytest.fixture(scope="session")
def de_pair(de_params):
    return ex.gen_double_exp(de_params)


@pytest.fixture(scope="session")
def de_bond(de_params, de_pair):
    return bond(*de_pair, de_params.pi)


@pytest.fixture(scope="session")
def sp_params():
    return ex.sample_spectrally_positive(np.random.default_rng(1))


@pytest.fixture(scope="session")
def sp_pair(sp_params):
    return ex.gen_spectrally_positive(sp_params)


@pytest.fixture(scope="session")
def sp_bond(sp_params, sp_pair):
    return bond(*sp_pair, sp_params.pi)
