import numpy as np
import pytest

from retcut.propagator import SystemSpec, Propagator, random_hermitian_vmat


def make_spec(seed=7, n=3, vnorm=0.8, beta=1.3, mu=0.45, eta=0.05, levels=None):
    rng = np.random.default_rng(seed)
    if levels is None:
        levels = np.sort(rng.standard_normal(n)) * 1.2
    return SystemSpec(levels=levels, vmat=random_hermitian_vmat(rng, n, vnorm),
                      beta=beta, mu=mu, eta=eta)


@pytest.fixture
def spec():
    return make_spec()


@pytest.fixture
def prop(spec):
    return Propagator(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
