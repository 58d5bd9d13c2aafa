import numpy as np
import pytest

from qtmlab.machines import CORPUS_MACHINES, load_corpus_machine


@pytest.fixture(scope="session")
def corpus():
    return {name: load_corpus_machine(name) for name in CORPUS_MACHINES}


@pytest.fixture()
def rng():
    return np.random.default_rng(20260814)


def random_density(rng, dim: int, rank=None):
    """Random density matrix, uniform-ish spectrum over the given rank."""
    r = dim if rank is None else rank
    x = rng.standard_normal((dim, r)) + 1j * rng.standard_normal((dim, r))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real
