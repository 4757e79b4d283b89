import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import random_connected_laplacian  # noqa: E402

from ghostrocof.grid_model import ReducedNetwork  # noqa: E402


def make_network(L, M, D, p_nom=None) -> ReducedNetwork:
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    p_nom = np.full(n, 100.0) if p_nom is None else p_nom
    return ReducedNetwork(L=L, M=np.broadcast_to(M, (n,)), D=np.broadcast_to(D, (n,)),
                          p_nom=p_nom, labels=tuple(f"G{i + 1}" for i in range(n)))


def random_network(rng, n: int, proportional: bool = False) -> ReducedNetwork:
    L = random_connected_laplacian(rng, n)
    M = rng.uniform(0.5, 5.0, n)
    D = 0.3 * M if proportional else rng.uniform(0.2, 2.0, n)
    return make_network(L, M, D, rng.uniform(50, 800, n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ieee39():
    from ghostrocof.grid_model import load_ieee39
    return load_ieee39()
