import numpy as np
import pytest

from tinstitch import Tensor
from tinstitch.nets import toy_graph, toy_weights


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def rand_tensor(seed, n=1, c=3, h=16, w=16, lo=-1.0, hi=1.0) -> Tensor:
    g = rng(seed)
    return Tensor(g.uniform(lo, hi, size=(n, c, h, w)).astype(np.float32))


@pytest.fixture(scope="session")
def toy():
    return toy_graph(), toy_weights()
