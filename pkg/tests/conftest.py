import math

import numpy as np
import pytest

from beliefopt.model import Model, random_tree, sample_instance

E = math.e
Q_TWO = (1 + E) / (3 + E)
XI_TWO = E / (3 + E)


def random_model(rng, n, p_edge=0.5, w_scale=1.0, b_scale=1.0):
    """Erdos-Renyi style model with Gaussian weights and biases."""
    edges = [(i, j, float(w_scale * rng.standard_normal()))
             for i in range(n) for j in range(i + 1, n) if rng.random() < p_edge]
    return Model(n, edges, b_scale * rng.standard_normal(n))


def random_tree_model(rng, n, w_scale=1.5, b_scale=1.0):
    return sample_instance(random_tree(n, rng), w_scale, b_scale, int(rng.integers(2**31)))


@pytest.fixture
def two_node():
    return Model(2, [(0, 1, 1.0)], [0.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
