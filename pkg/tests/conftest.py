import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gedi.nn import init_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_model(input_dim=2, hidden=(5,), embed=3, head=(4,), clusters=3,
               temperature=1.0, activation="relu", seed=0, weight_scale=1.0):
    params = init_model(input_dim, hidden, embed, head, clusters,
                        temperature, activation, np.random.default_rng(seed))
    if weight_scale != 1.0:
        for p in params.parameters():
            p.data = p.data * weight_scale
    return params
