import numpy as np
import pytest

from clc.bench import correlated_set
from clc.dictionary import DictConfig, build_dictionary
from clc.synthetic import corpus


@pytest.fixture(scope="session")
def small_dict():
    """16 entries from 128px procedural patches."""
    imgs = corpus(11, 20, 128, 128)
    return build_dictionary(imgs, DictConfig(clusters=16, pca_dim=16, batch=64, iters=30, seed=0))


@pytest.fixture(scope="session")
def correlated():
    """(dictionary, inputs): every tile of the source images is an entry."""
    patches, inputs = correlated_set(3, 6, 256)
    d = build_dictionary(patches, DictConfig(clusters=len(patches), pca_dim=16, batch=64, iters=30, seed=0))
    return d, inputs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
