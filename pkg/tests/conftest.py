"""
Shared fixtures: tiny models and datasets that build in milliseconds
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.dataset import Dataset, LabelColumn, LabelKind, LabelSpec  # noqa: E402
from models.pivae import ModelArch, init_pivae  # noqa: E402
from utils.config import TrainMode  # noqa: E402
from utils.rng import make_rng  # noqa: E402


@pytest.fixture
def discrete_spec():
    return LabelSpec((LabelColumn('cluster', LabelKind.DISCRETE, 3),))


@pytest.fixture
def continuous_spec():
    return LabelSpec((LabelColumn('u', LabelKind.CONTINUOUS),))


@pytest.fixture
def tiny_discrete_params(discrete_spec):
    arch = ModelArch(obs_dim=6, latent_dim=2, label_spec=discrete_spec, encoder_hidden=5, prior_hidden=4)
    return init_pivae(arch, seed=3)


@pytest.fixture
def tiny_continuous_params(continuous_spec):
    arch = ModelArch(obs_dim=6, latent_dim=2, label_spec=continuous_spec, encoder_hidden=5, prior_hidden=4)
    return init_pivae(arch, seed=4)


@pytest.fixture
def tiny_vanilla_params():
    arch = ModelArch(obs_dim=6, latent_dim=2, mode=TrainMode.VANILLA, encoder_hidden=5)
    return init_pivae(arch, seed=5)


@pytest.fixture
def tiny_dataset(discrete_spec):
    rng = make_rng(11, 'fixture')
    labels = rng.integers(0, 3, size=64).astype(np.float64)[:, None]
    base = np.array([[4.0, 1.0, 0.5, 2.0, 1.0, 0.2],
                     [0.5, 3.0, 1.0, 0.2, 2.0, 1.0],
                     [1.0, 0.5, 4.0, 1.0, 0.2, 3.0]])
    counts = rng.poisson(base[labels[:, 0].astype(int)]).astype(np.float64)
    return Dataset(counts=counts, labels=labels, label_spec=discrete_spec)
