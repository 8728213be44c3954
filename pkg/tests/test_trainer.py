"""
Tests for data splitting and the training loop
"""
import json

import numpy as np
import pytest

from engine.trainer import Trainer, split_indices, train
from models.checkpoint import checkpoint_to_dict
from models.dataset import Dataset, TrialStructure
from utils.config import TrainMode, architecture_config, train_config
from utils.errors import ConfigError, DataError


def _small_arch():
    return architecture_config(encoder_hidden=8, prior_hidden=6)


def test_split_covers_every_row_once():
    splits = split_indices(50, 0.2, 0.1, seed=3)
    rows = np.concatenate([splits['train'], splits['val'], splits['test']])
    np.testing.assert_array_equal(np.sort(rows), np.arange(50))
    assert (splits['val'].size, splits['test'].size) == (10, 5)
    for part in splits.values():
        np.testing.assert_array_equal(part, np.sort(part))


def test_split_is_seeded():
    a, b = split_indices(40, 0.25, 0.25, seed=9), split_indices(40, 0.25, 0.25, seed=9)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_split_keeps_trials_together():
    trials = TrialStructure(np.repeat(np.arange(10), 4), np.tile(np.arange(4), 10))
    splits = split_indices(40, 0.2, 0.2, seed=1, trials=trials)
    for part in splits.values():
        ids = trials.trial_id[part]
        for t in np.unique(ids):
            assert np.sum(ids == t) == 4


def test_split_needs_training_rows():
    with pytest.raises(DataError):
        split_indices(0, 0.1, 0.1, seed=0)
    with pytest.raises(DataError):
        split_indices(2, 0.5, 0.4, seed=0)


def test_training_improves_the_elbo(tiny_dataset):
    cfg = train_config(epochs=5, batch_size=8, learning_rate=1e-2, seed=0, latent_dim=2)
    ckpt = train(tiny_dataset, cfg, _small_arch())
    history = ckpt.history
    assert history.epochs_run == 5
    assert history.train_elbo[-1] > history.train_elbo[0]
    assert 1 <= history.best_epoch <= 5
    assert len(history.val_elbo) == 5 and all(v is not None for v in history.val_elbo)


def test_training_is_deterministic(tiny_dataset):
    cfg = train_config(epochs=2, batch_size=16, seed=4, latent_dim=2)
    first = json.dumps(checkpoint_to_dict(train(tiny_dataset, cfg, _small_arch())))
    second = json.dumps(checkpoint_to_dict(train(tiny_dataset, cfg, _small_arch())))
    assert first == second


def test_checkpoint_records_splits_and_support(tiny_dataset):
    cfg = train_config(epochs=1, batch_size=32, seed=2, latent_dim=2)
    ckpt = train(tiny_dataset, cfg, _small_arch())
    assert ckpt.n_rows == tiny_dataset.n_rows
    assert sorted(sum(ckpt.splits.values(), [])) == list(range(tiny_dataset.n_rows))
    assert ckpt.label_support.columns[0].name == 'cluster'
    assert ckpt.train_config['epochs'] == 1


def test_vanilla_mode_trains_without_labels(tiny_dataset):
    cfg = train_config(epochs=1, batch_size=32, mode='vae', latent_dim=2)
    ckpt = train(tiny_dataset.without_labels(), cfg, _small_arch())
    assert ckpt.arch.mode == TrainMode.VANILLA
    assert ckpt.params.prior is None


def test_pi_vae_mode_needs_labels(tiny_dataset):
    cfg = train_config(epochs=1, latent_dim=2)
    with pytest.raises(ConfigError):
        Trainer(cfg, _small_arch()).train(tiny_dataset.without_labels())


def test_latent_dimension_preconditions(tiny_dataset):
    with pytest.raises(ConfigError):
        train(tiny_dataset, train_config(epochs=1, latent_dim=6), _small_arch())
    with pytest.raises(ConfigError):
        train_config(latent_dim=0)


def test_empty_dataset_is_a_data_error():
    with pytest.raises(DataError):
        Dataset(counts=np.zeros((0, 6)))


def test_patience_stops_early(tiny_dataset):
    cfg = train_config(epochs=40, batch_size=32, learning_rate=1e-5, seed=1, latent_dim=2, patience=1)
    history = train(tiny_dataset, cfg, _small_arch()).history
    if history.stopped_early:
        assert history.epochs_run < 40
    else:
        assert history.epochs_run == 40
    assert history.best_epoch <= history.epochs_run
