"""
Trainer - Runs the Adam training loop over shuffled minibatches

Loss is the negative mean ELBO. The parameters with the best validation ELBO
are kept; when no validation rows exist the training ELBO stands in.
"""
import logging
from typing import Dict, Optional

import numpy as np

from engine.ndmath import adam_step, backward, init_adam, training
from models.checkpoint import Checkpoint, TrainingHistory
from models.dataset import Dataset, LabelSpec, LabelSupport, TrialStructure
from models.pivae import ModelArch, PiVaeParams, elbo, init_pivae
from utils.config import AdamConfig, ArchitectureConfig, TrainConfig, TrainMode, adam_config, architecture_config
from utils.errors import ConfigError, DataError
from utils.rng import make_rng

logger = logging.getLogger(__name__)

VAL_EPS_KEY = 'val-eps'


def split_indices(n_rows: int, val_fraction: float, test_fraction: float, seed: int,
                  trials: Optional[TrialStructure] = None) -> Dict[str, np.ndarray]:
    """Shuffled train/val/test row indices; whole trials stay together when given"""
    if n_rows < 1:
        raise DataError("cannot split an empty dataset")
    rng = make_rng(seed, 'split')
    if trials is None:
        units = [np.array([i]) for i in rng.permutation(n_rows)]
    else:
        units = [trials.rows_of(int(t)) for t in rng.permutation(trials.trials)]
    n_units = len(units)
    n_test = int(round(test_fraction * n_units))
    n_val = int(round(val_fraction * n_units))
    if n_units - n_test - n_val < 1:
        raise DataError(f"{n_units} rows/trials leave nothing to train on")
    pick = lambda group: np.sort(np.concatenate(group)) if group else np.array([], dtype=np.int64)
    return {
        'test': pick(units[:n_test]),
        'val': pick(units[n_test:n_test + n_val]),
        'train': pick(units[n_test + n_val:]),
    }


def build_arch(dataset: Dataset, config: TrainConfig, arch: Optional[ArchitectureConfig] = None) -> ModelArch:
    arch = arch or architecture_config()
    return ModelArch(
        obs_dim=dataset.obs_dim,
        latent_dim=config.latent_dim,
        label_spec=dataset.label_spec if config.mode == TrainMode.PI_VAE else LabelSpec(),
        mode=config.mode,
        encoder_hidden=arch.encoder_hidden,
        prior_hidden=arch.prior_hidden,
        coupling_depth=arch.coupling_depth,
        gin_blocks=arch.gin_blocks,
        rate_floor=arch.rate_floor,
    )


class Trainer:
    """Fits a PiVaeParams to a dataset"""

    def __init__(self, config: TrainConfig, arch: Optional[ArchitectureConfig] = None,
                 adam: Optional[AdamConfig] = None):
        self.config = config
        self.arch = arch or architecture_config()
        self.adam = adam or adam_config()

    def _check(self, dataset: Dataset):
        if dataset.n_rows < 1:
            raise DataError("training needs at least one row")
        if self.config.latent_dim >= dataset.obs_dim:
            raise ConfigError(f"latent dimension {self.config.latent_dim} must be smaller than "
                              f"observed dimension {dataset.obs_dim}")
        if self.config.mode == TrainMode.PI_VAE:
            if dataset.labels is None or not dataset.label_spec.columns:
                raise ConfigError("pi-VAE mode needs labels and a label specification")

    def _labels(self, dataset: Dataset, rows: np.ndarray) -> Optional[np.ndarray]:
        if self.config.mode == TrainMode.VANILLA:
            return None
        return dataset.labels[rows]

    def _elbo_value(self, params: PiVaeParams, dataset: Dataset, rows: np.ndarray, eps: np.ndarray) -> float:
        return elbo(dataset.counts[rows], self._labels(dataset, rows), params, eps).item()

    def train(self, dataset: Dataset) -> Checkpoint:
        """Run the configured number of epochs and return the best checkpoint"""
        self._check(dataset)
        cfg = self.config
        splits = split_indices(dataset.n_rows, cfg.val_fraction, cfg.test_fraction, cfg.seed, dataset.trials)
        train_rows, val_rows = splits['train'], splits['val']

        params = init_pivae(build_arch(dataset, cfg, self.arch), cfg.seed)
        named = params.named_parameters()
        state = init_adam(params.state_dict(), lr=cfg.learning_rate, beta1=self.adam.beta1,
                          beta2=self.adam.beta2, eps=self.adam.eps)
        m = cfg.latent_dim
        val_eps = make_rng(cfg.seed, VAL_EPS_KEY).standard_normal((val_rows.size, m))

        history = TrainingHistory()
        best_score, best_state, stale = -np.inf, params.state_dict(), 0
        logger.info("training %s: %d train / %d val rows, n=%d, m=%d, %d epochs",
                    cfg.mode.value, train_rows.size, val_rows.size, dataset.obs_dim, m, cfg.epochs)

        for epoch in range(1, cfg.epochs + 1):
            order = make_rng(cfg.seed, 'shuffle', epoch).permutation(train_rows)
            total = 0.0
            for b, start in enumerate(range(0, order.size, cfg.batch_size)):
                rows = order[start:start + cfg.batch_size]
                eps = make_rng(cfg.seed, 'eps', epoch, b).standard_normal((rows.size, m))
                with training():
                    value = elbo(dataset.counts[rows], self._labels(dataset, rows), params, eps)
                    grads = backward(-value, named)
                new_values, state = adam_step(params.state_dict(), grads, state)
                params.load_state(new_values)
                total += value.item() * rows.size
            train_elbo = total / order.size
            history.train_elbo.append(train_elbo)

            val_elbo = self._elbo_value(params, dataset, val_rows, val_eps) if val_rows.size else None
            history.val_elbo.append(val_elbo)
            score = val_elbo if val_elbo is not None else train_elbo
            logger.info("epoch %d/%d: train ELBO %.4f, val ELBO %s", epoch, cfg.epochs, train_elbo,
                        'n/a' if val_elbo is None else f"{val_elbo:.4f}")

            if score > best_score:
                best_score, best_state, stale = score, params.state_dict(), 0
                history.best_epoch = epoch
            else:
                stale += 1
                if cfg.patience is not None and stale >= cfg.patience:
                    history.stopped_early = True
                    logger.info("early stop at epoch %d (best epoch %d)", epoch, history.best_epoch)
                    break

        params.load_state(best_state)
        support = LabelSupport()
        if dataset.labels is not None and dataset.label_spec.columns:
            support = LabelSupport.from_labels(dataset.label_spec, dataset.labels[train_rows])
        return Checkpoint(
            params=params,
            train_config=cfg.model_dump(mode='json'),
            history=history,
            label_support=support,
            splits={k: v.tolist() for k, v in splits.items()},
            n_rows=dataset.n_rows,
        )


def train(dataset: Dataset, config: TrainConfig, arch: Optional[ArchitectureConfig] = None,
          adam: Optional[AdamConfig] = None) -> Checkpoint:
    """Train a pi-VAE (or the vanilla VAE ablation) and return the checkpoint"""
    return Trainer(config, arch, adam).train(dataset)
