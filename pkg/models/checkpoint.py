"""
Checkpoint - Trained parameters, architecture, training history and label support

Parameters are stored as flat float lists written with round-trip precision,
so a save/load cycle reproduces every array bit for bit.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from models.dataset import LabelSupport
from models.pivae import ModelArch, PiVaeParams, init_pivae
from utils.errors import ConfigError, ShapeError

FORMAT_VERSION = 1


@dataclass
class TrainingHistory:
    """Per-epoch mean ELBO on the training and validation rows"""
    train_elbo: List[float] = field(default_factory=list)
    val_elbo: List[Optional[float]] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.train_elbo)

    def to_dict(self) -> dict:
        return {
            'train_elbo': list(self.train_elbo),
            'val_elbo': list(self.val_elbo),
            'best_epoch': self.best_epoch,
            'stopped_early': self.stopped_early,
        }

    @staticmethod
    def from_dict(data: dict) -> 'TrainingHistory':
        return TrainingHistory(
            train_elbo=[float(v) for v in data.get('train_elbo', [])],
            val_elbo=[None if v is None else float(v) for v in data.get('val_elbo', [])],
            best_epoch=int(data.get('best_epoch', 0)),
            stopped_early=bool(data.get('stopped_early', False)),
        )


@dataclass
class Checkpoint:
    """Everything needed to reload a trained model and reproduce its outputs"""
    params: PiVaeParams
    train_config: Dict[str, Any]
    history: TrainingHistory
    label_support: LabelSupport = field(default_factory=LabelSupport)
    splits: Dict[str, List[int]] = field(default_factory=dict)
    n_rows: int = 0
    format_version: int = FORMAT_VERSION

    @property
    def arch(self) -> ModelArch:
        return self.params.arch

    @property
    def seed(self) -> int:
        return self.params.seed


def checkpoint_to_dict(ckpt: Checkpoint) -> Dict[str, Any]:
    arrays = [
        {'name': name, 'shape': list(value.shape), 'data': value.reshape(-1).tolist()}
        for name, value in ckpt.params.state_dict().items()
    ]
    return {
        'format_version': ckpt.format_version,
        'arch': ckpt.arch.to_dict(),
        'train_config': ckpt.train_config,
        'seed': ckpt.seed,
        'permutations': [p.tolist() for p in ckpt.params.permutations()],
        'parameters': arrays,
        'history': ckpt.history.to_dict(),
        'label_support': ckpt.label_support.to_list(),
        'splits': {k: list(v) for k, v in ckpt.splits.items()},
        'n_rows': ckpt.n_rows,
    }


def checkpoint_from_dict(data: Dict[str, Any]) -> Checkpoint:
    """Rebuild a checkpoint; unknown format versions are rejected"""
    version = data.get('format_version')
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format_version {version!r} (expected {FORMAT_VERSION})")
    arch = ModelArch.from_dict(data['arch'])
    params = init_pivae(arch, int(data['seed']))
    params.set_permutations([np.asarray(p, dtype=np.int64) for p in data['permutations']])
    arrays = {}
    for entry in data['parameters']:
        shape = tuple(entry['shape'])
        flat = np.asarray(entry['data'], dtype=np.float64)
        if flat.size != int(np.prod(shape)):
            raise ShapeError(f"parameter {entry['name']!r}: {flat.size} values for shape {shape}")
        arrays[entry['name']] = flat.reshape(shape)
    params.load_state(arrays)
    return Checkpoint(
        params=params,
        train_config=dict(data.get('train_config', {})),
        history=TrainingHistory.from_dict(data.get('history', {})),
        label_support=LabelSupport.from_list(data.get('label_support', [])),
        splits={k: [int(i) for i in v] for k, v in data.get('splits', {}).items()},
        n_rows=int(data.get('n_rows', 0)),
        format_version=version,
    )
