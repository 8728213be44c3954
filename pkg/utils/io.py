"""
File I/O - Headered CSV matrices, datasets and checkpoint documents

CSV files carry a header row and '.' decimals. Numbers are written with 17
significant digits so every float64 survives a write/read cycle.
"""
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.checkpoint import Checkpoint, checkpoint_from_dict, checkpoint_to_dict
from models.dataset import Dataset, LabelSpec, TrialStructure
from utils.errors import ConfigError, DataError
from utils.helpers import load_json, save_json

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def read_matrix_csv(path: str, what: str) -> Tuple[List[str], np.ndarray]:
    """Header and float matrix of a CSV file; unparsable cells are reported by row and column"""
    if not os.path.exists(path):
        raise DataError(f"{what} file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{what} file {path}: {exc}") from None
    values = frame.apply(pd.to_numeric, errors='coerce')
    bad = values.isna().to_numpy()
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"{what} file {path}: row {int(r)} column {frame.columns[c]!r}: "
                        f"cannot parse {frame.iat[r, c]!r}")
    return [str(c) for c in frame.columns], values.to_numpy(dtype=np.float64)


def write_matrix_csv(path: str, header: Sequence[str], rows: np.ndarray, index_name: Optional[str] = None):
    """Write a matrix with a header row, optionally prefixed by a row-index column"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame = pd.DataFrame(np.asarray(rows, dtype=np.float64), columns=list(header))
    if index_name is not None:
        frame.insert(0, index_name, np.arange(frame.shape[0]))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info("wrote %s (%d rows)", path, frame.shape[0])


def load_dataset(counts_path: str, labels_path: Optional[str] = None, label_spec: Optional[LabelSpec] = None,
                 trials_path: Optional[str] = None, latents_path: Optional[str] = None) -> Dataset:
    """Read and validate counts plus optional labels, trial structure and true latents"""
    _, counts = read_matrix_csv(counts_path, 'counts')
    bad = np.argwhere((counts < 0) | (counts != np.round(counts)))
    if bad.size:
        r, c = bad[0]
        raise DataError(f"counts file {counts_path}: row {int(r)} column {int(c)}: "
                        f"{counts[r, c]!r} is not a nonnegative integer")

    labels = None
    spec = label_spec or LabelSpec()
    if labels_path is not None:
        header, labels = read_matrix_csv(labels_path, 'labels')
        if spec.columns:
            declared = [c.name for c in spec.columns]
            if header != declared:
                raise DataError(f"labels file {labels_path}: columns {header} differ from configured labels {declared}")
    trials = None
    if trials_path is not None:
        header, table = read_matrix_csv(trials_path, 'trials')
        if header != ['trial', 'time']:
            raise DataError(f"trials file {trials_path}: expected columns ['trial', 'time'], got {header}")
        trials = TrialStructure(table[:, 0], table[:, 1])
    latents = None
    if latents_path is not None:
        _, latents = read_matrix_csv(latents_path, 'latents')
        if latents.shape[1] > 1 and _looks_like_index(latents[:, 0]):
            latents = latents[:, 1:]
    return Dataset(counts=counts, labels=labels, label_spec=spec, trials=trials, true_latents=latents)


def _looks_like_index(column: np.ndarray) -> bool:
    return bool(np.array_equal(column, np.arange(column.size)))


def save_dataset(directory: str, dataset: Dataset, rates: Optional[np.ndarray] = None) -> Dict[str, str]:
    """Write counts.csv, labels.csv, latents.csv (and rates.csv) into a directory"""
    paths = {'counts': os.path.join(directory, 'counts.csv')}
    n = dataset.obs_dim
    write_matrix_csv(paths['counts'], [f"n{i + 1}" for i in range(n)], dataset.counts)
    if dataset.labels is not None:
        paths['labels'] = os.path.join(directory, 'labels.csv')
        names = [c.name for c in dataset.label_spec.columns] or [f"u{i + 1}" for i in range(dataset.labels.shape[1])]
        write_matrix_csv(paths['labels'], names, dataset.labels)
    if dataset.true_latents is not None:
        paths['latents'] = os.path.join(directory, 'latents.csv')
        write_latents(paths['latents'], dataset.true_latents)
    if rates is not None:
        paths['rates'] = os.path.join(directory, 'rates.csv')
        write_matrix_csv(paths['rates'], [f"n{i + 1}" for i in range(n)], rates)
    return paths


def write_latents(path: str, latents: np.ndarray):
    """CSV with columns row, z1..zm"""
    latents = np.atleast_2d(latents)
    write_matrix_csv(path, [f"z{i + 1}" for i in range(latents.shape[1])], latents, index_name='row')


def save_checkpoint(path: str, ckpt: Checkpoint, provenance: Optional[dict] = None):
    """Single JSON document; `provenance` (the effective config) is stored alongside"""
    document = checkpoint_to_dict(ckpt)
    if provenance is not None:
        document['config'] = provenance
    save_json(document, path)
    logger.info("saved checkpoint %s", path)


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise DataError(f"checkpoint not found: {path}")
    try:
        document = load_json(path)
    except ValueError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise DataError(f"checkpoint {path} must hold a JSON object")
    try:
        return checkpoint_from_dict(document)
    except KeyError as exc:
        raise DataError(f"checkpoint {path} lacks field {exc}") from None


def load_config_document(path: Optional[str]) -> dict:
    """User configuration JSON (empty when no path is given)"""
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        document = load_json(path)
    except ValueError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return document
