"""
Tuning-curve baseline - Label-to-rate lookup used as a reference decoder and encoder

Discrete labels get one mean count vector per class combination; a single
continuous label gets binned mean rates (a place field).
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from models.dataset import Dataset, LabelKind, LabelSpec
from utils.errors import ArgumentError, DataError, UnsupportedError

logger = logging.getLogger(__name__)

RATE_FLOOR = 1e-7


@dataclass
class TuningBaseline:
    """Rate table (one row per class combination or label bin)"""
    kind: LabelKind
    rates: np.ndarray
    spec: LabelSpec
    edges: Optional[np.ndarray] = None  # continuous only

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def row_index(self, labels: np.ndarray) -> np.ndarray:
        """Table row for each label row"""
        labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
        if self.kind == LabelKind.DISCRETE:
            disc, _ = self.spec.split(labels)
            return self.spec.combination_index(disc)
        return np.clip(np.digitize(labels[:, 0], self.edges[1:-1]), 0, self.rates.shape[0] - 1)

    def to_dict(self) -> dict:
        out = {'kind': self.kind.value, 'rates': self.rates.tolist()}
        if self.edges is not None:
            out['edges'] = self.edges.tolist()
        return out


def fit_tuning_baseline(dataset: Dataset, bins: int = 20) -> TuningBaseline:
    """Mean counts per class or per label bin; empty groups fall back to the global mean"""
    spec = dataset.label_spec
    if dataset.labels is None or not spec.columns:
        raise DataError("the tuning baseline needs labels")
    if bins < 1:
        raise ArgumentError(f"bins must be >= 1, got {bins}")
    global_mean = dataset.counts.mean(axis=0)

    if spec.is_discrete_only:
        kind, edges, n_groups = LabelKind.DISCRETE, None, spec.n_combinations
    elif spec.width == 1:
        u = dataset.labels[:, 0]
        lo, hi = float(u.min()), float(u.max())
        if hi <= lo:
            hi = lo + 1.0
        kind, edges, n_groups = LabelKind.CONTINUOUS, np.linspace(lo, hi, bins + 1), bins
    else:
        raise UnsupportedError("the tuning baseline handles discrete labels or one continuous label")

    baseline = TuningBaseline(kind, np.empty((n_groups, dataset.obs_dim)), spec, edges)
    groups = baseline.row_index(dataset.labels)
    empty = 0
    for g in range(n_groups):
        members = groups == g
        if members.any():
            baseline.rates[g] = dataset.counts[members].mean(axis=0)
        else:
            baseline.rates[g] = global_mean
            empty += 1
    if empty:
        logger.info("tuning baseline: %d of %d groups empty, using the global mean rate", empty, n_groups)
    baseline.rates = np.maximum(baseline.rates, RATE_FLOOR)
    return baseline


def _table_log_lik(baseline: TuningBaseline, x: np.ndarray) -> np.ndarray:
    """N x G Poisson log-likelihood of each row under each table row"""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != baseline.rates.shape[1]:
        raise DataError(f"counts have {x.shape[1]} columns, baseline has {baseline.rates.shape[1]}")
    rates = baseline.rates
    return x @ np.log(rates).T - rates.sum(axis=1)[None, :] - gammaln(x + 1.0).sum(axis=1)[:, None]


def baseline_decode(baseline: TuningBaseline, x: np.ndarray) -> np.ndarray:
    """Class combination index (discrete) or bin centre (continuous) with the highest likelihood"""
    best = np.argmax(_table_log_lik(baseline, x), axis=1)
    if baseline.kind == LabelKind.DISCRETE:
        return best
    return baseline.centers[best]


def baseline_log_lik(baseline: TuningBaseline, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row log-likelihood of the counts under the rate of each row's own label"""
    table = _table_log_lik(baseline, x)
    return table[np.arange(table.shape[0]), baseline.row_index(labels)]


def decoding_accuracy(estimate: np.ndarray, truth: np.ndarray) -> float:
    estimate, truth = np.asarray(estimate).reshape(-1), np.asarray(truth).reshape(-1)
    if estimate.shape != truth.shape or estimate.size == 0:
        raise ArgumentError("estimates and truth must be non-empty and equally long")
    return float(np.mean(estimate == truth))


def median_abs_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    estimate = np.asarray(estimate, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if estimate.shape != truth.shape or estimate.size == 0:
        raise ArgumentError("estimates and truth must be non-empty and equally long")
    return float(np.median(np.abs(estimate - truth)))
