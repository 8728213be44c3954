"""
PSTH - Trial-averaged empirical and predicted firing per label condition
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.dataset import TrialStructure
from utils.errors import DataError, ShapeError


@dataclass
class PsthReport:
    """PSTH tables per condition (T x n each) and per-neuron RMSE"""
    conditions: List[Tuple[float, ...]]
    empirical: Dict[Tuple[float, ...], np.ndarray]
    predicted: Dict[Tuple[float, ...], np.ndarray]
    rmse: np.ndarray

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.rmse))

    def to_dict(self) -> dict:
        return {
            'rmse': self.rmse.tolist(),
            'mean_rmse': self.mean_rmse,
            'conditions': [
                {'label': list(c), 'empirical': self.empirical[c].tolist(), 'predicted': self.predicted[c].tolist()}
                for c in self.conditions
            ],
        }


def psth_and_rmse(pred_rates: np.ndarray, counts: np.ndarray, trials: TrialStructure,
                  labels: Optional[np.ndarray] = None) -> PsthReport:
    """Average counts and predicted rates per (condition, time bin); RMSE per neuron"""
    pred_rates = np.asarray(pred_rates, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    if pred_rates.shape != counts.shape:
        raise ShapeError(f"predicted rates {pred_rates.shape} and counts {counts.shape} differ")
    if trials.trial_id.shape[0] != counts.shape[0]:
        raise ShapeError("trial structure and counts differ in row count")

    if labels is None:
        per_trial = {int(t): () for t in trials.trials}
    else:
        per_trial = trials.trial_labels(labels)
    groups: Dict[Tuple[float, ...], List[int]] = {}
    for trial in sorted(per_trial):
        groups.setdefault(per_trial[trial], []).append(trial)

    empirical, predicted, sq = {}, {}, []
    conditions = sorted(groups)
    for cond in conditions:
        rows = [trials.rows_of(t) for t in groups[cond]]
        lengths = {r.size for r in rows}
        if len(lengths) != 1:
            raise DataError(f"condition {cond}: trials have unequal lengths {sorted(lengths)}")
        empirical[cond] = np.mean([counts[r] for r in rows], axis=0)
        predicted[cond] = np.mean([pred_rates[r] for r in rows], axis=0)
        sq.append((empirical[cond] - predicted[cond]) ** 2)
    rmse = np.sqrt(np.mean(np.concatenate(sq, axis=0), axis=0))
    return PsthReport(conditions=conditions, empirical=empirical, predicted=predicted, rmse=rmse)
