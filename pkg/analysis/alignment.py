"""
Latent alignment - Least-squares affine map from estimated to true latents

R^2 after the best affine map is the working test of recovery up to an
affine transformation.
"""
import logging
from dataclasses import dataclass

import numpy as np

from utils.errors import ArgumentError, NumericError, ShapeError

logger = logging.getLogger(__name__)

CONDITION_WARNING = 1e8


@dataclass
class AlignmentReport:
    """est @ A + c ≈ truth"""
    A: np.ndarray
    c: np.ndarray
    r2: np.ndarray
    mse: float
    condition_number: float
    rank_deficient: bool

    @property
    def mean_r2(self) -> float:
        return float(np.mean(self.r2))

    def transform(self, est: np.ndarray) -> np.ndarray:
        return np.asarray(est, dtype=np.float64) @ self.A + self.c

    def to_dict(self) -> dict:
        return {
            'A': self.A.tolist(),
            'c': self.c.tolist(),
            'r2': self.r2.tolist(),
            'mean_r2': self.mean_r2,
            'mse': self.mse,
            'condition_number': self.condition_number if np.isfinite(self.condition_number) else None,
            'rank_deficient': self.rank_deficient,
        }


def align_latents(est: np.ndarray, truth: np.ndarray) -> AlignmentReport:
    """Ordinary least squares per true dimension, R^2 measured on the truth"""
    est = np.atleast_2d(np.asarray(est, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if est.shape[0] != truth.shape[0]:
        raise ShapeError(f"estimate has {est.shape[0]} rows, truth has {truth.shape[0]}")
    n_rows, m = est.shape
    if n_rows <= m + 1:
        raise ArgumentError(f"alignment needs more than {m + 1} rows, got {n_rows}")
    if not (np.all(np.isfinite(est)) and np.all(np.isfinite(truth))):
        raise NumericError("alignment inputs must be finite")

    design = np.hstack([est, np.ones((n_rows, 1))])
    coef, _, rank, _ = np.linalg.lstsq(design, truth, rcond=None)
    fitted = design @ coef
    resid = truth - fitted
    ss_res = np.sum(resid ** 2, axis=0)
    ss_tot = np.sum((truth - truth.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide='ignore', invalid='ignore'):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, np.where(ss_res > 0, 0.0, 1.0))
    cond = float(np.linalg.cond(design))
    deficient = bool(rank < m + 1)
    if deficient or cond > CONDITION_WARNING:
        logger.warning("alignment design is ill-conditioned (rank %d of %d, condition %.3g)", rank, m + 1, cond)
    return AlignmentReport(A=coef[:m], c=coef[m], r2=r2, mse=float(np.mean(resid ** 2)),
                           condition_number=cond, rank_deficient=deficient)
