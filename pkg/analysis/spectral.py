"""
Residual spectra - Welch power spectral density of latent-minus-prior residuals

The residual mean goes into the DC bin exactly; the zero-mean remainder is
estimated with Welch's method (Hann window, 50% overlap, no detrending).
Integrating the density over frequency returns the residual mean square.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.signal import welch

from utils.errors import ArgumentError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_SEGMENT = 256


@dataclass
class PsdReport:
    """One-sided densities (F x m) and the strongest non-DC frequency per dimension"""
    freqs: np.ndarray
    psd: np.ndarray
    segment: int
    trials: int = 1
    skipped_trials: int = 0

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    @property
    def peak_frequency(self) -> np.ndarray:
        return self.freqs[1:][np.argmax(self.psd[1:], axis=0)]

    def total_power(self) -> np.ndarray:
        return self.psd.sum(axis=0) * self.resolution

    def to_dict(self) -> dict:
        return {
            'segment': self.segment,
            'trials': self.trials,
            'skipped_trials': self.skipped_trials,
            'freqs': self.freqs.tolist(),
            'psd': self.psd.tolist(),
            'peak_frequency': self.peak_frequency.tolist(),
        }


def segment_length(n_samples: int, preferred: int = DEFAULT_SEGMENT) -> int:
    """The preferred segment length, or a quarter of the series if that is shorter"""
    return min(preferred, n_samples // 4)


def _residual(latent_means: np.ndarray, prior_means: np.ndarray, sampling_rate: float) -> np.ndarray:
    latent_means = np.asarray(latent_means, dtype=np.float64)
    prior_means = np.asarray(prior_means, dtype=np.float64)
    if latent_means.shape != prior_means.shape:
        raise ShapeError(f"latent means {latent_means.shape} and prior means {prior_means.shape} differ")
    if latent_means.ndim == 1:
        latent_means, prior_means = latent_means[:, None], prior_means[:, None]
    if sampling_rate <= 0:
        raise ArgumentError(f"sampling rate must be positive, got {sampling_rate}")
    return latent_means - prior_means


def _density(residual: np.ndarray, sampling_rate: float, nperseg: int) -> Tuple[np.ndarray, np.ndarray]:
    offset = residual.mean(axis=0)
    freqs, psd = welch(residual - offset, fs=sampling_rate, window='hann', nperseg=nperseg,
                       noverlap=nperseg // 2, detrend=False, scaling='density', axis=0)
    psd[0] += offset ** 2 / (freqs[1] - freqs[0])
    return freqs, psd


def residual_psd(latent_means: np.ndarray, prior_means: np.ndarray, sampling_rate: float,
                 segment: int = DEFAULT_SEGMENT) -> PsdReport:
    """Per-dimension PSD of latent means minus prior means over a uniformly sampled series"""
    residual = _residual(latent_means, prior_means, sampling_rate)
    n_samples = residual.shape[0]
    nperseg = segment_length(n_samples, segment)
    if nperseg < 2 or n_samples < 2 * nperseg:
        raise ArgumentError(f"{n_samples} samples are too few for Welch segments of {nperseg}")
    freqs, psd = _density(residual, sampling_rate, nperseg)
    return PsdReport(freqs=freqs, psd=psd, segment=nperseg)


def trial_residual_psd(latent_means: np.ndarray, prior_means: np.ndarray, trial_rows: Sequence[np.ndarray],
                       sampling_rate: float, segment: int = DEFAULT_SEGMENT) -> PsdReport:
    """Length-weighted mean of per-trial PSDs; no Welch segment spans two trials

    The segment length follows the median trial. Trials shorter than two
    segments are left out and counted in `skipped_trials`.
    """
    residual = _residual(latent_means, prior_means, sampling_rate)
    trial_rows = [np.asarray(rows, dtype=np.int64) for rows in trial_rows]
    if not trial_rows:
        raise ArgumentError("no trials to estimate a spectrum from")
    nperseg = segment_length(int(np.median([rows.size for rows in trial_rows])), segment)
    usable = [rows for rows in trial_rows if rows.size >= 2 * nperseg]
    if nperseg < 2 or not usable:
        raise ArgumentError(f"trials are too short for Welch segments of {nperseg}")
    total, weight, freqs = 0.0, 0, None
    for rows in usable:
        freqs, psd = _density(residual[rows], sampling_rate, nperseg)
        total = total + rows.size * psd
        weight += rows.size
    skipped = len(trial_rows) - len(usable)
    if skipped:
        logger.info("residual spectrum: %d of %d trials shorter than %d bins left out",
                    skipped, len(trial_rows), 2 * nperseg)
    return PsdReport(freqs=freqs, psd=total / weight, segment=nperseg, trials=len(usable), skipped_trials=skipped)
