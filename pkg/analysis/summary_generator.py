"""
Summary Generator - Builds the evaluation metrics document for a trained model
"""
import logging
from typing import Any, Dict, List, Optional

import numpy as np

from analysis.alignment import align_latents
from analysis.geometry import branch_distance_matrix
from analysis.psth import psth_and_rmse
from analysis.spectral import trial_residual_psd
from analysis.tuning import (TuningBaseline, baseline_decode, baseline_log_lik, decoding_accuracy,
                             fit_tuning_baseline, median_abs_error)
from engine.inference import (decode_continuous, decode_discrete, decode_grid, infer_latents,
                              marginal_log_lik_with_error, prior_means)
from models.checkpoint import Checkpoint
from models.dataset import Dataset
from models.flows import decoder_forward
from models.pivae import elbo
from utils.config import EvalConfig, InferConfig, TrainMode
from utils.errors import ArgumentError, DataError, UnsupportedError
from utils.rng import make_rng

logger = logging.getLogger(__name__)


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


class SummaryGenerator:
    """Evaluates a checkpoint on a dataset and collects every metric into one document"""

    def __init__(self, eval_config: EvalConfig, infer_config: InferConfig):
        self.eval_config = eval_config
        self.infer_config = infer_config

    def generate_summary(self, ckpt: Checkpoint, dataset: Dataset) -> Dict[str, Any]:
        """Metrics document (JSON-ready)"""
        if dataset.obs_dim != ckpt.arch.obs_dim:
            raise DataError(f"dataset has {dataset.obs_dim} neurons, model expects {ckpt.arch.obs_dim}")
        splits = self._splits(ckpt, dataset)
        eval_rows = self._eval_rows(splits, dataset)
        latents = self._latents(ckpt, dataset)
        baseline = self._baseline(dataset, splits)

        summary: Dict[str, Any] = {
            'model': {'mode': ckpt.arch.mode.value, 'obs_dim': ckpt.arch.obs_dim,
                      'latent_dim': ckpt.arch.latent_dim, 'seed': ckpt.seed,
                      'epochs_run': ckpt.history.epochs_run, 'best_epoch': ckpt.history.best_epoch},
            'n_rows': dataset.n_rows,
            'eval_rows': int(eval_rows.size),
            'elbo': self._elbo_by_split(ckpt, dataset, splits),
            'likelihood': self._likelihoods(ckpt, dataset, baseline, eval_rows),
            'decoding': self._decoding(ckpt, dataset, baseline, eval_rows),
            'alignment': self._alignment(dataset, latents),
            'psth': self._psth(ckpt, dataset, latents),
            'spectra': self._spectra(ckpt, dataset, latents),
            'geometry': self._geometry(dataset, latents),
        }
        summary['highlights'] = self._identify_highlights(summary)
        return summary

    # ------------------------------------------------------------------

    def _splits(self, ckpt: Checkpoint, dataset: Dataset) -> Dict[str, np.ndarray]:
        """Training splits apply only when this is the dataset the model was trained on"""
        if ckpt.splits and ckpt.n_rows == dataset.n_rows:
            return {k: np.asarray(v, dtype=np.int64) for k, v in ckpt.splits.items()}
        return {'all': np.arange(dataset.n_rows)}

    def _eval_rows(self, splits: Dict[str, np.ndarray], dataset: Dataset) -> np.ndarray:
        """Held-out test rows when available, otherwise every row"""
        test = splits.get('test')
        return test if test is not None and test.size else np.arange(dataset.n_rows)

    def _baseline(self, dataset: Dataset, splits: Dict[str, np.ndarray]) -> Optional[TuningBaseline]:
        """Tuning curves fitted on the training rows"""
        if dataset.labels is None or not dataset.label_spec.columns:
            return None
        rows = splits.get('train')
        if rows is None or not rows.size:
            rows = np.arange(dataset.n_rows)
        try:
            return fit_tuning_baseline(dataset.subset(rows), bins=self.eval_config.tuning_bins)
        except UnsupportedError as exc:
            logger.info("tuning baseline skipped: %s", exc)
            return None

    def _labels(self, ckpt: Checkpoint, dataset: Dataset, rows: np.ndarray) -> Optional[np.ndarray]:
        if ckpt.arch.mode == TrainMode.VANILLA:
            return None
        if dataset.labels is None:
            raise DataError("a pi-VAE model needs labels for evaluation")
        return dataset.labels[rows]

    def _latents(self, ckpt: Checkpoint, dataset: Dataset) -> Dict[str, np.ndarray]:
        out = {'encoder': infer_latents(ckpt.params, dataset.counts, use_label_prior=False)}
        if ckpt.params.prior is not None and dataset.labels is not None:
            out['posterior'] = infer_latents(ckpt.params, dataset.counts, dataset.labels, use_label_prior=True)
            out['prior'] = prior_means(ckpt.params, dataset.labels)
        return out

    def _elbo_by_split(self, ckpt: Checkpoint, dataset: Dataset, splits: Dict[str, np.ndarray]) -> Dict[str, Any]:
        result = {}
        for name, rows in splits.items():
            if rows.size == 0:
                result[name] = None
                continue
            eps = make_rng(self.infer_config.seed, 'eval-eps', name).standard_normal((rows.size, ckpt.arch.latent_dim))
            result[name] = elbo(dataset.counts[rows], self._labels(ckpt, dataset, rows), ckpt.params, eps).item()
        return result

    def _likelihoods(self, ckpt: Checkpoint, dataset: Dataset, baseline: Optional[TuningBaseline],
                     rows: np.ndarray) -> Dict[str, Any]:
        samples, seed = self.eval_config.samples, self.infer_config.seed
        counts = dataset.counts[rows]
        result: Dict[str, Any] = {'samples': samples, 'unit': 'per datapoint (time bin, summed over neurons)'}
        try:
            marginal = marginal_log_lik_with_error(ckpt.params, counts, None, samples, seed, ckpt.label_support)
            result['marginal_log_lik'] = marginal.mean
            result['marginal_std_error'] = _finite_or_none(marginal.mean_std_error)
        except ArgumentError as exc:
            result['marginal_log_lik'] = None
            result['marginal_skipped'] = str(exc)
        if ckpt.params.prior is not None and dataset.labels is not None:
            conditional = marginal_log_lik_with_error(ckpt.params, counts, dataset.labels[rows], samples, seed)
            result['conditional_log_lik'] = conditional.mean
            result['conditional_std_error'] = _finite_or_none(conditional.mean_std_error)
        if baseline is not None:
            result['baseline_log_lik'] = float(np.mean(baseline_log_lik(baseline, counts, dataset.labels[rows])))
        return result

    def _decoding(self, ckpt: Checkpoint, dataset: Dataset, baseline: Optional[TuningBaseline],
                  rows: np.ndarray) -> Dict[str, Any]:
        spec = dataset.label_spec
        if ckpt.params.prior is None or dataset.labels is None:
            return {'skipped': 'decoding needs a pi-VAE model and labels'}
        cfg = self.infer_config
        counts, labels = dataset.counts[rows], dataset.labels[rows]
        result: Dict[str, Any] = {'samples': cfg.samples}

        if spec.is_discrete_only:
            decoded = decode_discrete(ckpt.params, counts, cfg.samples, cfg.seed, cfg.common_random_numbers)
            truth = spec.combination_index(spec.split(labels)[0])
            result['accuracy'] = decoding_accuracy(decoded.estimate, truth)
            result['chance'] = 1.0 / spec.n_combinations
            if baseline is not None:
                result['baseline_accuracy'] = decoding_accuracy(baseline_decode(baseline, counts), truth)
        elif len(spec.continuous_index) == 1:
            if cfg.grid_low is not None and cfg.grid_high is not None:
                grid = np.linspace(cfg.grid_low, cfg.grid_high, cfg.grid_points)
            else:
                grid = decode_grid(ckpt.label_support, cfg.grid_points)
            decoded = decode_continuous(ckpt.params, counts, grid, cfg.samples, cfg.seed, cfg.common_random_numbers)
            truth = labels[:, spec.continuous_index[0]]
            result['median_abs_error'] = median_abs_error(decoded.posterior_mean, truth)
            result['median_abs_error_map'] = median_abs_error(decoded.map_estimate, truth)
            if baseline is not None:
                result['baseline_median_abs_error'] = median_abs_error(baseline_decode(baseline, counts), truth)
        else:
            result['skipped'] = 'decoding supports discrete labels or exactly one continuous label'
        return result

    def _alignment(self, dataset: Dataset, latents: Dict[str, np.ndarray]) -> Optional[Dict[str, Any]]:
        if dataset.true_latents is None:
            return None
        return {name: align_latents(est, dataset.true_latents).to_dict()
                for name, est in latents.items() if name != 'prior'}

    def _psth(self, ckpt: Checkpoint, dataset: Dataset, latents: Dict[str, np.ndarray]) -> Optional[Dict[str, Any]]:
        if dataset.trials is None:
            return None
        z = latents.get('posterior', latents['encoder'])
        rates = decoder_forward(z, ckpt.params.decoder).numpy()
        try:
            return psth_and_rmse(rates, dataset.counts, dataset.trials, dataset.labels).to_dict()
        except DataError as exc:
            logger.warning("PSTH skipped: %s", exc)
            return {'skipped': str(exc)}

    def _spectra(self, ckpt: Checkpoint, dataset: Dataset, latents: Dict[str, np.ndarray]) -> Optional[Dict[str, Any]]:
        if dataset.trials is None or 'posterior' not in latents:
            return None
        trial_rows = [dataset.trials.rows_of(int(t)) for t in dataset.trials.trials]
        try:
            report = trial_residual_psd(latents['posterior'], latents['prior'], trial_rows,
                                        self.eval_config.sampling_rate, self.eval_config.psd_segment)
        except ArgumentError as exc:
            logger.warning("residual spectrum skipped: %s", exc)
            return {'skipped': str(exc)}
        return report.to_dict()

    def _geometry(self, dataset: Dataset, latents: Dict[str, np.ndarray]) -> Optional[Dict[str, Any]]:
        spec = dataset.label_spec
        if dataset.labels is None or len(spec.continuous_index) != 1 or spec.class_counts != (2,):
            return None
        z = latents.get('posterior', latents['encoder'])
        u = dataset.labels
        try:
            result = branch_distance_matrix(z, u[:, spec.continuous_index[0]], u[:, spec.discrete_index[0]],
                                            self.eval_config.position_bin)
        except ArgumentError as exc:
            logger.warning("branch geometry skipped: %s", exc)
            return {'skipped': str(exc)}
        return result.to_dict()

    def _identify_highlights(self, summary: Dict[str, Any]) -> List[str]:
        """Short human-readable findings"""
        highlights = []
        alignment = summary.get('alignment')
        if alignment:
            best = alignment.get('posterior', alignment.get('encoder'))
            highlights.append(f"Latents align with ground truth at mean R² {best['mean_r2']:.3f}")
        decoding = summary['decoding']
        if 'accuracy' in decoding:
            highlights.append(f"Decoding accuracy {decoding['accuracy']:.3f} (chance {decoding['chance']:.3f})")
        if 'median_abs_error' in decoding:
            highlights.append(f"Decoding median absolute error {decoding['median_abs_error']:.3f}")
        marginal = summary['likelihood'].get('marginal_log_lik')
        if marginal is not None:
            highlights.append(f"Held-out marginal log-likelihood {marginal:.3f} per datapoint")
        spectra = summary.get('spectra')
        if spectra and 'peak_frequency' in spectra:
            peaks = ', '.join(f"{f:.2f}" for f in spectra['peak_frequency'])
            highlights.append(f"Residual spectrum peaks at {peaks} Hz")
        return highlights if highlights else ["No ground truth, labels or trials to evaluate against"]


def format_summary(summary: Dict[str, Any]) -> str:
    """Console rendering of a metrics document"""
    lines = []
    model = summary['model']
    lines.append(f"Model: {model['mode']} (n={model['obs_dim']}, m={model['latent_dim']}, seed {model['seed']})")
    lines.append(f"Rows: {summary['n_rows']} ({summary['eval_rows']} evaluated)")
    for name, value in summary['elbo'].items():
        if value is not None:
            lines.append(f"ELBO [{name}]: {value:.4f}")
    for item in summary['highlights']:
        lines.append(f"  * {item}")
    return "\n".join(lines)
