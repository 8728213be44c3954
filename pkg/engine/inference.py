"""
Inference - Posterior latent means, Monte-Carlo label decoding, marginal likelihood

Decoding uses Bayes' rule with a uniform label prior:
p(u|x) ∝ (1/S) sum_s p(x | f(z_s)), z_s ~ p(z|u), evaluated in log space.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln, logsumexp

from engine.ndmath import ArrayLike, Tensor
from models.dataset import LabelKind, LabelSpec, LabelSupport
from models.pivae import PiVaeParams, RateFn, check_counts, model_rates
from models.priors import prior_params
from models.recognition import encode, posterior_product
from utils.config import TrainMode
from utils.errors import ArgumentError, ConfigError, ShapeError, UnsupportedError
from utils.rng import make_rng

logger = logging.getLogger(__name__)


def _counts_matrix(x: ArrayLike, params: PiVaeParams) -> np.ndarray:
    x = np.atleast_2d(check_counts(x))
    if x.shape[1] != params.arch.obs_dim:
        raise ShapeError(f"counts have {x.shape[1]} columns, model expects {params.arch.obs_dim}")
    return x


def _check_samples(samples: int):
    if samples < 1:
        raise ConfigError(f"sample count must be >= 1, got {samples}")


def _rates(rate_fn: RateFn, z: np.ndarray) -> np.ndarray:
    return rate_fn(Tensor(z)).data


def log_lik_matrix(x: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Poisson log-likelihood of every count row (N x n) under every rate row (S x n): N x S"""
    return x @ np.log(rates).T - rates.sum(axis=1)[None, :] - gammaln(x + 1.0).sum(axis=1)[:, None]


def log_mean_exp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """log(mean(exp(a))) along `axis`"""
    a = np.asarray(a, dtype=np.float64)
    return logsumexp(a, axis=axis) - np.log(a.shape[axis])


# ----------------------------------------------------------------------
# Latents
# ----------------------------------------------------------------------

def infer_latents(params: PiVaeParams, counts: ArrayLike, labels: Optional[ArrayLike] = None,
                  use_label_prior: bool = True) -> np.ndarray:
    """N x m posterior means of q(z|x,u), or of q(z|x) without the label prior"""
    x = _counts_matrix(counts, params)
    enc = encode(x, params.encoder)
    if not use_label_prior:
        return enc.mean.numpy()
    if params.mode == TrainMode.VANILLA:
        raise ArgumentError("a vanilla VAE has no label prior to combine with")
    if labels is None:
        raise ArgumentError("labels are required when use_label_prior is set")
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if labels.shape[0] != x.shape[0]:
        raise ShapeError(f"{x.shape[0]} count rows but {labels.shape[0]} label rows")
    return posterior_product(enc, prior_params(labels, params.prior)).mean.numpy()


def prior_means(params: PiVaeParams, labels: ArrayLike) -> np.ndarray:
    """N x m means of p(z|u)"""
    if params.prior is None:
        raise ArgumentError("a vanilla VAE has no label prior")
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    return prior_params(labels, params.prior).mean.numpy()


# ----------------------------------------------------------------------
# Decoding
# ----------------------------------------------------------------------

@dataclass
class DiscreteDecoding:
    """Per-row class posterior (N x C) over class combinations"""
    labels: np.ndarray          # C x d label rows, one per class combination
    log_evidence: np.ndarray    # N x C estimates of log p(x | u_c)
    posterior: np.ndarray       # N x C
    estimate: np.ndarray        # N argmax indices (lowest index on ties)

    @property
    def estimated_labels(self) -> np.ndarray:
        return self.labels[self.estimate]


@dataclass
class ContinuousDecoding:
    """Per-row posterior over a 1-D label grid with point estimates"""
    grid: np.ndarray
    log_evidence: np.ndarray
    posterior: np.ndarray
    posterior_mean: np.ndarray
    map_estimate: np.ndarray


def normalize_log_evidence(log_evidence: np.ndarray) -> np.ndarray:
    """Softmax over the last axis (uniform label prior)"""
    return np.exp(log_evidence - logsumexp(log_evidence, axis=-1, keepdims=True))


def _prior_draws(params: PiVaeParams, label_row: np.ndarray, eps: np.ndarray) -> np.ndarray:
    g = prior_params(label_row, params.prior)
    return g.mean.data + np.exp(0.5 * g.log_var.data) * eps


def _log_evidence(params: PiVaeParams, x: np.ndarray, candidates: np.ndarray, samples: int, seed: int,
                  common_random_numbers: bool, rate_fn: RateFn, purpose: str) -> np.ndarray:
    m = params.arch.latent_dim
    shared = make_rng(seed, purpose).standard_normal((samples, m)) if common_random_numbers else None
    out = np.empty((x.shape[0], candidates.shape[0]))
    for c, label_row in enumerate(candidates):
        eps = shared if shared is not None else make_rng(seed, purpose, c).standard_normal((samples, m))
        rates = _rates(rate_fn, _prior_draws(params, label_row, eps))
        out[:, c] = log_mean_exp(log_lik_matrix(x, rates), axis=1)
    return out


def decode_discrete(params: PiVaeParams, counts: ArrayLike, samples: int = 100, seed: int = 0,
                    common_random_numbers: bool = False, rate_fn: Optional[RateFn] = None) -> DiscreteDecoding:
    """Class posterior for each count row, with fresh prior draws per class"""
    _check_samples(samples)
    if params.prior is None:
        raise ArgumentError("decoding needs a label prior (pi-VAE mode)")
    spec = params.arch.label_spec
    if not spec.is_discrete_only:
        raise ArgumentError("decode_discrete needs a purely discrete label specification")
    x = _counts_matrix(counts, params)
    candidates = spec.combination_labels()
    log_ev = _log_evidence(params, x, candidates, samples, seed, common_random_numbers,
                           rate_fn or model_rates(params), 'decode-discrete')
    posterior = normalize_log_evidence(log_ev)
    return DiscreteDecoding(labels=candidates, log_evidence=log_ev, posterior=posterior,
                            estimate=np.argmax(posterior, axis=1))


def decode_grid(support: LabelSupport, points: int) -> np.ndarray:
    """Evenly spaced grid across the observed range of the single continuous label"""
    cont = [c for c in support.columns if c.kind == LabelKind.CONTINUOUS]
    if len(cont) != 1:
        raise UnsupportedError("grid decoding needs exactly one continuous label")
    if points < 2:
        raise ConfigError(f"grid needs at least 2 points, got {points}")
    return np.linspace(cont[0].low, cont[0].high, points)


def _grid_candidates(spec: LabelSpec, grid: np.ndarray) -> np.ndarray:
    """Label rows pairing every grid value with every class combination, grid-major"""
    combos = spec.combination_labels() if spec.discrete_index else np.zeros((1, 0))
    rows = np.zeros((grid.size * combos.shape[0], spec.width))
    rows[:, spec.continuous_index[0]] = np.repeat(grid, combos.shape[0])
    if spec.discrete_index:
        rows[:, spec.discrete_index] = np.tile(combos, (grid.size, 1))
    return rows


def decode_continuous(params: PiVaeParams, counts: ArrayLike, grid: Union[Sequence[float], np.ndarray],
                      samples: int = 100, seed: int = 0, common_random_numbers: bool = False,
                      rate_fn: Optional[RateFn] = None) -> ContinuousDecoding:
    """Posterior over grid values of the single continuous label

    Discrete label columns, if any, are marginalised under a uniform prior over
    their class combinations.
    """
    _check_samples(samples)
    if params.prior is None:
        raise ArgumentError("decoding needs a label prior (pi-VAE mode)")
    spec = params.arch.label_spec
    if len(spec.continuous_index) != 1:
        raise UnsupportedError("grid decoding supports exactly one continuous label column")
    grid = np.asarray(grid, dtype=np.float64).reshape(-1)
    if grid.size < 2:
        raise ConfigError(f"grid needs at least 2 points, got {grid.size}")
    x = _counts_matrix(counts, params)
    candidates = _grid_candidates(spec, grid)
    joint = _log_evidence(params, x, candidates, samples, seed, common_random_numbers,
                          rate_fn or model_rates(params), 'decode-continuous')
    combos = candidates.shape[0] // grid.size
    log_ev = logsumexp(joint.reshape(x.shape[0], grid.size, combos), axis=2) - np.log(combos)
    posterior = normalize_log_evidence(log_ev)
    return ContinuousDecoding(grid=grid, log_evidence=log_ev, posterior=posterior,
                              posterior_mean=posterior @ grid, map_estimate=grid[np.argmax(posterior, axis=1)])


# ----------------------------------------------------------------------
# Marginal likelihood
# ----------------------------------------------------------------------

@dataclass
class MarginalEstimate:
    """Per-row log p(x) estimates with delta-method Monte-Carlo standard errors"""
    log_lik: np.ndarray
    std_error: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.log_lik))

    @property
    def mean_std_error(self) -> float:
        return float(np.sqrt(np.sum(self.std_error ** 2)) / self.log_lik.size)


def _latent_draws(params: PiVaeParams, label_row: Optional[np.ndarray], support: Optional[LabelSupport],
                  rng: np.random.Generator, samples: int) -> np.ndarray:
    m = params.arch.latent_dim
    if params.mode == TrainMode.VANILLA:
        return rng.standard_normal((samples, m))
    if label_row is not None:
        return _prior_draws(params, label_row, rng.standard_normal((samples, m)))
    if support is None or not support.columns:
        raise ArgumentError("marginalising over labels needs the observed label support")
    u = support.sample(rng, samples)
    g = prior_params(u, params.prior)
    return g.mean.data + np.exp(0.5 * g.log_var.data) * rng.standard_normal((samples, m))


def _row_log_weights(params: PiVaeParams, x: np.ndarray, labels: Optional[np.ndarray],
                     support: Optional[LabelSupport], samples: int, seed: int, rate_fn: RateFn) -> np.ndarray:
    """N x S log p(x_i | f(z_is)) with independent draws per row"""
    weights = np.empty((x.shape[0], samples))
    for i in range(x.shape[0]):
        rng = make_rng(seed, 'marginal', i)
        z = _latent_draws(params, None if labels is None else labels[i], support, rng, samples)
        weights[i] = log_lik_matrix(x[i:i + 1], _rates(rate_fn, z))[0]
    return weights


def _prepare(params: PiVaeParams, counts: ArrayLike, labels: Optional[ArrayLike],
             samples: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    _check_samples(samples)
    x = _counts_matrix(counts, params)
    if labels is not None and params.mode == TrainMode.PI_VAE:
        labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
        if labels.shape[0] != x.shape[0]:
            raise ShapeError(f"{x.shape[0]} count rows but {labels.shape[0]} label rows")
        params.arch.label_spec.split(labels)
    else:
        labels = None
    return x, labels


def marginal_log_lik_with_error(params: PiVaeParams, counts: ArrayLike, labels: Optional[ArrayLike] = None,
                                samples: int = 100, seed: int = 0, support: Optional[LabelSupport] = None,
                                rate_fn: Optional[RateFn] = None) -> MarginalEstimate:
    """Monte-Carlo log p(x|u) (labels given) or log p(x) (labels drawn from the support)"""
    x, labels = _prepare(params, counts, labels, samples)
    weights = _row_log_weights(params, x, labels, support, samples, seed, rate_fn or model_rates(params))
    estimate = log_mean_exp(weights, axis=1)
    if samples > 1:
        scaled = np.exp(weights - estimate[:, None])  # importance weights over their mean
        std_error = np.std(scaled, axis=1, ddof=1) / np.sqrt(samples)
    else:
        std_error = np.full(x.shape[0], np.inf)
    return MarginalEstimate(log_lik=estimate, std_error=std_error)


def marginal_log_lik(params: PiVaeParams, counts: ArrayLike, labels: Optional[ArrayLike] = None,
                     samples: int = 100, seed: int = 0, support: Optional[LabelSupport] = None,
                     rate_fn: Optional[RateFn] = None) -> Union[float, np.ndarray]:
    """Log-mean-exp estimate; a float for a single count row, else one value per row"""
    single = np.asarray(counts.data if isinstance(counts, Tensor) else counts).ndim == 1
    est = marginal_log_lik_with_error(params, counts, labels, samples, seed, support, rate_fn).log_lik
    return float(est[0]) if single else est
