"""
Simulator - Ground-truth synthetic spike-count benchmarks

Latents come from a labelled Gaussian mixture (discrete mode) or from the
sine curve u -> (u, 2 sin u) (continuous mode); a randomly initialised
RealNVP-style generator maps them to Poisson rates.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from engine.ndmath import ArrayLike, Tensor, as_tensor, concat
from models.dataset import Dataset, LabelColumn, LabelKind, LabelSpec
from models.flows import RATE_FLOOR, GinBlockParams, flow_forward, hidden_width, init_gin_block, rates_from_flow
from utils.config import SynthConfig, SynthMode
from utils.errors import ConfigError, ShapeError
from utils.rng import make_rng

logger = logging.getLogger(__name__)

MEAN_RANGE = (-5.0, 5.0)
VAR_RANGE = (0.5, 3.0)


@dataclass
class GeneratorParams:
    """Zero padding plus coupling blocks without the zero-sum constraint"""
    latent_dim: int
    obs_dim: int
    blocks: List[GinBlockParams]
    rate_floor: float = RATE_FLOOR

    def __post_init__(self):
        if not 1 <= self.latent_dim < self.obs_dim:
            raise ShapeError(f"generator needs 1 <= m < n, got m={self.latent_dim}, n={self.obs_dim}")


def init_generator(latent_dim: int, obs_dim: int, rng: np.random.Generator, n_blocks: int = 4,
                   depth: int = 2) -> GeneratorParams:
    """Blocks with hidden width floor(n/2)"""
    width = hidden_width(obs_dim, 2)
    blocks = [init_gin_block(obs_dim, width, depth, rng, zero_sum_scale=False) for _ in range(n_blocks)]
    return GeneratorParams(latent_dim, obs_dim, blocks)


def synth_decoder_forward(z: ArrayLike, gen: GeneratorParams) -> np.ndarray:
    """Rates for latent rows: pad with n - m zeros, run the blocks, softplus + floor"""
    z = as_tensor(z)
    if z.ndim == 0 or z.shape[-1] != gen.latent_dim:
        raise ShapeError(f"generator expects last extent {gen.latent_dim}, got shape {z.shape}")
    padded = concat([z, Tensor(np.zeros(z.shape[:-1] + (gen.obs_dim - gen.latent_dim,)))], axis=-1)
    return rates_from_flow(flow_forward(padded, gen.blocks), gen.rate_floor).numpy()


@dataclass
class SynthDataset:
    """Simulated counts with the latents and rates that produced them"""
    counts: np.ndarray
    labels: np.ndarray
    latents: np.ndarray
    rates: np.ndarray
    label_spec: LabelSpec
    generator: GeneratorParams
    config: SynthConfig
    cluster_means: Optional[np.ndarray] = None
    cluster_vars: Optional[np.ndarray] = None

    def to_dataset(self) -> Dataset:
        return Dataset(counts=self.counts, labels=self.labels, label_spec=self.label_spec,
                       true_latents=self.latents)


def continuous_latent_moments(u: ArrayLike):
    """Mean (u, 2 sin u) and variance (0.6 - 0.3|sin u|, 0.3|sin u|)"""
    u = np.asarray(u, dtype=np.float64)
    s = np.sin(u)
    mean = np.stack([u, 2.0 * s], axis=-1)
    var = np.stack([0.6 - 0.3 * np.abs(s), 0.3 * np.abs(s)], axis=-1)
    return mean, var


def _finish(cfg: SynthConfig, seed: int, labels, latents, spec, generator, **extra) -> SynthDataset:
    rates = synth_decoder_forward(latents, generator)
    counts = make_rng(seed, 'counts').poisson(rates).astype(np.float64)
    logger.info("simulated %d rows (%s, n=%d, m=%d), mean rate %.3f",
                cfg.n_samples, cfg.mode.value, cfg.obs_dim, cfg.latent_dim, float(rates.mean()))
    return SynthDataset(counts=counts, labels=labels, latents=latents, rates=rates, label_spec=spec,
                        generator=generator, config=cfg, **extra)


def simulate_discrete(cfg: SynthConfig, seed: Optional[int] = None) -> SynthDataset:
    """Gaussian-mixture latents with K equally weighted clusters"""
    if cfg.mode != SynthMode.DISCRETE:
        raise ConfigError(f"simulate_discrete called with mode {cfg.mode.value!r}")
    seed = cfg.seed if seed is None else seed
    m, K, N = cfg.latent_dim, cfg.n_clusters, cfg.n_samples

    cluster_rng = make_rng(seed, 'clusters')
    means = cluster_rng.uniform(*MEAN_RANGE, size=(K, m))
    variances = cluster_rng.uniform(*VAR_RANGE, size=(K, m))
    classes = make_rng(seed, 'labels').integers(0, K, size=N)
    noise = make_rng(seed, 'latents').standard_normal((N, m))
    latents = means[classes] + np.sqrt(variances[classes]) * noise

    generator = init_generator(m, cfg.obs_dim, make_rng(seed, 'generator'))
    spec = LabelSpec((LabelColumn('cluster', LabelKind.DISCRETE, K),))
    return _finish(cfg, seed, classes.astype(np.float64)[:, None], latents, spec, generator,
                   cluster_means=means, cluster_vars=variances)


def simulate_continuous(cfg: SynthConfig, seed: Optional[int] = None) -> SynthDataset:
    """u ~ U[0, 2 pi] with latents scattered around the sine curve"""
    if cfg.mode != SynthMode.CONTINUOUS:
        raise ConfigError(f"simulate_continuous called with mode {cfg.mode.value!r}")
    if cfg.latent_dim != 2:
        raise ConfigError(f"continuous simulation needs latent_dim = 2, got {cfg.latent_dim}")
    seed = cfg.seed if seed is None else seed

    u = make_rng(seed, 'labels').uniform(0.0, 2.0 * np.pi, size=cfg.n_samples)
    mean, var = continuous_latent_moments(u)
    # zero variance gives a point mass at the mean
    latents = mean + np.sqrt(var) * make_rng(seed, 'latents').standard_normal(mean.shape)

    generator = init_generator(2, cfg.obs_dim, make_rng(seed, 'generator'))
    spec = LabelSpec((LabelColumn('u', LabelKind.CONTINUOUS),))
    return _finish(cfg, seed, u[:, None], latents, spec, generator)


def simulate(cfg: SynthConfig, seed: Optional[int] = None) -> SynthDataset:
    if cfg.mode == SynthMode.DISCRETE:
        return simulate_discrete(cfg, seed)
    return simulate_continuous(cfg, seed)
