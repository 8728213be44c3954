"""
pi-VAE model - Decoder, label prior and encoder assembled, with the ELBO

In pi-VAE mode the approximate posterior is q(z|x,u) ∝ q(z|x) p(z|u) and
the KL term is taken against p(z|u). The vanilla-VAE ablation uses q(z|x)
against a fixed N(0, I) and never looks at labels.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.special import gammaln

from engine.ndmath import ArrayLike, Tensor, as_tensor
from models.dataset import LabelSpec
from models.flows import DecoderParams, RATE_FLOOR, decoder_forward, init_decoder
from models.priors import GaussParams, LabelPrior, init_label_prior, prior_params, standard_normal
from models.recognition import EncoderParams, encode, init_encoder, posterior_product, sample_reparam
from utils.config import TrainMode
from utils.errors import ArgumentError, ConfigError, DataError, NumericError, ShapeError
from utils.rng import make_rng

RateFn = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class ModelArch:
    """Architecture description stored alongside the parameters"""
    obs_dim: int
    latent_dim: int
    label_spec: LabelSpec = field(default_factory=LabelSpec)
    mode: TrainMode = TrainMode.PI_VAE
    encoder_hidden: int = 60
    prior_hidden: int = 20
    coupling_depth: int = 2
    gin_blocks: int = 2
    rate_floor: float = RATE_FLOOR

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigError(f"latent dimension must be >= 1, got {self.latent_dim}")
        if self.latent_dim >= self.obs_dim:
            raise ConfigError(f"latent dimension {self.latent_dim} must be smaller than observed dimension {self.obs_dim}")
        if self.mode == TrainMode.PI_VAE and not self.label_spec.columns:
            raise ConfigError("pi-VAE mode needs a label specification")

    def to_dict(self) -> dict:
        return {
            'obs_dim': self.obs_dim,
            'latent_dim': self.latent_dim,
            'labels': self.label_spec.to_list(),
            'mode': self.mode.value,
            'encoder_hidden': self.encoder_hidden,
            'prior_hidden': self.prior_hidden,
            'coupling_depth': self.coupling_depth,
            'gin_blocks': self.gin_blocks,
            'rate_floor': self.rate_floor,
        }

    @staticmethod
    def from_dict(data: dict) -> 'ModelArch':
        values = dict(data)
        values['label_spec'] = LabelSpec.from_list(values.pop('labels', []))
        values['mode'] = TrainMode(values['mode'])
        return ModelArch(**values)


@dataclass
class PiVaeParams:
    """All learnable parameters plus fixed permutations and architecture"""
    arch: ModelArch
    decoder: DecoderParams
    encoder: EncoderParams
    prior: Optional[LabelPrior]
    seed: int

    @property
    def mode(self) -> TrainMode:
        return self.arch.mode

    def named_parameters(self) -> Dict[str, Tensor]:
        named = self.decoder.named_parameters('decoder')
        if self.prior is not None:
            named.update(self.prior.named_parameters('prior'))
        named.update(self.encoder.named_parameters('encoder'))
        return named

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters().items()}

    def load_state(self, arrays: Dict[str, np.ndarray]):
        """Overwrite parameter values in place (names and shapes must match)"""
        named = self.named_parameters()
        missing = set(named) - set(arrays)
        extra = set(arrays) - set(named)
        if missing or extra:
            raise ShapeError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, tensor in named.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ShapeError(f"parameter {name!r}: shape {value.shape} != {tensor.shape}")
            if not np.all(np.isfinite(value)):
                raise NumericError(f"parameter {name!r} has non-finite entries")
            tensor.data = value.copy()

    def permutations(self) -> List[np.ndarray]:
        return [block.permutation.copy() for block in self.decoder.blocks]

    def set_permutations(self, permutations: List[np.ndarray]):
        if len(permutations) != len(self.decoder.blocks):
            raise ShapeError("permutation count differs from GIN block count")
        for block, perm in zip(self.decoder.blocks, permutations):
            block.set_permutation(perm)


def init_pivae(arch: ModelArch, seed: int) -> PiVaeParams:
    """Fresh parameters; permutations and weights drawn from the model seed"""
    rng = make_rng(seed, 'init')
    decoder = init_decoder(arch.latent_dim, arch.obs_dim, rng, n_blocks=arch.gin_blocks,
                           depth=arch.coupling_depth, rate_floor=arch.rate_floor)
    prior = None
    if arch.mode == TrainMode.PI_VAE:
        prior = init_label_prior(arch.label_spec, arch.latent_dim, rng, hidden=arch.prior_hidden)
    encoder = init_encoder(arch.obs_dim, arch.latent_dim, rng, hidden=arch.encoder_hidden)
    return PiVaeParams(arch, decoder, encoder, prior, seed)


# ----------------------------------------------------------------------
# Likelihood terms
# ----------------------------------------------------------------------

def check_counts(x: ArrayLike) -> np.ndarray:
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x != np.round(x)):
        raise DataError("counts must be nonnegative integers")
    return x


def poisson_log_lik(x: ArrayLike, rate: ArrayLike) -> Tensor:
    """sum_i (x_i log rate_i - rate_i - log Gamma(x_i + 1)) over the last axis"""
    x = check_counts(x)
    rate = as_tensor(rate)
    if x.shape[-1] != rate.shape[-1]:
        raise ShapeError(f"counts extent {x.shape[-1]} differs from rate extent {rate.shape[-1]}")
    if np.any(rate.data <= 0):
        raise NumericError("Poisson rates must be strictly positive")
    return (rate.log() * x - rate - gammaln(x + 1.0)).sum(axis=-1)


def kl_diag_gaussians(q: GaussParams, p: GaussParams) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the last axis"""
    if q.mean.shape[-1] != p.mean.shape[-1]:
        raise ShapeError(f"KL between dimensions {q.dim} and {p.dim}")
    ratio = (q.log_var - p.log_var).exp()
    sq = (q.mean - p.mean) ** 2 / p.var
    return (0.5 * (ratio + sq - 1.0 - (q.log_var - p.log_var))).sum(axis=-1)


# ----------------------------------------------------------------------
# ELBO
# ----------------------------------------------------------------------

def model_rates(params: PiVaeParams) -> RateFn:
    return lambda z: decoder_forward(z, params.decoder)


def posterior_and_prior(params: PiVaeParams, x: ArrayLike, u: Optional[ArrayLike] = None):
    """(q, p) pair entering the ELBO for the model's mode"""
    enc = encode(x, params.encoder)
    if params.mode == TrainMode.VANILLA:
        return enc, standard_normal(enc.mean.shape)
    if u is None:
        raise ArgumentError("pi-VAE mode needs labels")
    prior = prior_params(u, params.prior)
    return posterior_product(enc, prior), prior


def elbo_from_parts(x: ArrayLike, q: GaussParams, p: GaussParams, eps: ArrayLike, rates: RateFn) -> Tensor:
    """Mean over rows of log p(x | f(z)) - KL(q || p) with z = mean_q + sd_q * eps"""
    z = sample_reparam(q, eps)
    per_row = poisson_log_lik(x, rates(z)) - kl_diag_gaussians(q, p)
    return per_row.mean()


def elbo(x: ArrayLike, u: Optional[ArrayLike], params: PiVaeParams, eps: ArrayLike) -> Tensor:
    """Mean per-datapoint evidence lower bound"""
    x = check_counts(x)
    q, p = posterior_and_prior(params, x, u)
    return elbo_from_parts(x, q, p, eps, model_rates(params))
