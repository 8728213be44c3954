"""
Recognition model - Encoder q(z|x), posterior product with the label prior, reparameterized draws
"""
from dataclasses import dataclass
from typing import Dict

import numpy as np

from engine.ndmath import Activation, ArrayLike, MlpParams, Tensor, as_tensor, init_mlp, mlp_forward
from models.priors import GaussParams, clamp_log_var
from utils.errors import ShapeError


@dataclass
class EncoderParams:
    """Separate mean and log-variance networks, both n -> m"""
    mean_net: MlpParams
    log_var_net: MlpParams

    def __post_init__(self):
        if (self.mean_net.in_dim, self.mean_net.out_dim) != (self.log_var_net.in_dim, self.log_var_net.out_dim):
            raise ShapeError("mean and log-variance networks must share input/output dimensions")

    @property
    def obs_dim(self) -> int:
        return self.mean_net.in_dim

    @property
    def latent_dim(self) -> int:
        return self.mean_net.out_dim

    def named_parameters(self, prefix: str = 'encoder') -> Dict[str, Tensor]:
        named = self.mean_net.named_parameters(f"{prefix}.mean")
        named.update(self.log_var_net.named_parameters(f"{prefix}.log_var"))
        return named


def init_encoder(obs_dim: int, latent_dim: int, rng: np.random.Generator, hidden: int = 60) -> EncoderParams:
    sizes = [obs_dim, hidden, hidden, latent_dim]
    return EncoderParams(init_mlp(sizes, Activation.TANH, rng), init_mlp(sizes, Activation.TANH, rng))


def encode(x: ArrayLike, p: EncoderParams) -> GaussParams:
    """q(z|x) for a count row or count matrix"""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] != p.obs_dim:
        raise ShapeError(f"encoder expects last extent {p.obs_dim}, got shape {x.shape}")
    return GaussParams(mlp_forward(x, p.mean_net), clamp_log_var(mlp_forward(x, p.log_var_net)))


def posterior_product(enc: GaussParams, prior: GaussParams) -> GaussParams:
    """Normalised product q(z|x) p(z|u), precision-weighted per dimension, log-variance clamped"""
    if enc.mean.shape[-1] != prior.mean.shape[-1]:
        raise ShapeError(f"encoder dimension {enc.dim} differs from prior dimension {prior.dim}")
    v1, v2 = enc.var, prior.var
    total = v1 + v2
    mean = (enc.mean * v2 + prior.mean * v1) / total
    log_var = clamp_log_var(enc.log_var + prior.log_var - total.log())
    return GaussParams(mean, log_var)


def sample_reparam(g: GaussParams, eps: ArrayLike) -> Tensor:
    """z = mean + exp(log_var / 2) * eps"""
    eps = as_tensor(eps)
    if eps.shape[-1] != g.dim:
        raise ShapeError(f"noise has last extent {eps.shape[-1]}, Gaussian has {g.dim}")
    return g.mean + (0.5 * g.log_var).exp() * eps
