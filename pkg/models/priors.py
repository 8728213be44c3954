"""
Label prior - Conditionally independent Gaussian p(z|u) in exponential-family form

Sufficient statistics are T(z) = (z, z^2), so k = 2 natural parameters per
latent dimension. Purely discrete labels index a table of Gaussians, one row
per class combination; anything with a continuous column goes through a
small tanh network fed with (continuous values, one-hot classes).
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from engine.ndmath import Activation, ArrayLike, MlpParams, Tensor, as_tensor, init_mlp, mlp_forward
from models.dataset import LabelSpec
from utils.errors import ArgumentError, ShapeError

LOG_VAR_CLAMP = 10.0
SUFFICIENT_STATS = 2
TABLE_LOG_VAR_SCALE = 0.1  # distinct variances keep the natural-parameter differences full rank at init
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussParams:
    """Diagonal Gaussian over the latent: mean and log-variance (rows = batch)"""
    mean: Tensor
    log_var: Tensor

    def __post_init__(self):
        self.mean = as_tensor(self.mean)
        self.log_var = as_tensor(self.log_var)
        if self.mean.shape != self.log_var.shape:
            raise ShapeError(f"mean {self.mean.shape} and log_var {self.log_var.shape} differ")

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def var(self) -> Tensor:
        return self.log_var.exp()

    def row(self, i: int) -> 'GaussParams':
        return GaussParams(Tensor(self.mean.data[i]), Tensor(self.log_var.data[i]))


def standard_normal(shape) -> GaussParams:
    """N(0, I) with the given (batch..., m) shape"""
    return GaussParams(Tensor(np.zeros(shape)), Tensor(np.zeros(shape)))


def clamp_log_var(log_var: Tensor) -> Tensor:
    return log_var.clip(-LOG_VAR_CLAMP, LOG_VAR_CLAMP)


@dataclass
class LabelPrior:
    """Table (discrete labels) or network (continuous / mixed labels) producing p(z|u)"""
    spec: LabelSpec
    latent_dim: int
    table_mean: Optional[Tensor] = None
    table_log_var: Optional[Tensor] = None
    net: Optional[MlpParams] = None

    def __post_init__(self):
        if self.spec.is_discrete_only:
            expected = (self.spec.n_combinations, self.latent_dim)
            if self.table_mean is None or self.table_mean.shape != expected or self.table_log_var.shape != expected:
                raise ShapeError(f"discrete prior table must be {expected}")
        else:
            if self.net is None:
                raise ShapeError("continuous or mixed labels need a prior network")
            if self.net.in_dim != self.spec.network_input_dim or self.net.out_dim != 2 * self.latent_dim:
                raise ShapeError(f"prior network must map {self.spec.network_input_dim} -> {2 * self.latent_dim}")

    @property
    def uses_table(self) -> bool:
        return self.net is None

    def named_parameters(self, prefix: str = 'prior') -> Dict[str, Tensor]:
        if self.uses_table:
            return {f"{prefix}.table_mean": self.table_mean, f"{prefix}.table_log_var": self.table_log_var}
        return self.net.named_parameters(f"{prefix}.net")


def init_label_prior(spec: LabelSpec, latent_dim: int, rng: np.random.Generator, hidden: int = 20) -> LabelPrior:
    if not spec.columns:
        raise ArgumentError("a label prior needs at least one label column")
    if spec.is_discrete_only:
        rows = spec.n_combinations
        mean = Tensor(rng.normal(0.0, 1.0, size=(rows, latent_dim)), requires_grad=True)
        log_var = Tensor(rng.normal(0.0, TABLE_LOG_VAR_SCALE, size=(rows, latent_dim)), requires_grad=True)
        return LabelPrior(spec, latent_dim, table_mean=mean, table_log_var=log_var)
    net = init_mlp([spec.network_input_dim, hidden, hidden, 2 * latent_dim], Activation.TANH, rng)
    return LabelPrior(spec, latent_dim, net=net)


def prior_params(u: ArrayLike, p: LabelPrior) -> GaussParams:
    """p(z|u) for a label row or a label matrix"""
    u = np.asarray(u.data if isinstance(u, Tensor) else u, dtype=np.float64)
    single = u.ndim == 1
    disc, cont = p.spec.split(u)
    if p.uses_table:
        rows = p.spec.combination_index(disc)
        mean, log_var = p.table_mean[rows], clamp_log_var(p.table_log_var[rows])
    else:
        out = mlp_forward(p.spec.network_input(disc, cont), p.net)
        mean, log_var = out[..., :p.latent_dim], clamp_log_var(out[..., p.latent_dim:])
    if single:
        mean, log_var = mean[0], log_var[0]
    return GaussParams(mean, log_var)


def gauss_log_prob(z: ArrayLike, g: GaussParams) -> Tensor:
    """sum_i log N(z_i; mean_i, exp(log_var_i)) over the last axis"""
    z = as_tensor(z)
    if z.shape[-1] != g.dim:
        raise ShapeError(f"z has last extent {z.shape[-1]}, Gaussian has {g.dim}")
    sq = (z - g.mean) ** 2 / g.var
    return (-0.5 * (sq + g.log_var + LOG_2PI)).sum(axis=-1)


def prior_log_prob(z: ArrayLike, u: ArrayLike, p: LabelPrior) -> Tensor:
    z = as_tensor(z)
    if z.shape[-1] != p.latent_dim:
        raise ShapeError(f"z has last extent {z.shape[-1]}, prior has {p.latent_dim}")
    return gauss_log_prob(z, prior_params(u, p))


def natural_params(g: GaussParams) -> np.ndarray:
    """Interleaved (mean / var, -1 / (2 var)) per latent dimension"""
    mean = np.asarray(g.mean.data)
    var = np.exp(np.asarray(g.log_var.data))
    out = np.empty(mean.shape[:-1] + (2 * mean.shape[-1],))
    out[..., 0::2] = mean / var
    out[..., 1::2] = -0.5 / var
    return out


@dataclass
class ConditionReport:
    """Invertibility diagnostic for the natural-parameter differences"""
    L: np.ndarray
    determinant: float
    condition_number: float
    rank: int
    invertible: bool

    def to_dict(self) -> dict:
        return {
            'L': self.L.tolist(),
            'determinant': self.determinant,
            'condition_number': self.condition_number if np.isfinite(self.condition_number) else None,
            'rank': self.rank,
            'invertible': self.invertible,
        }


def check_conditions(p: LabelPrior, labels: Sequence[ArrayLike], tolerance: float = 1e-8) -> ConditionReport:
    """Build L with columns lambda(u^j) - lambda(u^0) for j = 1..mk and test its rank"""
    needed = p.latent_dim * SUFFICIENT_STATS + 1
    rows = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if rows.shape[0] != needed:
        raise ArgumentError(f"need exactly {needed} test labels, got {rows.shape[0]}")
    if np.unique(rows, axis=0).shape[0] != needed:
        raise ArgumentError("test labels must be distinct")
    lam = natural_params(prior_params(rows, p))
    L = (lam[1:] - lam[0]).T
    rank = int(np.linalg.matrix_rank(L, tol=tolerance))
    cond = float(np.linalg.cond(L))
    return ConditionReport(L=L, determinant=float(np.linalg.det(L)), condition_number=cond,
                           rank=rank, invertible=rank == L.shape[0])
