"""
Flow models - Affine coupling layers, GIN blocks and the injective decoder

The decoder lifts a latent z (length m) to length n by appending t_pad(z),
runs volume-preserving GIN blocks and maps the result to strictly positive
Poisson rates with softplus and a small floor.
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from engine.ndmath import Activation, ArrayLike, MlpParams, Tensor, as_tensor, concat, init_mlp, mlp_forward
from utils.errors import DegenerateInputError, NotInImageError, ShapeError

SCALE_CLAMP = 0.1
RATE_FLOOR = 1e-7
INVERSE_TOLERANCE = 1e-6


def hidden_width(obs_dim: int, divisor: int) -> int:
    """floor(n / divisor), never below one unit"""
    return max(obs_dim // divisor, 1)


@dataclass
class CouplingParams:
    """One affine coupling: the first `split` coordinates condition the rest"""
    dim: int
    split: int
    trunk: MlpParams  # R^split -> R^(2 (dim - split)): scale outputs, then shift outputs
    zero_sum_scale: bool = True

    def __post_init__(self):
        if not 1 <= self.split < self.dim:
            raise ShapeError(f"coupling split {self.split} must lie in [1, {self.dim})")
        width = self.dim - self.split
        if self.trunk.in_dim != self.split or self.trunk.out_dim != 2 * width:
            raise ShapeError(f"coupling trunk must map {self.split} -> {2 * width}, "
                             f"got {self.trunk.in_dim} -> {self.trunk.out_dim}")

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        return self.trunk.named_parameters(f"{prefix}.trunk")


@dataclass
class GinBlockParams:
    """Fixed input permutation followed by two couplings (the second on reversed coordinates)"""
    permutation: np.ndarray
    couplings: Tuple[CouplingParams, CouplingParams]

    def __post_init__(self):
        if any(c.dim != self.dim for c in self.couplings):
            raise ShapeError("both couplings of a block must share its dimension")
        self.set_permutation(self.permutation)

    def set_permutation(self, permutation):
        permutation = np.array(permutation, dtype=np.int64)
        if sorted(permutation.tolist()) != list(range(self.dim)):
            raise ShapeError(f"permutation is not a bijection on {self.dim} indices")
        permutation.setflags(write=False)
        self.permutation = permutation

    @property
    def dim(self) -> int:
        return self.couplings[0].dim

    @property
    def inverse_permutation(self) -> np.ndarray:
        return np.argsort(self.permutation)

    def named_parameters(self, prefix: str) -> Dict[str, Tensor]:
        named = {}
        for i, coupling in enumerate(self.couplings):
            named.update(coupling.named_parameters(f"{prefix}.c{i}"))
        return named


@dataclass
class DecoderParams:
    """t_pad network, GIN blocks and the rate floor"""
    latent_dim: int
    obs_dim: int
    pad: MlpParams
    blocks: List[GinBlockParams]
    rate_floor: float = RATE_FLOOR

    def __post_init__(self):
        if not 1 <= self.latent_dim < self.obs_dim:
            raise ShapeError(f"decoder needs 1 <= m < n, got m={self.latent_dim}, n={self.obs_dim}")
        if self.pad.in_dim != self.latent_dim or self.pad.out_dim != self.obs_dim - self.latent_dim:
            raise ShapeError("padding network must map m -> n - m")
        if any(b.dim != self.obs_dim for b in self.blocks):
            raise ShapeError("GIN blocks must act on dimension n")

    def named_parameters(self, prefix: str = 'decoder') -> Dict[str, Tensor]:
        named = self.pad.named_parameters(f"{prefix}.pad")
        for i, block in enumerate(self.blocks):
            named.update(block.named_parameters(f"{prefix}.gin{i}"))
        return named


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------

def init_coupling(dim: int, split: int, hidden: int, depth: int, rng: np.random.Generator,
                  zero_sum_scale: bool = True) -> CouplingParams:
    sizes = [split] + [hidden] * depth + [2 * (dim - split)]
    return CouplingParams(dim, split, init_mlp(sizes, Activation.RELU, rng), zero_sum_scale)


def init_gin_block(dim: int, hidden: int, depth: int, rng: np.random.Generator,
                   zero_sum_scale: bool = True) -> GinBlockParams:
    """Random permutation plus two couplings split at floor(dim / 2)"""
    permutation = rng.permutation(dim)
    split = dim // 2
    couplings = (init_coupling(dim, split, hidden, depth, rng, zero_sum_scale),
                 init_coupling(dim, split, hidden, depth, rng, zero_sum_scale))
    return GinBlockParams(permutation, couplings)


def init_decoder(latent_dim: int, obs_dim: int, rng: np.random.Generator, n_blocks: int = 2,
                 depth: int = 2, rate_floor: float = RATE_FLOOR) -> DecoderParams:
    """Hidden widths floor(n/4) with ReLU, as for every decoder network"""
    if not 1 <= latent_dim < obs_dim:
        raise ShapeError(f"decoder needs 1 <= m < n, got m={latent_dim}, n={obs_dim}")
    width = hidden_width(obs_dim, 4)
    pad = init_mlp([latent_dim] + [width] * depth + [obs_dim - latent_dim], Activation.RELU, rng)
    blocks = [init_gin_block(obs_dim, width, depth, rng) for _ in range(n_blocks)]
    return DecoderParams(latent_dim, obs_dim, pad, blocks, rate_floor)


# ----------------------------------------------------------------------
# Coupling maps
# ----------------------------------------------------------------------

def coupling_scale_shift(condition: ArrayLike, p: CouplingParams) -> Tuple[Tensor, Tensor]:
    """Effective scale s and shift t for the transformed coordinates

    Scales pass through 0.1 tanh. With zero_sum_scale they are centred and
    halved, so they sum to zero and stay inside (-0.1, 0.1).
    """
    out = mlp_forward(condition, p.trunk)
    width = p.dim - p.split
    clamped = SCALE_CLAMP * out[..., :width].tanh()
    shift = out[..., width:]
    if p.zero_sum_scale:
        scale = 0.5 * (clamped - clamped.mean(axis=-1, keepdims=True))
    else:
        scale = clamped
    return scale, shift


def _check_dim(x: Tensor, dim: int):
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ShapeError(f"expected last extent {dim}, got shape {x.shape}")


def coupling_forward(x: ArrayLike, p: CouplingParams) -> Tensor:
    """y_{1:l} = x_{1:l}; y_{l+1:D} = x_{l+1:D} * exp(s(x_{1:l})) + t(x_{1:l})"""
    x = as_tensor(x)
    _check_dim(x, p.dim)
    head, tail = x[..., :p.split], x[..., p.split:]
    scale, shift = coupling_scale_shift(head, p)
    return concat([head, tail * scale.exp() + shift], axis=-1)


def coupling_inverse(y: ArrayLike, p: CouplingParams) -> Tensor:
    """x_{l+1:D} = (y_{l+1:D} - t(y_{1:l})) * exp(-s(y_{1:l}))"""
    y = as_tensor(y)
    _check_dim(y, p.dim)
    head, tail = y[..., :p.split], y[..., p.split:]
    scale, shift = coupling_scale_shift(head, p)
    return concat([head, (tail - shift) * (-scale).exp()], axis=-1)


_REVERSE = slice(None, None, -1)


def gin_block_forward(x: ArrayLike, p: GinBlockParams) -> Tensor:
    """Permute, couple, reverse coordinates, couple again"""
    x = as_tensor(x)
    _check_dim(x, p.dim)
    h = x[..., p.permutation]
    h = coupling_forward(h, p.couplings[0])
    h = h[..., _REVERSE]
    return coupling_forward(h, p.couplings[1])


def gin_block_inverse(y: ArrayLike, p: GinBlockParams) -> Tensor:
    y = as_tensor(y)
    _check_dim(y, p.dim)
    h = coupling_inverse(y, p.couplings[1])
    h = h[..., _REVERSE]
    h = coupling_inverse(h, p.couplings[0])
    return h[..., p.inverse_permutation]


# ----------------------------------------------------------------------
# Decoder
# ----------------------------------------------------------------------

def flow_forward(h: ArrayLike, blocks: Sequence[GinBlockParams]) -> Tensor:
    h = as_tensor(h)
    for block in blocks:
        h = gin_block_forward(h, block)
    return h


def flow_inverse(y: ArrayLike, blocks: Sequence[GinBlockParams]) -> Tensor:
    h = as_tensor(y)
    for block in reversed(blocks):
        h = gin_block_inverse(h, block)
    return h


def rates_from_flow(h: Tensor, floor: float) -> Tensor:
    return h.softplus().clamp_min(floor)


def decoder_forward(z: ArrayLike, p: DecoderParams) -> Tensor:
    """Firing rates f(z) = max(softplus(GIN(concat(z, t_pad(z)))), floor)"""
    z = as_tensor(z)
    _check_dim(z, p.latent_dim)
    lifted = concat([z, mlp_forward(z, p.pad)], axis=-1)
    return rates_from_flow(flow_forward(lifted, p.blocks), p.rate_floor)


def decoder_left_inverse(rates: ArrayLike, p: DecoderParams, tolerance: float = INVERSE_TOLERANCE) -> np.ndarray:
    """Latent z with f(z) = rates, or NotInImageError when no such z exists"""
    lam = np.asarray(rates.data if isinstance(rates, Tensor) else rates, dtype=np.float64)
    if lam.ndim == 0 or lam.shape[-1] != p.obs_dim:
        raise ShapeError(f"expected last extent {p.obs_dim}, got shape {lam.shape}")
    if np.any(lam <= p.rate_floor):
        raise DegenerateInputError(f"rates must exceed the floor {p.rate_floor}")
    pre_softplus = lam + np.log(-np.expm1(-lam))  # log(exp(lam) - 1) without overflow
    h = flow_inverse(pre_softplus, p.blocks).data
    z = h[..., :p.latent_dim]
    padding = h[..., p.latent_dim:]
    gap = np.max(np.abs(padding - mlp_forward(z, p.pad).data), axis=-1)
    if np.any(gap > tolerance):
        raise NotInImageError(f"padding mismatch {float(np.max(gap)):.3g} exceeds {tolerance:g}")
    return z
