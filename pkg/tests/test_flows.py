"""
Tests for coupling layers, GIN blocks and the injective decoder
"""
import numpy as np
import pytest

from engine.ndmath import Activation, MlpParams, Tensor, numeric_jacobian
from models.flows import (CouplingParams, GinBlockParams, SCALE_CLAMP, coupling_forward, coupling_inverse,
                          coupling_scale_shift, decoder_forward, decoder_left_inverse, gin_block_forward,
                          gin_block_inverse, init_coupling, init_decoder, init_gin_block)
from utils.errors import DegenerateInputError, NotInImageError, ShapeError
from utils.rng import make_rng


def _zero(named):
    for t in named.values():
        t.data = np.zeros_like(t.data)


def _shift_only_coupling():
    """D=2, l=1, scale weight nonzero (forced to zero by the constraint), t(x1) = x1"""
    trunk = MlpParams([Tensor([[5.0, 1.0]])], [Tensor([0.0, 0.0])], [Activation.LINEAR])
    return CouplingParams(dim=2, split=1, trunk=trunk, zero_sum_scale=True)


def test_zero_trunk_coupling_is_identity():
    p = init_coupling(5, 2, 4, 2, make_rng(0))
    _zero(p.named_parameters('c'))
    x = make_rng(1).standard_normal((3, 5))
    np.testing.assert_array_equal(coupling_forward(x, p).data, x)
    np.testing.assert_array_equal(coupling_inverse(x, p).data, x)


def test_two_dimensional_coupling_by_hand():
    p = _shift_only_coupling()
    np.testing.assert_allclose(coupling_forward(np.array([1.5, -0.5]), p).data, [1.5, 1.0])
    np.testing.assert_allclose(coupling_inverse(np.array([1.5, 1.0]), p).data, [1.5, -0.5])


def test_coupling_rejects_bad_split_and_shapes():
    with pytest.raises(ShapeError):
        init_coupling(3, 3, 2, 1, make_rng(0))
    p = init_coupling(4, 2, 3, 1, make_rng(0))
    with pytest.raises(ShapeError):
        coupling_forward(np.ones(5), p)


def test_zero_sum_scales_stay_inside_the_clamp():
    p = init_coupling(7, 3, 6, 2, make_rng(3))
    scale, _ = coupling_scale_shift(make_rng(4).standard_normal((50, 3)) * 10.0, p)
    np.testing.assert_allclose(scale.data.sum(axis=-1), 0.0, atol=1e-15)
    assert np.max(np.abs(scale.data)) < SCALE_CLAMP


@pytest.mark.parametrize('dim', [2, 4, 6, 8, 12])
@pytest.mark.parametrize('seed', range(40))
def test_gin_block_preserves_volume(dim, seed):
    block = init_gin_block(dim, max(dim // 4, 1), 2, make_rng(seed, 'block'))
    point = make_rng(seed, 'point').standard_normal(dim)
    _, logdet = np.linalg.slogdet(numeric_jacobian(lambda v: gin_block_forward(v, block).data, point))
    assert abs(logdet) <= 1e-6


def test_two_dimensional_gin_block_is_purely_additive():
    block = init_gin_block(2, 3, 2, make_rng(8))
    for c in block.couplings:
        scale, _ = coupling_scale_shift(make_rng(9).standard_normal((10, 1)), c)
        np.testing.assert_array_equal(scale.data, 0.0)
    _, logdet = np.linalg.slogdet(numeric_jacobian(lambda v: gin_block_forward(v, block).data, np.ones(2)))
    assert abs(logdet) <= 1e-8


def test_gin_block_roundtrip_and_determinism():
    block = init_gin_block(6, 3, 2, make_rng(5))
    x = make_rng(6).standard_normal((4, 6))
    y = gin_block_forward(x, block).data
    np.testing.assert_array_equal(y, gin_block_forward(x, block).data)
    np.testing.assert_allclose(gin_block_inverse(y, block).data, x, atol=1e-12)


def test_permutation_must_be_a_bijection():
    block = init_gin_block(4, 2, 1, make_rng(0))
    with pytest.raises(ShapeError):
        GinBlockParams(np.array([0, 0, 1, 2]), block.couplings)
    with pytest.raises(ValueError):
        block.permutation[0] = 3


def test_decoder_rates_are_positive():
    p = init_decoder(2, 8, make_rng(10))
    rates = decoder_forward(make_rng(11).standard_normal((100, 2)) * 5.0, p).data
    assert rates.shape == (100, 8)
    assert np.all(rates > 0)


def test_zero_weight_decoder_by_hand():
    p = init_decoder(2, 4, make_rng(12))
    _zero(p.named_parameters())
    z = np.array([0.7, -1.3])
    lifted = np.array([0.7, -1.3, 0.0, 0.0])
    for block in p.blocks:
        lifted = lifted[block.permutation][::-1]
    np.testing.assert_allclose(decoder_forward(z, p).data, np.logaddexp(0.0, lifted), rtol=1e-14)


@pytest.mark.parametrize('latent_dim,obs_dim', [(1, 4), (2, 6), (2, 12), (3, 8), (5, 20)])
def test_decoder_left_inverse_roundtrip(latent_dim, obs_dim):
    for seed in range(40):
        p = init_decoder(latent_dim, obs_dim, make_rng(seed, 'decoder', obs_dim))
        z = make_rng(seed, 'z', obs_dim).standard_normal(latent_dim)
        np.testing.assert_allclose(decoder_left_inverse(decoder_forward(z, p), p), z, atol=1e-6)


def test_perturbed_rates_are_not_in_the_image():
    p = init_decoder(2, 6, make_rng(13))
    rates = decoder_forward(np.array([0.4, -0.2]), p).data
    rates[3] += 1.0
    with pytest.raises(NotInImageError):
        decoder_left_inverse(rates, p)


def test_rates_at_the_floor_are_degenerate():
    p = init_decoder(2, 6, make_rng(14))
    rates = decoder_forward(np.zeros(2), p).data
    rates[0] = p.rate_floor
    with pytest.raises(DegenerateInputError):
        decoder_left_inverse(rates, p)


def test_decoder_requires_m_below_n():
    with pytest.raises(ShapeError):
        init_decoder(4, 4, make_rng(0))
    p = init_decoder(2, 5, make_rng(0))
    with pytest.raises(ShapeError):
        decoder_forward(np.ones(3), p)
