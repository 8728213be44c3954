"""
Tests for the encoder, the posterior product and reparameterized sampling
"""
import numpy as np
import pytest

from engine.ndmath import Tensor
from models.priors import LOG_VAR_CLAMP, GaussParams
from models.recognition import encode, init_encoder, posterior_product, sample_reparam
from utils.errors import ShapeError
from utils.rng import make_rng


def _gauss(mean, var):
    return GaussParams(Tensor(np.atleast_1d(mean)), Tensor(np.log(np.atleast_1d(var))))


def test_zero_weight_encoder_returns_biases():
    p = init_encoder(5, 2, make_rng(0), hidden=4)
    for net, bias in ((p.mean_net, [0.3, -0.1]), (p.log_var_net, [1.0, -2.0])):
        for w in net.weights:
            w.data = np.zeros_like(w.data)
        net.biases[-1].data = np.array(bias)
    for x in (np.zeros(5), np.arange(5.0)):
        g = encode(x, p)
        np.testing.assert_allclose(g.mean.data, [0.3, -0.1])
        np.testing.assert_allclose(g.log_var.data, [1.0, -2.0])


def test_encoder_shapes():
    p = init_encoder(5, 2, make_rng(1), hidden=4)
    assert encode(np.ones((7, 5)), p).mean.shape == (7, 2)
    with pytest.raises(ShapeError):
        encode(np.ones(4), p)


@pytest.mark.parametrize('prior_mean,expected_mean', [(0.0, 0.0), (2.0, 1.0)])
def test_product_of_unit_gaussians(prior_mean, expected_mean):
    g = posterior_product(_gauss(0.0, 1.0), _gauss(prior_mean, 1.0))
    np.testing.assert_allclose(g.mean.data, [expected_mean], atol=1e-15)
    np.testing.assert_allclose(g.var.data, [0.5], rtol=1e-14)


def test_broad_prior_leaves_the_encoder_unchanged():
    enc = GaussParams(Tensor([0.3, -1.2]), Tensor([0.0, -0.5]))
    prior = GaussParams(Tensor([2.0, 2.0]), Tensor([10.0, 10.0]))
    g = posterior_product(enc, prior)
    np.testing.assert_allclose(g.mean.data, enc.mean.data, atol=1e-3)
    np.testing.assert_allclose(g.log_var.data, enc.log_var.data, atol=1e-3)


def test_product_mean_lies_between_the_factors():
    rng = make_rng(2)
    enc = GaussParams(Tensor(rng.standard_normal((20, 3))), Tensor(rng.standard_normal((20, 3))))
    prior = GaussParams(Tensor(rng.standard_normal((20, 3))), Tensor(rng.standard_normal((20, 3))))
    mean = posterior_product(enc, prior).mean.data
    low = np.minimum(enc.mean.data, prior.mean.data)
    high = np.maximum(enc.mean.data, prior.mean.data)
    assert np.all((mean >= low - 1e-12) & (mean <= high + 1e-12))


def test_product_dimension_mismatch():
    with pytest.raises(ShapeError):
        posterior_product(_gauss([0.0, 0.0], [1.0, 1.0]), _gauss(0.0, 1.0))


def test_product_of_two_tight_factors_stays_inside_the_clamp():
    tight = GaussParams(Tensor([0.0, 1.0]), Tensor([-LOG_VAR_CLAMP, -LOG_VAR_CLAMP + 0.2]))
    g = posterior_product(tight, tight)
    assert np.all(g.log_var.data >= -LOG_VAR_CLAMP)
    np.testing.assert_allclose(g.log_var.data, [-LOG_VAR_CLAMP, -LOG_VAR_CLAMP], atol=1e-12)
    np.testing.assert_allclose(g.mean.data, [0.0, 1.0], atol=1e-12)


def test_reparam_zero_noise_returns_mean():
    g = GaussParams(Tensor([1.5, -2.0]), Tensor([0.3, 0.7]))
    np.testing.assert_array_equal(sample_reparam(g, np.zeros(2)).data, [1.5, -2.0])


def test_reparam_scales_by_standard_deviation():
    g = GaussParams(Tensor([0.0]), Tensor([2.0 * np.log(2.0)]))
    assert sample_reparam(g, np.array([1.0])).data[0] == pytest.approx(2.0)


def test_reparam_shape_mismatch():
    with pytest.raises(ShapeError):
        sample_reparam(_gauss(0.0, 1.0), np.zeros(2))
