"""
Tests for latent inference, label decoding and marginal likelihood
"""
import numpy as np
import pytest

from engine.inference import (decode_continuous, decode_discrete, decode_grid, infer_latents, log_lik_matrix,
                              log_mean_exp, marginal_log_lik, marginal_log_lik_with_error, normalize_log_evidence,
                              prior_means)
from engine.ndmath import Tensor
from models.dataset import LabelColumn, LabelKind, LabelSpec, LabelSupport
from models.flows import decoder_forward
from models.pivae import ModelArch, elbo, init_pivae, model_rates, poisson_log_lik
from models.priors import prior_params
from models.recognition import encode
from utils.errors import ArgumentError, ConfigError, ShapeError, UnsupportedError
from utils.rng import make_rng


def _constant_rates(value, n):
    return lambda z: Tensor(np.full(z.shape[:-1] + (n,), value))


def _two_class_params(mean0, mean1, log_var=0.0):
    spec = LabelSpec((LabelColumn('side', LabelKind.DISCRETE, 2),))
    params = init_pivae(ModelArch(obs_dim=6, latent_dim=2, label_spec=spec, encoder_hidden=4), seed=21)
    params.prior.table_mean.data = np.array([mean0, mean1], dtype=np.float64)
    params.prior.table_log_var.data = np.full((2, 2), log_var)
    return params


def _counts(rng, rows=5, n=6):
    return rng.poisson(2.0, size=(rows, n)).astype(np.float64)


# ----------------------------------------------------------------------
# Latents
# ----------------------------------------------------------------------

def test_without_label_prior_returns_encoder_means(tiny_discrete_params):
    x = _counts(make_rng(0))
    expected = encode(x, tiny_discrete_params.encoder).mean.data
    np.testing.assert_array_equal(infer_latents(tiny_discrete_params, x, use_label_prior=False), expected)


def test_with_label_prior_lies_between_encoder_and_prior(tiny_discrete_params):
    rng = make_rng(1)
    x, u = _counts(rng, 8), rng.integers(0, 3, size=(8, 1)).astype(np.float64)
    post = infer_latents(tiny_discrete_params, x, u)
    enc = infer_latents(tiny_discrete_params, x, use_label_prior=False)
    prior = prior_means(tiny_discrete_params, u)
    assert post.shape == (8, 2)
    low, high = np.minimum(enc, prior), np.maximum(enc, prior)
    assert np.all((post >= low - 1e-12) & (post <= high + 1e-12))


def test_label_prior_needs_labels_and_a_pi_vae(tiny_discrete_params, tiny_vanilla_params):
    x = _counts(make_rng(2))
    with pytest.raises(ArgumentError):
        infer_latents(tiny_discrete_params, x, None, use_label_prior=True)
    with pytest.raises(ArgumentError):
        infer_latents(tiny_vanilla_params, x, np.zeros((5, 1)), use_label_prior=True)
    with pytest.raises(ShapeError):
        infer_latents(tiny_discrete_params, np.ones((2, 5)), use_label_prior=False)


# ----------------------------------------------------------------------
# Decoding
# ----------------------------------------------------------------------

def test_identical_priors_give_even_odds():
    params = _two_class_params([0.5, -0.5], [0.5, -0.5])
    result = decode_discrete(params, _counts(make_rng(3)), samples=20, seed=1, common_random_numbers=True)
    np.testing.assert_allclose(result.posterior, 0.5, atol=1e-12)
    np.testing.assert_array_equal(result.estimate, 0)


def test_discrete_posterior_is_normalised(tiny_discrete_params):
    result = decode_discrete(tiny_discrete_params, _counts(make_rng(4), 10), samples=30, seed=2)
    assert result.posterior.shape == (10, 3)
    np.testing.assert_allclose(result.posterior.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(result.estimated_labels[:, 0], result.estimate)


def test_separable_classes_decode_with_confidence():
    params = _two_class_params([-5.0, 0.0], [5.0, 0.0])
    w = np.array([[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]])
    rates = lambda z: ((z[..., :1] @ Tensor(w)) * 0.5 + 1.5).exp()
    x = np.round(np.exp(1.5 + 2.5 * w))
    result = decode_discrete(params, x, samples=200, seed=3, rate_fn=rates)
    assert result.estimate[0] == 1
    assert result.posterior[0, 1] > 0.99


def test_decoding_is_deterministic_given_the_seed(tiny_discrete_params):
    x = _counts(make_rng(5))
    a = decode_discrete(tiny_discrete_params, x, samples=15, seed=8)
    b = decode_discrete(tiny_discrete_params, x, samples=15, seed=8)
    np.testing.assert_array_equal(a.log_evidence, b.log_evidence)


def test_normalisation_ignores_a_common_shift():
    log_ev = make_rng(6).standard_normal((4, 5)) * 30.0
    np.testing.assert_allclose(normalize_log_evidence(log_ev + 700.0), normalize_log_evidence(log_ev), atol=1e-12)


def test_continuous_posterior_over_a_grid(tiny_continuous_params):
    grid = np.linspace(0.0, 6.0, 25)
    result = decode_continuous(tiny_continuous_params, _counts(make_rng(7), 4), grid, samples=20, seed=4)
    np.testing.assert_allclose(result.posterior.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((result.posterior_mean >= 0.0) & (result.posterior_mean <= 6.0))
    assert set(result.map_estimate) <= set(grid)


def test_symmetric_model_centres_the_posterior_mean(tiny_continuous_params):
    grid = np.linspace(-2.0, 2.0, 11)
    result = decode_continuous(tiny_continuous_params, _counts(make_rng(8), 3), grid, samples=5, seed=0,
                               rate_fn=_constant_rates(2.0, 6))
    np.testing.assert_allclose(result.posterior, 1.0 / 11, atol=1e-12)
    np.testing.assert_allclose(result.posterior_mean, 0.0, atol=1e-12)


def test_decoder_variant_errors(tiny_discrete_params, tiny_continuous_params, tiny_vanilla_params):
    x = _counts(make_rng(9))
    with pytest.raises(ConfigError):
        decode_discrete(tiny_discrete_params, x, samples=0)
    with pytest.raises(ArgumentError):
        decode_discrete(tiny_vanilla_params, x)
    with pytest.raises(ArgumentError):
        decode_discrete(tiny_continuous_params, x)
    with pytest.raises(UnsupportedError):
        decode_continuous(tiny_discrete_params, x, [0.0, 1.0])
    spec = LabelSpec((LabelColumn('a', LabelKind.CONTINUOUS), LabelColumn('b', LabelKind.CONTINUOUS)))
    two = init_pivae(ModelArch(obs_dim=6, latent_dim=2, label_spec=spec, encoder_hidden=4), seed=0)
    with pytest.raises(UnsupportedError):
        decode_continuous(two, x, [0.0, 1.0])


def _mixed_params():
    spec = LabelSpec((LabelColumn('direction', LabelKind.DISCRETE, 2), LabelColumn('position', LabelKind.CONTINUOUS)))
    return init_pivae(ModelArch(obs_dim=6, latent_dim=2, label_spec=spec, encoder_hidden=4, prior_hidden=5), seed=22)


def test_mixed_labels_decode_the_continuous_column():
    params = _mixed_params()
    grid = np.linspace(0.0, 2.0, 7)
    x = _counts(make_rng(10), 4)
    result = decode_continuous(params, x, grid, samples=30, seed=3, common_random_numbers=True)
    assert result.posterior.shape == (4, 7)
    np.testing.assert_allclose(result.posterior.sum(axis=1), 1.0, atol=1e-12)

    eps = make_rng(3, 'decode-continuous').standard_normal((30, 2))
    rates = model_rates(params)
    expected = np.empty((4, 7))
    for g, position in enumerate(grid):
        per_direction = []
        for direction in (0.0, 1.0):
            prior = prior_params(np.array([direction, position]), params.prior)
            z = prior.mean.data + np.exp(0.5 * prior.log_var.data) * eps
            per_direction.append(log_mean_exp(log_lik_matrix(x, rates(Tensor(z)).data), axis=1))
        expected[:, g] = np.logaddexp(*per_direction) - np.log(2.0)
    np.testing.assert_allclose(result.log_evidence, expected, rtol=1e-12)


def test_mixed_labels_with_a_flat_decoder_give_a_flat_posterior():
    result = decode_continuous(_mixed_params(), _counts(make_rng(11), 3), np.linspace(-1.0, 1.0, 5), samples=4,
                               rate_fn=_constant_rates(1.5, 6))
    np.testing.assert_allclose(result.posterior, 0.2, atol=1e-12)


def test_decode_grid_spans_the_training_range(continuous_spec):
    support = LabelSupport.from_labels(continuous_spec, np.array([[1.0], [4.0], [2.5]]))
    np.testing.assert_allclose(decode_grid(support, 4), [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(UnsupportedError):
        decode_grid(LabelSupport(), 4)


# ----------------------------------------------------------------------
# Marginal likelihood
# ----------------------------------------------------------------------

def test_log_mean_exp_of_equal_entries_is_that_entry():
    a = np.full((3, 7), -123.456)
    np.testing.assert_allclose(log_mean_exp(a, axis=1), np.full(3, -123.456), rtol=1e-15)


def test_log_mean_exp_survives_extreme_magnitudes():
    a = np.array([[-1e4, -1e4 + np.log(3.0)], [800.0, 800.0]])
    np.testing.assert_allclose(log_mean_exp(a, axis=1), [-1e4 + np.log(2.0), 800.0], rtol=1e-14)
    np.testing.assert_allclose(log_mean_exp(a.T, axis=0), log_mean_exp(a, axis=1), rtol=1e-15)


@pytest.mark.parametrize('samples', [1, 10, 250])
def test_constant_decoder_marginal_is_the_likelihood(tiny_discrete_params, samples):
    x = np.array([1.0, 0.0, 3.0, 2.0, 0.0, 5.0])
    expected = poisson_log_lik(x, np.full(6, 1.3)).item()
    value = marginal_log_lik(tiny_discrete_params, x, np.array([2.0]), samples=samples, seed=5,
                             rate_fn=_constant_rates(1.3, 6))
    assert isinstance(value, float)
    assert value == pytest.approx(expected, rel=1e-12)


def test_single_sample_uses_its_one_draw(tiny_discrete_params):
    params = tiny_discrete_params
    x = np.array([[2.0, 1.0, 0.0, 1.0, 3.0, 0.0]])
    u = np.array([[1.0]])
    g = prior_params(u[0], params.prior)
    eps = make_rng(6, 'marginal', 0).standard_normal((1, 2))
    z = g.mean.data + np.exp(0.5 * g.log_var.data) * eps
    expected = poisson_log_lik(x[0], decoder_forward(z[0], params.decoder)).item()
    assert marginal_log_lik(params, x, u, samples=1, seed=6)[0] == pytest.approx(expected, rel=1e-10)
    assert np.isinf(marginal_log_lik_with_error(params, x, u, samples=1, seed=6).std_error[0])


def test_marginal_spread_shrinks_with_more_samples(tiny_discrete_params):
    x = np.array([2.0, 1.0, 0.0, 1.0, 3.0, 0.0])
    u = np.array([0.0])

    def spread(samples):
        return np.std([marginal_log_lik(tiny_discrete_params, x, u, samples=samples, seed=s) for s in range(20)])

    assert spread(1000) < spread(10)


def test_marginal_bounds_the_elbo(tiny_discrete_params):
    params = tiny_discrete_params
    x = np.array([[1.0, 2.0, 0.0, 1.0, 2.0, 1.0]])
    u = np.array([[2.0]])
    eps = make_rng(7).standard_normal((500, 2))
    expected_elbo = np.mean([elbo(x, u, params, e[None, :]).item() for e in eps])
    estimate = marginal_log_lik_with_error(params, x, u, samples=10000, seed=7)
    assert estimate.log_lik[0] >= expected_elbo - 3.0 * estimate.std_error[0]


def test_marginal_over_labels_needs_a_support(tiny_discrete_params, discrete_spec):
    x = _counts(make_rng(10), 3)
    with pytest.raises(ArgumentError):
        marginal_log_lik(tiny_discrete_params, x, samples=5)
    support = LabelSupport.from_labels(discrete_spec, np.array([[0.0], [1.0], [2.0]]))
    values = marginal_log_lik(tiny_discrete_params, x, samples=5, support=support)
    assert values.shape == (3,) and np.all(np.isfinite(values))


def test_vanilla_marginal_uses_the_standard_normal(tiny_vanilla_params):
    x = _counts(make_rng(11), 2)
    est = marginal_log_lik_with_error(tiny_vanilla_params, x, np.zeros((2, 1)), samples=50, seed=1)
    assert est.log_lik.shape == (2,)
    assert np.all(np.isfinite(est.std_error))
    with pytest.raises(ConfigError):
        marginal_log_lik(tiny_vanilla_params, x, samples=0)
