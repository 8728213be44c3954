"""
Tests for the label prior and its identifiability diagnostic
"""
import numpy as np
import pytest
from scipy.integrate import trapezoid

from engine.ndmath import Tensor
from models.dataset import LabelColumn, LabelKind, LabelSpec
from models.priors import (GaussParams, LabelPrior, check_conditions, gauss_log_prob, init_label_prior,
                           natural_params, prior_log_prob, prior_params)
from utils.errors import ArgumentError, LabelError, ShapeError
from utils.rng import make_rng

LOG_2PI = np.log(2.0 * np.pi)


def _table_prior(means, variances):
    """Discrete prior with one class per row of the given tables"""
    means = np.asarray(means, dtype=np.float64)
    spec = LabelSpec((LabelColumn('c', LabelKind.DISCRETE, means.shape[0]),))
    return LabelPrior(spec, means.shape[1], table_mean=Tensor(means),
                      table_log_var=Tensor(np.log(np.asarray(variances, dtype=np.float64))))


def test_discrete_label_reads_its_table_row(discrete_spec):
    p = init_label_prior(discrete_spec, 2, make_rng(0))
    g = prior_params(np.array([0.0]), p)
    np.testing.assert_array_equal(g.mean.data, p.table_mean.data[0])
    np.testing.assert_array_equal(g.log_var.data, p.table_log_var.data[0])


def test_zero_weight_network_returns_output_biases(continuous_spec):
    p = init_label_prior(continuous_spec, 2, make_rng(1), hidden=3)
    for w in p.net.weights:
        w.data = np.zeros_like(w.data)
    p.net.biases[-1].data = np.array([0.5, -1.0, 0.2, -0.3])
    for u in (0.0, 2.5, -7.0):
        g = prior_params(np.array([u]), p)
        np.testing.assert_allclose(g.mean.data, [0.5, -1.0])
        np.testing.assert_allclose(g.log_var.data, [0.2, -0.3])


def test_mixed_labels_feed_value_and_one_hot():
    spec = LabelSpec((LabelColumn('pos', LabelKind.CONTINUOUS), LabelColumn('dir', LabelKind.DISCRETE, 3)))
    assert spec.network_input_dim == 4
    p = init_label_prior(spec, 2, make_rng(2))
    assert p.net.in_dim == 4
    g = prior_params(np.array([[0.3, 2.0], [1.1, 0.0]]), p)
    assert g.mean.shape == (2, 2)


def test_log_prob_at_the_mean_with_unit_variance():
    p = _table_prior([[1.5, -0.5]], [[1.0, 1.0]])
    assert prior_log_prob(np.array([1.5, -0.5]), np.array([0.0]), p).item() == pytest.approx(-LOG_2PI)
    assert prior_log_prob(np.array([1.5, -0.5]), np.array([0.0]), p).item() == pytest.approx(-1.83788, abs=1e-5)


def test_log_prob_one_dimension():
    g = GaussParams(Tensor([0.0]), Tensor([0.0]))
    assert gauss_log_prob(np.array([1.0]), g).item() == pytest.approx(-0.5 * LOG_2PI - 0.5)
    assert gauss_log_prob(np.array([1.0]), g).item() == pytest.approx(-1.41894, abs=1e-5)


def test_log_prob_matches_grid_integration():
    g = GaussParams(Tensor([0.4]), Tensor([np.log(0.7)]))
    grid = np.linspace(-12.0, 12.0, 20001)
    density = np.exp(gauss_log_prob(grid[:, None], g).data)
    assert trapezoid(density, grid) == pytest.approx(1.0, abs=1e-10)


def test_log_prob_shape_mismatch():
    p = _table_prior([[0.0, 0.0]], [[1.0, 1.0]])
    with pytest.raises(ShapeError):
        prior_log_prob(np.zeros(3), np.array([0.0]), p)


@pytest.mark.parametrize('mean,var,expected', [
    (0.0, 1.0, [0.0, -0.5]),
    (1.0, 1.0, [1.0, -0.5]),
    (0.0, 2.0, [0.0, -0.25]),
])
def test_natural_params(mean, var, expected):
    g = GaussParams(Tensor([mean]), Tensor([np.log(var)]))
    np.testing.assert_allclose(natural_params(g), expected, rtol=1e-12)


def test_check_conditions_hand_example():
    p = _table_prior([[0.0], [1.0], [0.0]], [[1.0], [1.0], [2.0]])
    report = check_conditions(p, [[0.0], [1.0], [2.0]])
    np.testing.assert_allclose(report.L, [[1.0, 0.0], [0.0, 0.25]], atol=1e-12)
    assert report.determinant == pytest.approx(0.25)
    assert report.invertible
    assert report.rank == 2


def test_check_conditions_degenerate_prior():
    p = _table_prior([[0.3]] * 3, [[1.5]] * 3)
    report = check_conditions(p, [[0.0], [1.0], [2.0]])
    np.testing.assert_array_equal(report.L, np.zeros((2, 2)))
    assert not report.invertible
    assert report.to_dict()['condition_number'] is None


def test_check_conditions_rejects_duplicates_and_wrong_count():
    p = _table_prior([[0.0], [1.0], [0.0]], [[1.0], [1.0], [2.0]])
    with pytest.raises(ArgumentError):
        check_conditions(p, [[0.0], [0.0], [2.0]])
    with pytest.raises(ArgumentError):
        check_conditions(p, [[0.0], [1.0]])


def test_fresh_table_prior_meets_the_conditions():
    spec = LabelSpec((LabelColumn('cluster', LabelKind.DISCRETE, 5),))
    p = init_label_prior(spec, 2, make_rng(0))
    assert check_conditions(p, spec.combination_labels()).invertible


def test_label_validation(discrete_spec, continuous_spec):
    p = init_label_prior(discrete_spec, 2, make_rng(3))
    with pytest.raises(LabelError):
        prior_params(np.array([3.0]), p)
    with pytest.raises(LabelError):
        prior_params(np.array([0.5]), p)
    q = init_label_prior(continuous_spec, 2, make_rng(4))
    with pytest.raises(LabelError):
        prior_params(np.array([np.inf]), q)
