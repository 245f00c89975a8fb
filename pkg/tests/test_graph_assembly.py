import logging

import numpy as np
import pytest

from src.Dataset import GraphModel, PenaltyConfig, SymmetrizationRule
from src.Errors import DimensionMismatch
from src.GraphAssembly import assemble_model, edge_sets, edge_table, predict_all, predict_subject, symmetrize
from src.NodewiseRegression import fit_node

# per node the off-diagonal entries of one component, in column order without the node itself
NODE_BLOCKS = [
    (np.array([-0.3, 0.0]),),
    (np.array([-0.5, 0.2]),),
    (np.array([0.1, 0.0]),),
]
SIGMA2 = np.array([0.5, 1.0, 2.0])


def test_and_rule_keeps_smaller_magnitude():
    (b0,) = symmetrize(NODE_BLOCKS, SIGMA2, SymmetrizationRule.AND)
    expected = np.array([
        [2.0, -0.3, 0.0],
        [-0.3, 1.0, 0.0],
        [0.0, 0.0, 0.5],
    ])
    np.testing.assert_array_equal(b0, expected)


def test_or_rule_keeps_larger_magnitude():
    (b0,) = symmetrize(NODE_BLOCKS, SIGMA2, SymmetrizationRule.OR)
    expected = np.array([
        [2.0, -0.5, 0.1],
        [-0.5, 1.0, 0.2],
        [0.1, 0.2, 0.5],
    ])
    np.testing.assert_array_equal(b0, expected)


def test_covariate_components_have_zero_diagonal():
    blocks = [block + (0.5 * block[0],) for block in NODE_BLOCKS]
    b0, b1 = symmetrize(blocks, SIGMA2, SymmetrizationRule.OR)
    assert not np.any(np.diag(b1))
    np.testing.assert_array_equal(b1, b1.T)
    np.testing.assert_array_equal(b1, 0.5 * (b0 - np.diag(np.diag(b0))))


def test_tie_keeps_lower_indexed_value(caplog):
    blocks = [(np.array([0.3]),), (np.array([-0.3]),)]
    with caplog.at_level(logging.WARNING, logger="src.GraphAssembly"):
        (b0,) = symmetrize(blocks, np.ones(2), SymmetrizationRule.AND)
    assert b0[0, 1] == b0[1, 0] == 0.3
    assert "tie" in caplog.text


def test_symmetrize_rejects_wrong_node_count():
    with pytest.raises(DimensionMismatch):
        symmetrize(NODE_BLOCKS[:2], SIGMA2)


@pytest.fixture
def fitted_nodes(small_dataset):
    penalty = PenaltyConfig.from_mixture(0.5, 0.03)
    return [fit_node(small_dataset, j, penalty) for j in range(small_dataset.p)]


def test_assembled_model_is_symmetric_and_and_within_or(fitted_nodes):
    model_and = assemble_model(fitted_nodes, SymmetrizationRule.AND)
    model_or = assemble_model(list(reversed(fitted_nodes)), SymmetrizationRule.OR)
    assert model_and.gamma_hat.shape == (3, 2)
    for b_and, b_or in zip(model_and.b_tilde, model_or.b_tilde):
        np.testing.assert_array_equal(b_and, b_and.T)
        assert np.all((b_and != 0.0) <= (b_or != 0.0))
    np.testing.assert_array_equal(np.diag(model_and.b_tilde[0]), 1.0 / model_and.sigma2)
    for (_, a), (_, b) in zip(edge_sets(model_and).items(), edge_sets(model_or).items()):
        assert set(a) <= set(b)


def test_assemble_requires_every_node(fitted_nodes):
    with pytest.raises(DimensionMismatch):
        assemble_model(fitted_nodes[1:])


def two_node_model(b0, gamma=(2.0, 0.0)):
    return GraphModel(
        gamma_hat=np.array(gamma, dtype=float).reshape(2, 1),
        b_tilde=(np.array(b0, dtype=float), np.zeros((2, 2))),
        sigma2=np.ones(2),
    )


def test_prediction_at_zero_covariates_has_zero_mean():
    prediction = predict_subject(two_node_model([[1.0, -0.3], [-0.3, 1.0]]), [0.0])
    np.testing.assert_array_equal(prediction.mu, [0.0, 0.0])
    assert prediction.ridge_added == 0.0


def test_prediction_matches_closed_form():
    prediction = predict_subject(two_node_model([[1.0, -0.3], [-0.3, 1.0]]), [1.0])
    np.testing.assert_allclose(prediction.mu, [2.0 / 0.91, 0.6 / 0.91], rtol=1e-12)


def test_indefinite_precision_is_ridged(caplog):
    model = two_node_model([[1.0, 2.0], [2.0, 1.0]], gamma=(0.0, 0.0))
    with caplog.at_level(logging.WARNING, logger="src.GraphAssembly"):
        prediction = predict_subject(model, [1.0])
    assert prediction.ridge_added == pytest.approx(1.0 + 1e-6, rel=1e-9)
    assert np.linalg.eigvalsh(prediction.omega)[0] > 0.0
    np.testing.assert_array_equal(prediction.mu, [0.0, 0.0])
    assert "ridge" in caplog.text


def test_predict_all_rows(fitted_nodes, small_dataset):
    model = assemble_model(fitted_nodes)
    predictions = predict_all(model, small_dataset.U[:4])
    assert len(predictions) == 4
    for prediction, u in zip(predictions, small_dataset.U[:4]):
        np.testing.assert_array_equal(prediction.mu, predict_subject(model, u).mu)


def test_edge_threshold():
    model = GraphModel(
        gamma_hat=np.zeros((3, 1)),
        b_tilde=(np.array([[1.0, 0.2, 0.05], [0.2, 1.0, 0.0], [0.05, 0.0, 1.0]]),
                 np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -0.3], [0.0, -0.3, 0.0]])),
        sigma2=np.ones(3),
    )
    assert edge_sets(model) == {0: [(0, 1), (0, 2)], 1: [(1, 2)]}
    assert edge_sets(model, threshold=0.1) == {0: [(0, 1)], 1: [(1, 2)]}
    table = edge_table(model, threshold=0.1)
    assert list(table.columns) == ["h", "j", "k", "weight"]
    assert table["weight"].tolist() == [0.2, -0.3]
    with pytest.raises(ValueError):
        edge_sets(model, threshold=-1.0)
