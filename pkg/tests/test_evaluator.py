from types import SimpleNamespace

import numpy as np
import pytest

from src.Dataset import GraphModel, NodewiseFit
from src.Errors import DimensionMismatch
from src.Evaluator import (BetaScale, EdgeScope, SingleEvaluator, beta_error, edge_rates, evaluate, gamma_error,
                           mu_error, omega_error_from_matrices)
from src.Simulation import SimulationConfig, generate_dataset


def symmetric(upper_values, p):
    m = np.zeros((p, p))
    m[np.triu_indices(p, 1)] = upper_values
    return m + m.T


def brute_force_rates(est, truth):
    tp = fp = positives = negatives = 0
    for e, t in zip(est, truth):
        p = t.shape[0]
        for j in range(p):
            for k in range(j + 1, p):
                if t[j, k] != 0.0:
                    positives += 1
                    tp += e[j, k] != 0.0
                else:
                    negatives += 1
                    fp += e[j, k] != 0.0
    return tp / positives, fp / negatives


def test_edge_rates_small_example():
    truth = [symmetric([1.0, 0.0, 1.0], 3)]
    est = [symmetric([0.7, 0.2, 0.0], 3)]
    assert edge_rates(est, truth) == (0.5, 1.0)


def test_edge_rates_by_scope():
    truth = [symmetric([1.0, 0.0, 0.0], 3), symmetric([0.0, 1.0, 0.0], 3)]
    est = [symmetric([1.0, 0.0, 1.0], 3), symmetric([0.0, 0.0, 0.0], 3)]
    assert edge_rates(est, truth, EdgeScope.POP) == (1.0, 0.5)
    assert edge_rates(est, truth, EdgeScope.COV) == (0.0, 0.0)
    assert edge_rates(est, truth, EdgeScope.ALL) == (0.5, 0.25)
    assert edge_rates(est[:1], truth[:1], EdgeScope.COV) == (1.0, 0.0)
    with pytest.raises(DimensionMismatch):
        edge_rates(est, truth[:1])


@pytest.mark.parametrize("seed", range(5))
def test_edge_rates_match_brute_force_and_ignore_relabelling(seed):
    rng = np.random.default_rng(seed)
    p = 7
    truth = [symmetric(rng.standard_normal(21) * (rng.random(21) < 0.3), p) for _ in range(3)]
    est = [symmetric(rng.standard_normal(21) * (rng.random(21) < 0.4), p) for _ in range(3)]
    rates = edge_rates(est, truth)
    assert rates == pytest.approx(brute_force_rates(est, truth))

    perm = rng.permutation(p)
    relabel = [m[np.ix_(perm, perm)] for m in est], [m[np.ix_(perm, perm)] for m in truth]
    assert edge_rates(*relabel) == pytest.approx(rates)


TRUE_B = (np.array([[2.0, -0.5], [-0.5, 1.0]]), np.array([[0.0, 0.2], [0.2, 0.0]]))


def node_fit(node, blocks, sigma2):
    return NodewiseFit(node, np.zeros(1), tuple(np.array([b]) for b in blocks), sigma2, 0.0, 1, 0.0)


def test_beta_error_on_both_scales():
    exact = [node_fit(0, [0.25, -0.1], 0.5), node_fit(1, [0.5, -0.2], 1.0)]
    assert beta_error(exact, TRUE_B) == pytest.approx(0.0, abs=1e-15)
    assert beta_error(exact, TRUE_B, BetaScale.PRECISION) == pytest.approx(0.0, abs=1e-15)

    off = [node_fit(0, [0.28, -0.06], 0.5), node_fit(1, [0.5, -0.2], 1.0)]
    assert beta_error(off, TRUE_B) == pytest.approx(0.05)
    assert beta_error(off, TRUE_B, BetaScale.PRECISION) == pytest.approx(0.1)
    with pytest.raises(DimensionMismatch):
        beta_error(off[:1], TRUE_B)


def test_gamma_error_sums_row_norms():
    assert gamma_error(np.array([[3.0, 4.0], [0.0, 1.0]]), np.zeros((2, 2))) == pytest.approx(6.0)
    with pytest.raises(DimensionMismatch):
        gamma_error(np.zeros((2, 2)), np.zeros((2, 3)))


def test_omega_error_ignores_diagonal():
    true = np.stack([np.eye(3)] * 4)
    est = true.copy()
    est[:, 0, 1] = est[:, 1, 0] = 0.1
    est[:, 2, 2] = 5.0
    assert omega_error_from_matrices(est, true) == pytest.approx(0.02)


def test_mu_error():
    model = GraphModel(np.array([[3.0], [4.0]]), (np.eye(2), np.zeros((2, 2))), np.ones(2))
    truth = SimpleNamespace(dataset=SimpleNamespace(U=np.array([[1.0]])), mu_per_subject=np.zeros((1, 2)))
    assert mu_error(model, truth) == pytest.approx(25.0)
    assert mu_error(model, truth, [SimpleNamespace(mu=np.array([1.0, 0.0]))]) == pytest.approx(1.0)


def test_report_mean_error_matches_mu_error():
    truth = generate_dataset(SimulationConfig(n=30, p=5, q=3, q_e=1, edge_prob=0.3, seed=6))
    model = GraphModel(np.zeros((5, 3)), truth.b, np.ones(5))
    assert evaluate(model, truth).mu_err == mu_error(model, truth)


def test_truth_scores_perfectly_against_itself():
    truth = generate_dataset(SimulationConfig(n=30, p=6, q=4, q_e=2, edge_prob=0.3, seed=2))
    report = evaluate(truth.as_model(), truth)
    assert report.tpr == 1.0 and report.fpr_overall == 0.0
    assert report.fpr_pop == 0.0
    assert report.beta_err == pytest.approx(0.0, abs=1e-12)
    assert report.gamma_err == 0.0
    assert report.omega_err == pytest.approx(0.0, abs=1e-24)
    assert report.mu_err == pytest.approx(0.0, abs=1e-18)
    assert report.omega_tpr == 1.0 and report.omega_fpr == 0.0
    assert report.ridge_repairs == 0
    assert set(report.to_dict()) >= {"tpr", "omega_err", "mu_err"}


def test_evaluator_rejects_mismatched_model():
    truth = generate_dataset(SimulationConfig(n=20, p=4, q=2, q_e=1, seed=0))
    model = GraphModel(np.zeros((3, 2)), tuple(np.zeros((3, 3)) for _ in range(3)), np.ones(3))
    with pytest.raises(DimensionMismatch):
        SingleEvaluator(model, truth)
