import numpy as np
import pytest

from src.Dataset import PenaltyConfig, SymmetrizationRule
from src.Discovery import Discovery
from src.Errors import NodeFitError, SolverDiverged
from src.Monitor import FIT_LOG_COLUMNS, FitMonitor
from src.NodewiseRegression import fit_node
from src.Tuning import PenaltyGrid

GRID = PenaltyGrid(alphas=(0.5, 1.0), n_lambda0=6, folds=3, seed=1)
PENALTY = PenaltyConfig.from_mixture(0.5, 0.03)


def assert_same_model(a, b):
    np.testing.assert_array_equal(a.gamma_hat, b.gamma_hat)
    np.testing.assert_array_equal(a.sigma2, b.sigma2)
    for x, y in zip(a.b_tilde, b.b_tilde):
        np.testing.assert_array_equal(x, y)


def test_serial_and_parallel_fits_agree(small_dataset):
    serial = Discovery.fit_fixed(small_dataset, PENALTY, threads=1, progress=False)
    parallel = Discovery.fit_fixed(small_dataset, PENALTY, threads=2, progress=False)
    assert_same_model(serial, parallel)


def test_fit_cspine_selects_penalties_per_node(small_dataset):
    monitor = FitMonitor()
    model = Discovery.fit_cspine(small_dataset, grid=GRID, threads=1, progress=False, monitor=monitor)
    assert model.p == 3 and model.q == 2
    assert len(model.fits) == 3
    for fit in model.fits:
        assert fit.penalty.alpha_s in GRID.alphas
    assert model.settings["folds"] == 3
    assert model.settings["seed"] == 1

    table = monitor.cv_table()
    assert len(table) == 3 * 2 * 6
    log = monitor.fit_log()
    assert list(log.columns) == FIT_LOG_COLUMNS
    assert log["node"].tolist() == [0, 1, 2]
    assert not log["failed"].any()


def test_fit_cspine_is_reproducible(small_dataset):
    first = Discovery.fit_cspine(small_dataset, grid=GRID, threads=1, progress=False)
    second = Discovery.fit_cspine(small_dataset, grid=GRID, threads=1, progress=False)
    assert_same_model(first, second)


def test_shared_lambda_uses_one_penalty(small_dataset):
    model = Discovery.fit_cspine(small_dataset, grid=GRID, threads=1, progress=False, shared_lambda=True)
    penalties = {(fit.penalty.lam, fit.penalty.lam_g) for fit in model.fits}
    assert len(penalties) == 1
    assert model.settings["shared_lambda"] is True


def test_strong_edge_is_recovered(edge_dataset):
    model = Discovery.fit_cspine(edge_dataset, grid=GRID, threads=1, progress=False)
    assert model.b_tilde[0][0, 1] < 0.0
    assert model.b_tilde[0][0, 1] == pytest.approx(-0.4, abs=0.15)


def test_or_rule_is_passed_through(small_dataset):
    model = Discovery.fit_fixed(small_dataset, PENALTY, threads=1, progress=False, rule=SymmetrizationRule.OR)
    assert model.symmetrization_rule is SymmetrizationRule.OR


def failing_on_node_one(d, j, *args, **kwargs):
    if j == 1:
        raise SolverDiverged("diverged")
    return fit_node(d, j, *args, **kwargs)


def test_failing_node_aborts(small_dataset, monkeypatch):
    monkeypatch.setattr("src.Discovery.fit_node", failing_on_node_one)
    with pytest.raises(NodeFitError) as info:
        Discovery.fit_fixed(small_dataset, PENALTY, threads=1, progress=False)
    assert info.value.node == 1


def test_keep_going_replaces_failing_node(small_dataset, monkeypatch):
    monkeypatch.setattr("src.Discovery.fit_node", failing_on_node_one)
    monitor = FitMonitor()
    model = Discovery.fit_fixed(small_dataset, PENALTY, threads=1, progress=False, keep_going=True, monitor=monitor)
    failed = model.fits[1]
    assert not failed.converged
    assert not np.any(failed.beta) and not np.any(failed.gamma)
    assert not np.any(model.b_tilde[0][1, [0, 2]])
    assert monitor.fit_log()["failed"].tolist() == [False, True, False]


def test_refit_node_reproduces_stored_fit(small_dataset):
    model = Discovery.fit_fixed(small_dataset, PENALTY, threads=1, progress=False, center=True)
    refit = Discovery.refit_node(small_dataset, model, 2)
    stored = model.fits[2]
    np.testing.assert_array_equal(refit.beta, stored.beta)
    np.testing.assert_array_equal(refit.gamma, stored.gamma)
    assert refit.sigma2 == stored.sigma2
