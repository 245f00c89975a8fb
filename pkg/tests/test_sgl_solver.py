import numpy as np
import pytest
from sklearn.linear_model import Lasso

from conftest import proximal_gradient_oracle, sgl_objective
from src.Dataset import PenaltyConfig
from src.Errors import DimensionMismatch
from src.SglSolver import (SglProblem, SolverOptions, SolverState, block_update_beta, block_update_gamma,
                           kkt_residual, objective, soft_threshold, solve)

TIGHT = SolverOptions(tol=1e-10, inner_tol=1e-12, standardize_columns=False)


def random_problem(seed, standardize=False):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(45, 61))
    q = int(rng.integers(1, 4))
    width = int(rng.integers(1, 5))
    n_blocks = int(rng.integers(2, 6))
    A_gamma = rng.standard_normal((n, q))
    blocks = [rng.standard_normal((n, width)) for _ in range(n_blocks)]
    truth = np.concatenate([rng.standard_normal(q) * (rng.random(q) < 0.5)] +
                           [rng.standard_normal(width) * (rng.random() < 0.5) for _ in blocks])
    A = np.hstack([A_gamma] + blocks)
    y = A @ truth + 0.5 * rng.standard_normal(n)
    top = np.abs(A.T @ y).max() / n
    penalty = PenaltyConfig(rng.uniform(0.01, 0.3) * top, rng.uniform(0.01, 0.3) * top)
    problem = SglProblem.build(y, A_gamma, blocks, penalty, standardize=standardize)
    slices, start = [], 0
    for w in [q, width] + [width] * (n_blocks - 1):
        slices.append(slice(start, start + w))
        start += w
    grouped = [False, False] + [True] * (n_blocks - 1)
    return problem, A, slices, grouped


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([3.0, -3.0, 0.5, -0.5]), 1.0), [2.0, -2.0, 0.0, -0.0])
    with pytest.raises(ValueError):
        soft_threshold(np.array([1.0]), -1.0)


def test_zero_response_gives_zero_solution():
    rng = np.random.default_rng(0)
    problem = SglProblem.build(np.zeros(20), rng.standard_normal((20, 2)),
                               [rng.standard_normal((20, 3)), rng.standard_normal((20, 3))], PenaltyConfig(0.1, 0.1))
    sol = solve(problem)
    assert not np.any(sol.gamma)
    assert not any(np.any(block) for block in sol.beta_blocks)
    assert sol.objective == 0.0
    assert sol.converged


@pytest.mark.parametrize("seed", range(25))
def test_matches_proximal_gradient_oracle(seed):
    problem, A, slices, grouped = random_problem(seed)
    sol = solve(problem, TIGHT)
    lam, lam_g = problem.penalty.lam, problem.penalty.lam_g
    reference = sgl_objective(problem.y, A, slices, grouped, lam, lam_g,
                              proximal_gradient_oracle(problem.y, A, slices, grouped, lam, lam_g))
    assert abs(sol.objective - reference) <= 1e-7 * max(1.0, abs(reference))
    assert kkt_residual(problem, sol) <= 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(25, 100))
def test_matches_proximal_gradient_oracle_extended(seed):
    test_matches_proximal_gradient_oracle(seed)


@pytest.mark.parametrize("seed", range(10))
def test_objective_is_monotone(seed):
    problem, _, _, _ = random_problem(seed, standardize=True)
    sol = solve(problem, SolverOptions(tol=1e-9))
    path = np.array(sol.objective_path)
    assert len(path) >= 2
    assert np.all(np.diff(path) <= 1e-10 * np.maximum(1.0, np.abs(path[:-1])))


def test_standardized_solution_satisfies_kkt():
    problem, _, _, _ = random_problem(3, standardize=True)
    sol = solve(problem, SolverOptions(tol=1e-10, inner_tol=1e-12))
    assert kkt_residual(problem, sol) <= 1e-6
    # the objective is evaluated at the returned point
    assert sol.objective == pytest.approx(objective(problem, sol.gamma, sol.beta_blocks), rel=1e-12)


def test_warm_start_reaches_same_solution():
    problem, _, _, _ = random_problem(4)
    opts = SolverOptions(tol=1e-8, standardize_columns=False)
    neighbour = solve(problem.with_penalty(PenaltyConfig(problem.penalty.lam * 1.3, problem.penalty.lam_g * 1.3)), opts)
    warm = solve(problem, opts, warm_start=neighbour)
    cold = solve(problem, opts)
    assert kkt_residual(problem, warm) <= 100 * opts.tol
    assert warm.objective == pytest.approx(cold.objective, rel=1e-6)


def test_large_group_penalty_zeroes_grouped_blocks_only():
    problem, _, _, _ = random_problem(5)
    heavy = problem.with_penalty(PenaltyConfig(problem.penalty.lam, 1e6))
    sol = solve(heavy, TIGHT)
    assert all(not np.any(block) for block in sol.beta_blocks[1:])
    assert kkt_residual(heavy, sol) <= 1e-6


def test_single_block_updates_do_not_increase_objective():
    problem, _, _, _ = random_problem(6)
    state = SolverState.initial(problem)
    values = [objective(problem, *state.coefficients(problem))]
    state = block_update_gamma(problem, state, TIGHT)
    values.append(objective(problem, *state.coefficients(problem)))
    for h in range(len(problem.A_beta_blocks)):
        state = block_update_beta(problem, h, state, TIGHT)
        values.append(objective(problem, *state.coefficients(problem)))
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    with pytest.raises(IndexError):
        block_update_beta(problem, len(problem.A_beta_blocks), state, TIGHT)


def test_constant_columns_are_dropped():
    rng = np.random.default_rng(8)
    n = 30
    A_gamma = np.column_stack([np.ones(n), rng.standard_normal(n)])
    blocks = [rng.standard_normal((n, 2)), rng.standard_normal((n, 2))]
    y = rng.standard_normal(n) + 3.0
    problem = SglProblem.build(y, A_gamma, blocks, PenaltyConfig(0.01, 0.01))
    assert problem.dropped[0]
    sol = solve(problem)
    assert sol.gamma[0] == 0.0


def test_rows_must_match():
    with pytest.raises(DimensionMismatch):
        SglProblem.build(np.zeros(10), np.zeros((9, 2)), [np.zeros((10, 2))], PenaltyConfig(0.1, 0.1))


def test_objective_of_exact_fit_is_the_penalty():
    problem = SglProblem.build(np.ones(4), np.ones((4, 1)), [np.zeros((4, 1))], PenaltyConfig(0.5, 0.0),
                               standardize=False)
    assert objective(problem, np.array([1.0]), (np.zeros(1),)) == pytest.approx(0.5)
    assert objective(problem, np.zeros(1), (np.zeros(1),)) == pytest.approx(0.5)


def test_single_coordinate_gamma_update_is_closed_form():
    a = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([2.0, 0.0, 1.0, 0.5])
    problem = SglProblem.build(y, a, [np.zeros((4, 1))], PenaltyConfig(0.3, 0.0), standardize=False)
    state = SolverState.initial(problem, np.array([0.5]), (np.zeros(1),))
    c = float(a[:, 0] @ state.residual) / 4
    updated = block_update_gamma(problem, state, TIGHT)
    gamma, _ = updated.coefficients(problem)
    assert gamma[0] == pytest.approx(soft_threshold(c + 0.5, 0.3))
    assert gamma[0] == pytest.approx(0.325)
    np.testing.assert_allclose(updated.residual, y - a[:, 0] * gamma[0], atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_zero_group_penalty_reduces_to_lasso(seed):
    problem, A, _, _ = random_problem(seed)
    lasso_problem = problem.with_penalty(PenaltyConfig(problem.penalty.lam, 0.0))
    sol = solve(lasso_problem, TIGHT)
    reference = Lasso(alpha=lasso_problem.penalty.lam, fit_intercept=False, tol=1e-14, max_iter=1_000_000)
    reference.fit(A, lasso_problem.y)
    coef = np.concatenate([sol.gamma, *sol.beta_blocks])
    np.testing.assert_allclose(coef, reference.coef_, atol=1e-6)
