import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.Dataset import Dataset, NodewiseFit, PenaltyConfig, Sigma2Estimator
from src.Errors import DegenerateDoF, NonFinite, SolverDiverged, ZeroVariance
from src.SglSolver import SglProblem, SglSolution, SolverOptions, kkt_residual, solve

logger = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class InteractionDesign:
    """
    Design of the regression of response j on the other responses and their
    interactions with every covariate.

    Attributes:
    -----------
    node : int
    W : np.ndarray
        n x (p-1)(q+1) matrix laid out as [X_-j | X_-j * u_1 | ... | X_-j * u_q].
    others : tuple[int, ...]
        The responses k != j in their original order.
    column_index_map : dict
        (h, k) -> flat column of W.
    """
    node: int
    W: np.ndarray
    others: tuple
    column_index_map: dict

    @property
    def block_width(self) -> int:
        return len(self.others)

    @property
    def blocks(self) -> tuple:
        width = self.block_width
        return tuple(self.W[:, h * width:(h + 1) * width] for h in range(self.W.shape[1] // width))


def build_interaction_design(d: Dataset, j: int) -> InteractionDesign:
    if not 0 <= j < d.p:
        raise IndexError(f"Node {j} out of range for p={d.p}")
    others = tuple(k for k in range(d.p) if k != j)
    X_minus = d.X[:, others]
    blocks = [X_minus] + [X_minus * d.U[:, [h]] for h in range(d.q)]
    W = np.hstack(blocks)
    width = len(others)
    column_index_map = {(h, k): h * width + i for h in range(d.q + 1) for i, k in enumerate(others)}
    return InteractionDesign(j, W, others, column_index_map)


def node_problem(d: Dataset, j: int, penalty: PenaltyConfig, opts: SolverOptions = SolverOptions(),
                 design: Optional[InteractionDesign] = None) -> SglProblem:
    """
    Sparse-group lasso problem with y = x_j, A_gamma = U and the interaction blocks.
    """
    if design is None:
        design = build_interaction_design(d, j)
    return SglProblem.build(d.X[:, j], d.U, design.blocks, penalty, standardize=opts.standardize_columns)


def estimate_sigma2(y, fitted, s_beta: int, s_gamma: int, estimator: Sigma2Estimator = Sigma2Estimator.S2) -> float:
    """
    Residual variance of a nodewise fit.

    S1 divides the residual sum of squares by n - s_beta - s_gamma, S2 by n - s_beta - 1.
    """
    residual = np.asarray(y, dtype=float) - np.asarray(fitted, dtype=float)
    n = residual.shape[0]
    if estimator is Sigma2Estimator.S1:
        denominator = n - s_beta - s_gamma
    else:
        denominator = n - s_beta - 1
    if denominator <= 0:
        raise DegenerateDoF(f"Degrees of freedom n={n}, s_beta={s_beta}, s_gamma={s_gamma} leave no residual")
    value = float(residual @ residual) / denominator
    if not value > 0.0:
        raise ZeroVariance("Residual variance is zero")
    return value


def _guarded_sigma2(node: int, y, fitted, s_beta: int, s_gamma: int, estimator: Sigma2Estimator) -> float:
    try:
        value = estimate_sigma2(y, fitted, s_beta, s_gamma, estimator)
    except DegenerateDoF as e:
        residual = np.asarray(y) - np.asarray(fitted)
        value = float(residual @ residual) / residual.shape[0]
        logger.warning("Node %d: %s, using denominator n", node, e)
    except ZeroVariance:
        value = 0.0
    if value < SIGMA2_FLOOR:
        logger.warning("Node %d: residual variance %.3e floored at %.0e", node, value, SIGMA2_FLOOR)
        value = SIGMA2_FLOOR
    return value


def fit_node(d: Dataset, j: int, penalty: PenaltyConfig, opts: SolverOptions = SolverOptions(),
             estimator: Sigma2Estimator = Sigma2Estimator.S2, warm_start: Optional[SglSolution] = None) -> NodewiseFit:
    """
    Solves the sparse-group lasso regression of x_j on U and the interaction design,
    then estimates the residual variance.
    """
    problem = node_problem(d, j, penalty, opts)
    try:
        sol = solve(problem, opts, warm_start)
    except NonFinite as e:
        raise SolverDiverged(f"Node {j}: {e}") from e

    fitted = problem.fitted(sol.gamma, sol.beta_blocks)
    s_beta = int(sum(np.count_nonzero(block) for block in sol.beta_blocks))
    s_gamma = int(np.count_nonzero(sol.gamma))
    sigma2 = _guarded_sigma2(j, problem.y, fitted, s_beta, s_gamma, estimator)

    return NodewiseFit(
        node=j,
        gamma=sol.gamma,
        beta_blocks=tuple(sol.beta_blocks),
        sigma2=sigma2,
        objective=sol.objective,
        iterations=sol.outer_iters,
        kkt_residual=kkt_residual(problem, sol),
        converged=sol.converged,
        penalty=penalty,
        n_dropped=int(problem.dropped.sum()),
    )


def rescale_to_theta(fit: NodewiseFit) -> tuple:
    """
    beta_tilde_j = -beta_hat_j / sigma2_j, blockwise.
    """
    if not fit.sigma2 > 0.0:
        raise ValueError(f"Node {fit.node}: sigma2 must be positive")
    return tuple(-block / fit.sigma2 for block in fit.beta_blocks)


def null_fit(d: Dataset, j: int, penalty: Optional[PenaltyConfig] = None) -> NodewiseFit:
    """
    All-zero fit standing in for a failed node when failures are tolerated.
    """
    y = d.X[:, j]
    width = d.p - 1
    sigma2 = max(float(y @ y) / max(d.n - 1, 1), SIGMA2_FLOOR)
    return NodewiseFit(
        node=j,
        gamma=np.zeros(d.q),
        beta_blocks=tuple(np.zeros(width) for _ in range(d.q + 1)),
        sigma2=sigma2,
        objective=0.5 * float(y @ y) / d.n,
        iterations=0,
        kkt_residual=float("inf"),
        converged=False,
        penalty=penalty,
    )


def recheck_kkt(d: Dataset, fit: NodewiseFit, opts: SolverOptions = SolverOptions()) -> float:
    """
    KKT residual of stored coefficients against the data they were fitted on.
    """
    if fit.penalty is None:
        raise ValueError(f"Node {fit.node} has no recorded penalty")
    problem = node_problem(d, fit.node, fit.penalty, opts)
    sol = SglSolution(fit.gamma, fit.beta_blocks, fit.objective, fit.iterations, fit.converged)
    return kkt_residual(problem, sol)
