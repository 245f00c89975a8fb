"""
Penalty paths and k-fold cross-validation over the (alpha_s, lambda0) grid.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import bisect
from sklearn.model_selection import KFold

from src.Dataset import Dataset, PenaltyConfig
from src.Errors import FoldTooSmall
from src.NodewiseRegression import build_interaction_design, node_problem
from src.SglSolver import SglProblem, SolverOptions, soft_threshold, solve

logger = logging.getLogger(__name__)

# Relative slack on lambda0_max covering summation-order rounding in the solver.
ZERO_MARGIN = 1.0 + 1e-10

CV_COLUMNS = ["node", "alpha_s", "path_index", "lambda0", "cv_error", "cv_se"]


@dataclass(frozen=True)
class PenaltyGrid:
    alphas: tuple = tuple(round(0.1 * i, 10) for i in range(1, 11))
    n_lambda0: int = 100
    lambda_min_ratio: float = 0.01
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if len(self.alphas) == 0 or any(not 0.0 < a <= 1.0 for a in self.alphas):
            raise ValueError(f"alphas must be a nonempty sequence in (0, 1], got {self.alphas}")
        if self.n_lambda0 < 2:
            raise ValueError("n_lambda0 must be at least 2")
        if not 0.0 < self.lambda_min_ratio < 1.0:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")


@dataclass(frozen=True, eq=False)
class CvResult:
    """
    Cross-validation table and the selected penalty per node.

    Attributes:
    -----------
    table : pd.DataFrame
        One row per (node, alpha_s, lambda0) with the mean out-of-fold squared
        error and its standard error.
    selected : dict
        node -> PenaltyConfig built from the selected (alpha_s, lambda0).
    """
    table: pd.DataFrame
    selected: dict = field(default_factory=dict)

    @classmethod
    def merge(cls, results: Sequence["CvResult"]) -> "CvResult":
        results = list(results)
        if not results:
            return cls(pd.DataFrame(columns=CV_COLUMNS), {})
        table = pd.concat([r.table for r in results], ignore_index=True)
        selected = {}
        for r in results:
            selected.update(r.selected)
        return cls(table.sort_values(["node", "alpha_s", "path_index"], kind="stable").reset_index(drop=True),
                   dict(sorted(selected.items())))


def _group_bound(g: np.ndarray, alpha_s: float) -> float:
    """
    Smallest lambda0 with ||S(g, alpha_s lambda0)|| <= (1 - alpha_s) lambda0.
    """
    top = float(np.abs(g).max(initial=0.0))
    if top == 0.0:
        return 0.0
    if alpha_s == 1.0:
        return top
    top /= alpha_s

    def excess(lambda0):
        return float(np.linalg.norm(soft_threshold(g, alpha_s * lambda0))) - (1.0 - alpha_s) * lambda0

    xtol = top * 1e-14
    root = bisect(excess, 0.0, top, xtol=xtol)
    # root + xtol lies on the non-positive side of the excess
    return min(root + xtol, top)


def lambda0_max(problem: SglProblem, alpha_s: float) -> float:
    """
    Smallest lambda0 for which the all-zero coefficient vector is optimal with
    lam = alpha_s * lambda0 and lam_g = (1 - alpha_s) * lambda0.
    """
    if not 0.0 < alpha_s <= 1.0:
        raise ValueError(f"alpha_s must lie in (0, 1], got {alpha_s}")
    design = problem.design
    g = design.A.T @ problem.y / problem.n
    bound = 0.0
    for b in range(design.n_blocks):
        block = g[design.starts[b]:design.stops[b]]
        if block.size == 0:
            continue
        if design.grouped[b]:
            bound = max(bound, _group_bound(block, alpha_s))
        else:
            bound = max(bound, float(np.abs(block).max()) / alpha_s)
    return bound * ZERO_MARGIN


def make_path(problem: SglProblem, grid: PenaltyGrid) -> dict:
    """
    Per alpha_s, n_lambda0 log-spaced values from lambda0_max down to
    lambda_min_ratio * lambda0_max.
    """
    paths = {}
    for alpha_s in grid.alphas:
        top = lambda0_max(problem, alpha_s)
        paths[alpha_s] = _log_path(top, grid)
    return paths


def _log_path(top: float, grid: PenaltyGrid) -> np.ndarray:
    if top <= 0.0:
        logger.warning("lambda0_max is zero, the response carries no signal")
        return np.zeros(grid.n_lambda0)
    return np.geomspace(top, grid.lambda_min_ratio * top, grid.n_lambda0)


def _select(table: pd.DataFrame, error_column: str = "cv_error") -> pd.Series:
    ordered = table.sort_values([error_column, "lambda0", "alpha_s"], ascending=[True, False, False], kind="stable")
    return ordered.iloc[0]


def cross_validate(d: Dataset, j: int, grid: PenaltyGrid = PenaltyGrid(), opts: SolverOptions = SolverOptions(),
                   paths: Optional[dict] = None, seed: Optional[int] = None) -> CvResult:
    """
    k-fold cross-validation of node j over the (alpha_s, lambda0) grid.

    Each fold fits the complement along the whole lambda0 path, largest first,
    warm starting every fit from the previous one. The path comes from the
    full-data problem unless given explicitly.
    """
    if d.n < grid.folds:
        raise FoldTooSmall(f"n={d.n} is smaller than the number of folds {grid.folds}")
    if paths is None:
        paths = make_path(node_problem(d, j, PenaltyConfig(0.0, 0.0), opts), grid)
    alphas = list(paths)
    n_points = len(paths[alphas[0]])

    kfold = KFold(n_splits=grid.folds, shuffle=True, random_state=grid.seed if seed is None else seed)
    errors = np.zeros((len(alphas), n_points, grid.folds))
    for f, (train, val) in enumerate(kfold.split(d.X)):
        if len(train) < 2:
            raise FoldTooSmall(f"Fold {f} leaves only {len(train)} training samples")
        train_d, val_d = d.subset(train), d.subset(val)
        problem = node_problem(train_d, j, PenaltyConfig(0.0, 0.0), opts)
        val_W = build_interaction_design(val_d, j).W
        y_val = val_d.X[:, j]
        for a, alpha_s in enumerate(alphas):
            warm = None
            for i, lambda0 in enumerate(paths[alpha_s]):
                sol = solve(problem.with_penalty(PenaltyConfig.from_mixture(alpha_s, lambda0)), opts, warm)
                warm = sol
                residual = y_val - val_d.U @ sol.gamma - val_W @ np.concatenate(sol.beta_blocks)
                errors[a, i, f] = float(residual @ residual) / len(val)

    mean = errors.mean(axis=2)
    se = errors.std(axis=2, ddof=1) / np.sqrt(grid.folds)
    table = pd.DataFrame(
        [
            {"node": j, "alpha_s": alpha_s, "path_index": i, "lambda0": float(paths[alpha_s][i]),
             "cv_error": float(mean[a, i]), "cv_se": float(se[a, i])}
            for a, alpha_s in enumerate(alphas)
            for i in range(n_points)
        ],
        columns=CV_COLUMNS,
    )
    best = _select(table)
    selected = {j: PenaltyConfig.from_mixture(float(best["alpha_s"]), float(best["lambda0"]))}
    logger.debug("Node %d: selected alpha_s=%g lambda0=%.6g (cv error %.6g)",
                 j, best["alpha_s"], best["lambda0"], best["cv_error"])
    return CvResult(table, selected)


def shared_paths(d: Dataset, grid: PenaltyGrid = PenaltyGrid(), opts: SolverOptions = SolverOptions()) -> dict:
    """
    Common lambda0 path per alpha_s, starting at the largest nodewise lambda0_max.
    """
    problems = [node_problem(d, j, PenaltyConfig(0.0, 0.0), opts) for j in range(d.p)]
    return {alpha_s: _log_path(max(lambda0_max(problem, alpha_s) for problem in problems), grid)
            for alpha_s in grid.alphas}


def select_shared(results: Sequence[CvResult], p: int) -> CvResult:
    """
    Merges nodewise CV results computed on a common path and selects the single
    (alpha_s, lambda0) minimizing the CV error summed over nodes.
    """
    merged = CvResult.merge(results)
    summed = merged.table.groupby(["alpha_s", "path_index"], as_index=False).agg(
        lambda0=("lambda0", "first"), cv_error=("cv_error", "sum"))
    best = _select(summed)
    penalty = PenaltyConfig.from_mixture(float(best["alpha_s"]), float(best["lambda0"]))
    return CvResult(merged.table, {j: penalty for j in range(p)})


def cross_validate_shared(d: Dataset, grid: PenaltyGrid = PenaltyGrid(), opts: SolverOptions = SolverOptions(),
                          seeds: Optional[Sequence[int]] = None) -> CvResult:
    paths = shared_paths(d, grid, opts)
    seeds = list(seeds) if seeds is not None else [grid.seed] * d.p
    results = [cross_validate(d, j, grid, opts, paths=paths, seed=seeds[j]) for j in range(d.p)]
    return select_shared(results, d.p)
