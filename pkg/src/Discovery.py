import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

from tqdm import tqdm

from src.Dataset import Dataset, GraphModel, NodewiseFit, PenaltyConfig, Sigma2Estimator, SymmetrizationRule
from src.Errors import CspineError, NodeFitError
from src.GraphAssembly import assemble_model
from src.Monitor import FitMonitor
from src.NodewiseRegression import fit_node, null_fit
from src.SglSolver import SolverOptions
from src.Tuning import CvResult, PenaltyGrid, cross_validate, select_shared, shared_paths
from src.utils import spawn_seeds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _NodeOutcome:
    node: int
    value: object = None
    error: Optional[Exception] = None


def _cv_task(args) -> _NodeOutcome:
    d, j, grid, opts, paths, seed = args
    try:
        return _NodeOutcome(j, cross_validate(d, j, grid, opts, paths=paths, seed=seed))
    except (CspineError, ArithmeticError, ValueError, RuntimeError) as e:
        return _NodeOutcome(j, error=e)


def _fit_task(args) -> _NodeOutcome:
    d, j, penalty, opts, estimator = args
    try:
        return _NodeOutcome(j, fit_node(d, j, penalty, opts, estimator))
    except (CspineError, ArithmeticError, ValueError, RuntimeError) as e:
        return _NodeOutcome(j, error=e)


def _run_nodes(task, arguments: list, threads: Optional[int], progress: bool, description: str) -> list:
    """
    Runs one task per node, in a process pool unless threads == 1. Results come
    back in node order whatever the pool does.
    """
    if threads == 1 or len(arguments) == 1:
        iterator = map(task, arguments)
        return list(tqdm(iterator, total=len(arguments), desc=description, disable=not progress))
    workers = threads or os.cpu_count() or 1
    with ProcessPoolExecutor(max_workers=workers) as executor:
        iterator = executor.map(task, arguments)
        return list(tqdm(iterator, total=len(arguments), desc=description, disable=not progress))


def _settle(outcomes: list, keep_going: bool, monitor: Optional[FitMonitor]) -> dict:
    """
    node -> value for the successful outcomes; failures abort unless keep_going.
    """
    values = {}
    for outcome in outcomes:
        if outcome.error is None:
            values[outcome.node] = outcome.value
            continue
        if not keep_going:
            raise NodeFitError(outcome.node, outcome.error) from outcome.error
        logger.warning("Node %d failed and is replaced by an empty fit: %s", outcome.node, outcome.error)
        if monitor is not None:
            monitor.observe_failure(outcome.node, outcome.error)
    return values


class Discovery:
    @staticmethod
    def fit_cspine(dataset: Dataset, **kwargs) -> GraphModel:
        """
        Fits every nodewise regression at penalties selected by k-fold
        cross-validation, then assembles the symmetrized graph model.

        Keyword arguments:
        ------------------
        grid : PenaltyGrid
        opts : SolverOptions
        rule : SymmetrizationRule
        estimator : Sigma2Estimator
        threads : int or None (all cores)
        keep_going : bool, replace failing nodes by empty fits instead of aborting
        shared_lambda : bool, one (alpha_s, lambda0) for all nodes
        center : bool, center the responses before fitting
        seed : int, master seed of the per-node fold assignments (defaults to grid.seed)
        monitor : FitMonitor collecting the CV table and fit log
        progress : bool
        """
        grid = kwargs.get("grid", PenaltyGrid())
        opts = kwargs.get("opts", SolverOptions())
        threads = kwargs.get("threads", None)
        keep_going = kwargs.get("keep_going", False)
        progress = kwargs.get("progress", True)
        monitor = kwargs.get("monitor", None)
        seed = kwargs.get("seed", grid.seed)

        d = dataset.with_centered_responses() if kwargs.get("center", False) else dataset
        seeds = spawn_seeds(seed, d.p)
        paths = shared_paths(d, grid, opts) if kwargs.get("shared_lambda", False) else None

        outcomes = _run_nodes(_cv_task, [(d, j, grid, opts, paths, seeds[j]) for j in range(d.p)],
                              threads, progress, "cross-validation")
        results = _settle(outcomes, keep_going, monitor)
        if paths is not None:
            cv = select_shared(list(results.values()), d.p)
        else:
            cv = CvResult.merge(list(results.values()))
        if monitor is not None:
            monitor.observe_cv(cv)

        return Discovery._refit(dataset, d, cv.selected, {**kwargs, "seed": seed})

    @staticmethod
    def fit_fixed(dataset: Dataset, penalty: PenaltyConfig, **kwargs) -> GraphModel:
        """
        Fits every node at one fixed penalty, without cross-validation.
        Accepts the keyword arguments of fit_cspine except grid, shared_lambda and seed.
        """
        d = dataset.with_centered_responses() if kwargs.get("center", False) else dataset
        return Discovery._refit(dataset, d, {j: penalty for j in range(d.p)}, kwargs)

    @staticmethod
    def _refit(dataset: Dataset, d: Dataset, penalties: dict, kwargs: dict) -> GraphModel:
        opts = kwargs.get("opts", SolverOptions())
        rule = kwargs.get("rule", SymmetrizationRule.AND)
        estimator = kwargs.get("estimator", Sigma2Estimator.S2)
        keep_going = kwargs.get("keep_going", False)
        monitor = kwargs.get("monitor", None)

        arguments = [(d, j, penalties[j], opts, estimator) for j in sorted(penalties)]
        outcomes = _run_nodes(_fit_task, arguments, kwargs.get("threads", None), kwargs.get("progress", True), "nodewise fits")
        fits = _settle(outcomes, keep_going, monitor)
        for j in range(d.p):
            if j not in fits:
                fits[j] = null_fit(d, j, penalties.get(j))
        if monitor is not None:
            for fit in fits.values():
                monitor.observe_fit(fit)

        settings = {
            "standardize": opts.standardize_columns,
            "center": bool(kwargs.get("center", False)),
            "estimator": str(estimator),
            "tol": opts.tol,
        }
        if "grid" in kwargs or "seed" in kwargs:
            grid = kwargs.get("grid", PenaltyGrid())
            settings.update({"folds": grid.folds, "n_lambda0": grid.n_lambda0,
                             "lambda_min_ratio": grid.lambda_min_ratio, "seed": int(kwargs.get("seed", grid.seed)),
                             "shared_lambda": bool(kwargs.get("shared_lambda", False))})
        return assemble_model([fits[j] for j in range(d.p)], rule, dataset.response_names, dataset.covariate_names, settings)

    @staticmethod
    def refit_node(dataset: Dataset, model: GraphModel, j: int, opts: SolverOptions = SolverOptions()) -> NodewiseFit:
        """
        Recomputes node j of a model at the penalty it was fitted with.
        """
        d = dataset.with_centered_responses() if model.settings.get("center", False) else dataset
        estimator = Sigma2Estimator(model.settings.get("estimator", "s2"))
        return fit_node(d, j, model.fits[j].penalty, opts, estimator)
