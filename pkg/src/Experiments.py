"""
Monte-Carlo drivers: repeated simulate -> fit -> evaluate runs and the study of
how the estimation error grows with the number of nonzero parameters.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.Dataset import PenaltyConfig, Sigma2Estimator, SymmetrizationRule
from src.Discovery import Discovery
from src.Evaluator import BetaScale, EvalReport, SingleEvaluator, beta_error, gamma_error
from src.SglSolver import SolverOptions
from src.Simulation import SimulationConfig, generate_dataset
from src.Tuning import PenaltyGrid
from src.utils import spawn_seeds

logger = logging.getLogger(__name__)

TABLE_METRICS = ["tpr", "tpr_pop", "fpr_pop", "tpr_cov", "fpr_overall", "beta_err", "omega_err",
                 "omega_tpr", "omega_fpr", "mu_err"]


@dataclass(frozen=True)
class ExperimentConfig:
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    replicates: int = 20
    seed: int = 0
    grid: PenaltyGrid = field(default_factory=PenaltyGrid)
    opts: SolverOptions = field(default_factory=SolverOptions)
    rule: SymmetrizationRule = SymmetrizationRule.AND
    estimator: Sigma2Estimator = Sigma2Estimator.S2
    shared_lambda: bool = False
    threads: Optional[int] = None
    progress: bool = True
    # a fixed (alpha_s, lambda0) skips cross-validation
    fixed_penalty: Optional[PenaltyConfig] = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")


def _fit(cfg: ExperimentConfig, dataset, cv_seed: int):
    kwargs = dict(opts=cfg.opts, rule=cfg.rule, estimator=cfg.estimator, threads=cfg.threads, progress=False)
    if cfg.fixed_penalty is not None:
        return Discovery.fit_fixed(dataset, cfg.fixed_penalty, **kwargs)
    return Discovery.fit_cspine(dataset, grid=replace(cfg.grid, seed=cv_seed), seed=cv_seed,
                                shared_lambda=cfg.shared_lambda, **kwargs)


def run_replicate(cfg: ExperimentConfig, replicate: int, simulation_seed: int, cv_seed: int) -> dict:
    truth = generate_dataset(replace(cfg.simulation, seed=simulation_seed))
    model = _fit(cfg, truth.dataset, cv_seed)
    report = SingleEvaluator(model, truth, BetaScale.REGRESSION).get_evaluation_metrics()
    return {"replicate": replicate, "seed": simulation_seed, "pd_repairs": truth.pd_repairs, **report.to_dict()}


def replicate_table1(cfg: ExperimentConfig) -> tuple:
    """
    Runs cfg.replicates independent simulate -> fit -> evaluate replicates.

    Returns:
    --------
    (per_replicate, summary) data frames; the summary holds mean and standard
    deviation per metric, with the standard deviation left empty for a single
    replicate.
    """
    simulation_seeds = spawn_seeds(cfg.seed, cfg.replicates)
    cv_seeds = spawn_seeds(cfg.seed + 1, cfg.replicates)
    rows = []
    for r in tqdm(range(cfg.replicates), desc="replicates", disable=not cfg.progress):
        row = run_replicate(cfg, r, simulation_seeds[r], cv_seeds[r])
        logger.info("Replicate %d: tpr=%.3f fpr=%.4f omega_err=%.3f", r, row["tpr"], row["fpr_overall"], row["omega_err"])
        rows.append(row)
    per_replicate = pd.DataFrame(rows)
    return per_replicate, summarize(per_replicate, cfg.simulation)


def summarize(per_replicate: pd.DataFrame, simulation: Optional[SimulationConfig] = None) -> pd.DataFrame:
    rows = []
    for metric in TABLE_METRICS + [m for m in EvalReport.__dataclass_fields__ if m not in TABLE_METRICS]:
        if metric not in per_replicate:
            continue
        values = per_replicate[metric].to_numpy(dtype=float)
        rows.append({
            "metric": metric,
            "mean": float(values.mean()),
            "sd": float(values.std(ddof=1)) if len(values) > 1 else float("nan"),
            "se": float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else float("nan"),
            "replicates": len(values),
        })
    summary = pd.DataFrame(rows, columns=["metric", "mean", "sd", "se", "replicates"])
    if simulation is not None:
        summary.insert(0, "model", str(simulation.model))
        summary.insert(0, "q", simulation.q)
        summary.insert(0, "p", simulation.p)
        summary.insert(0, "n", simulation.n)
    return summary


def format_summary_table(summary: pd.DataFrame, digits: int = 2) -> pd.DataFrame:
    """
    Pivots summaries into one row per setting with "mean (standard error)" cells.
    """
    def cell(row):
        if pd.isna(row["se"]):
            return f"{row['mean']:.{digits}f}"
        return f"{row['mean']:.{digits}f} ({row['se']:.{digits}f})"

    frame = summary.copy()
    frame["cell"] = frame.apply(cell, axis=1)
    keys = [c for c in ("n", "p", "q", "model") if c in frame]
    if not keys:
        return frame.set_index("metric")[["cell"]].T.reset_index(drop=True)
    table = frame.pivot(index=keys, columns="metric", values="cell").reset_index()
    ordered = keys + [m for m in TABLE_METRICS if m in table.columns]
    return table[ordered]


class ScalingDesign(Enum):
    GAMMA = "gamma"
    GRAPH = "graph"


def scaling_config(base: SimulationConfig, design: ScalingDesign, level: float, structure_seed: int,
                   seed: int) -> SimulationConfig:
    """
    GAMMA varies the density of Gamma on a fixed graph, GRAPH varies the covariate
    edge probability with a fixed Gamma draw.
    """
    if design is ScalingDesign.GAMMA:
        return replace(base, gamma_density=level, graph_seed=structure_seed, seed=seed)
    return replace(base, edge_prob=level, gamma_seed=structure_seed, seed=seed)


def sparsity_scaling_experiment(base: ExperimentConfig, levels: Sequence[float], replicates: int,
                                design: ScalingDesign = ScalingDesign.GAMMA) -> pd.DataFrame:
    """
    Error gamma_err + beta_err against the number of nonzero parameters in the
    varied component, one row per (level, replicate).
    """
    structure_seed = spawn_seeds(base.seed, 1)[0]
    seeds = spawn_seeds(base.seed + 1, replicates)
    rows = []
    total = len(levels) * replicates
    with tqdm(total=total, desc=f"scaling ({design.value})", disable=not base.progress) as bar:
        for level in levels:
            for r in range(replicates):
                sim = scaling_config(base.simulation, design, level, structure_seed, seeds[r])
                truth = generate_dataset(sim)
                model = _fit(base, truth.dataset, seeds[r])
                if design is ScalingDesign.GAMMA:
                    nonzeros = int(np.count_nonzero(truth.gamma))
                else:
                    nonzeros = int(sum(np.count_nonzero(np.triu(component, 1)) for component in truth.b))
                rows.append({
                    "design": design.value,
                    "level": level,
                    "replicate": r,
                    "nonzeros": nonzeros,
                    "gamma_err": gamma_error(model.gamma_hat, truth.gamma),
                    "beta_err": beta_error(model.fits, truth.b),
                })
                bar.update(1)
    frame = pd.DataFrame(rows)
    frame["error"] = frame["gamma_err"] + frame["beta_err"]
    return frame


def fit_log_slope(frame: pd.DataFrame) -> float:
    """
    Least-squares slope of log(error) on log(nonzeros); rows without signal are excluded.
    """
    usable = frame[(frame["nonzeros"] > 0) & (frame["error"] > 0)]
    if usable["nonzeros"].nunique() < 2:
        raise ValueError("At least two distinct nonzero levels are needed to fit a slope")
    slope, _ = np.polyfit(np.log(usable["nonzeros"].to_numpy(dtype=float)),
                          np.log(usable["error"].to_numpy(dtype=float)), 1)
    return float(slope)
