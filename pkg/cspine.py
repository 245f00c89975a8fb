# cspine.py

import argparse
import logging
import os
import sys

import pandas as pd

from src.Dataset import PenaltyConfig
from src.Discovery import Discovery
from src.Errors import (AllZeroGamma, ConfigError, DegenerateColumn, DimensionMismatch, FoldTooSmall, NodeFitError,
                        NonFinite, NonPdOmega, SchemaError, SingularAfterRidge, SolverDiverged, BinaryViolation)
from src.Evaluator import BetaScale, evaluate
from src.Experiments import ExperimentConfig, format_summary_table, replicate_table1
from src.FileLoader import FileLoader
from src.GraphAssembly import edge_table, predict_all
from src.Monitor import FitMonitor
from src.NodewiseRegression import node_problem, recheck_kkt
from src.Simulation import generate_dataset
from src.Tuning import make_path
from src.utils import (load_config, parse_estimator, parse_rule, penalty_grid_from, setup_logging,
                       simulation_config_from, solver_options_from)

logger = logging.getLogger("cspine")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_SOLVER = 4
EXIT_SINGULAR = 5

# Checked in order, the first matching class decides the exit code.
EXIT_CODES = [
    (SingularAfterRidge, EXIT_SINGULAR),
    ((NonPdOmega, AllZeroGamma), EXIT_GENERATION),
    ((SolverDiverged, NodeFitError), EXIT_SOLVER),
    ((ConfigError, SchemaError, DimensionMismatch, NonFinite, BinaryViolation, DegenerateColumn, FoldTooSmall,
      OSError, ValueError), EXIT_CONFIG),
]

DEFAULT_KKT_THRESHOLD = 1e-4


def _alphas(text: str):
    if text is None:
        return None
    try:
        return tuple(float(value) for value in text.split(","))
    except ValueError as e:
        raise ConfigError(f"--alphas must be a comma separated list of numbers, got {text!r}") from e


def _config_section(args, section: str) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    values = load_config(args.config)
    return values.get(section, values if section == "simulation" and "n" in values else {})


def _simulation_config(args):
    return simulation_config_from(
        _config_section(args, "simulation"),
        n=args.n, p=args.p, q=args.q, q_e=args.q_e, edge_prob=args.edge_prob,
        gamma_density=args.gamma_density, model=args.model, seed=args.seed,
    )


def _grid(args):
    return penalty_grid_from(
        _config_section(args, "grid"),
        alphas=_alphas(args.alphas), n_lambda0=args.n_lambda0, lambda_min_ratio=args.lambda_min_ratio,
        folds=args.folds, seed=args.seed,
    )


def _solver_options(args):
    return solver_options_from(_config_section(args, "solver"), tol=args.tol, standardize_columns=args.standardize)


def _load_data(args):
    return FileLoader.load_dataset(args.x, args.u, args.kinds)


def cmd_simulate(args) -> int:
    cfg = _simulation_config(args)
    truth = generate_dataset(cfg)
    FileLoader.save_dataset(truth.dataset, args.output_dir)
    FileLoader.save_truth(truth, os.path.join(args.output_dir, "truth.json"))
    print(f"seed={cfg.seed} pd_repairs={truth.pd_repairs}")
    return EXIT_OK


def cmd_fit(args) -> int:
    d = _load_data(args)
    opts = _solver_options(args)
    monitor = FitMonitor()
    kwargs = dict(
        opts=opts, rule=parse_rule(args.rule), estimator=parse_estimator(args.estimator), threads=args.threads,
        keep_going=args.keep_going, center=args.center, monitor=monitor, progress=not args.quiet,
    )
    if (args.lambda0 is None) != (args.alpha is None):
        raise ConfigError("--lambda0 and --alpha must be given together")
    if args.lambda0 is not None:
        model = Discovery.fit_fixed(d, PenaltyConfig.from_mixture(args.alpha, args.lambda0), **kwargs)
    else:
        grid = _grid(args)
        model = Discovery.fit_cspine(d, grid=grid, seed=grid.seed, shared_lambda=args.shared_lambda, **kwargs)

    FileLoader.save_model(model, os.path.join(args.output_dir, "model.json"))
    monitor.save(args.output_dir)
    FileLoader.save_table(edge_table(model, args.threshold), os.path.join(args.output_dir, "edges.csv"))
    logger.info("Model written to %s", args.output_dir)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = FileLoader.load_model(args.model)
    U = pd.read_csv(args.u, float_precision="round_trip")
    if U.shape[1] != model.q:
        raise SchemaError(f"U has {U.shape[1]} columns, the model expects {model.q}")
    predictions = predict_all(model, U.to_numpy(dtype=float))
    names = model.response_names or tuple(f"x{j}" for j in range(model.p))
    FileLoader.save_predictions(predictions, args.output_dir, names, with_omega=args.omega)
    repaired = [i for i, prediction in enumerate(predictions) if prediction.ridge_added > 0.0]
    if repaired:
        logger.warning("Ridge added for %d subjects: %s", len(repaired), repaired[:20])
    return EXIT_OK


def cmd_eval(args) -> int:
    d = _load_data(args)
    model = FileLoader.load_model(args.model)
    truth = FileLoader.load_truth(args.truth, d)
    report = evaluate(model, truth, BetaScale(args.beta_scale))
    frame = pd.DataFrame([report.to_dict()])
    FileLoader.save_table(frame, args.output)
    print(frame.to_string(index=False))
    return EXIT_OK


def cmd_path(args) -> int:
    d = _load_data(args)
    if not 0 <= args.node < d.p:
        raise ConfigError(f"--node must lie in [0, {d.p - 1}]")
    opts = _solver_options(args)
    problem = node_problem(d, args.node, PenaltyConfig(0.0, 0.0), opts)
    paths = make_path(problem, _grid(args))
    frame = pd.DataFrame([
        {"node": args.node, "alpha_s": alpha_s, "path_index": i, "lambda0": float(value)}
        for alpha_s, path in paths.items()
        for i, value in enumerate(path)
    ])
    FileLoader.save_table(frame, args.output)
    return EXIT_OK


def cmd_kkt_check(args) -> int:
    d = _load_data(args)
    model = FileLoader.load_model(args.model)
    if model.p != d.p or model.q != d.q:
        raise SchemaError(f"Model is {model.p} x {model.q}, data is {d.p} x {d.q}")
    if model.settings.get("center", False):
        d = d.with_centered_responses()
    opts = solver_options_from(standardize_columns=model.settings.get("standardize", True))
    residuals = [recheck_kkt(d, fit, opts) for fit in model.fits if fit.penalty is not None]
    worst = max(residuals, default=0.0)
    print(f"max_kkt_residual={worst!r}")
    if worst > args.threshold:
        logger.warning("KKT residual %.3e exceeds %.1e", worst, args.threshold)
    return EXIT_OK


def cmd_replicate(args) -> int:
    section = _config_section(args, "experiment")
    cfg = ExperimentConfig(
        simulation=_simulation_config(args),
        replicates=args.reps if args.reps is not None else section.get("replicates", 20),
        seed=args.seed if args.seed is not None else section.get("seed", 0),
        grid=_grid(args),
        opts=_solver_options(args),
        rule=parse_rule(args.rule),
        estimator=parse_estimator(args.estimator),
        threads=args.threads,
        progress=not args.quiet,
    )
    per_replicate, summary = replicate_table1(cfg)
    FileLoader.save_table(per_replicate, os.path.join(args.output_dir, "replicates.csv"))
    FileLoader.save_table(summary, os.path.join(args.output_dir, "summary.csv"))
    print(format_summary_table(summary).to_string(index=False))
    return EXIT_OK


def _add_data_arguments(parser):
    parser.add_argument("--x", required=True, help="CSV of responses, one column per response")
    parser.add_argument("--u", required=True, help="CSV of covariates, one column per covariate")
    parser.add_argument("--kinds", default=None, help="JSON sidecar with the kind (binary/continuous) of every covariate")


def _add_simulation_arguments(parser):
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--p", type=int, default=None)
    parser.add_argument("--q", type=int, default=None)
    parser.add_argument("--q-e", dest="q_e", type=int, default=None, help="Number of covariates that change the graph")
    parser.add_argument("--edge-prob", dest="edge_prob", type=float, default=None)
    parser.add_argument("--gamma-density", dest="gamma_density", type=float, default=None)
    parser.add_argument("--model", choices=["natural", "original"], default=None)


def _add_fit_arguments(parser):
    parser.add_argument("--rule", choices=["and", "or"], default="and")
    parser.add_argument("--estimator", choices=["s1", "s2"], default="s2")
    parser.add_argument("--threads", type=int, default=None, help="Worker processes (default: all cores)")
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None,
                        help="Standardize design columns internally (default on)")
    _add_grid_arguments(parser)


def _add_grid_arguments(parser):
    parser.add_argument("--alphas", default=None, help="Comma separated alpha_s grid")
    parser.add_argument("--n-lambda0", dest="n_lambda0", type=int, default=None)
    parser.add_argument("--lambda-min-ratio", dest="lambda_min_ratio", type=float, default=None)
    parser.add_argument("--folds", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Covariate-adjusted sparse precision estimation")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--quiet", action="store_true", help="Disable progress bars")
    parser.add_argument("--config", default=None, help="JSON or TOML configuration file")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Generate a synthetic dataset with its truth")
    _add_simulation_arguments(simulate)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--output-dir", dest="output_dir", required=True)
    simulate.set_defaults(handler=cmd_simulate)

    fit = commands.add_parser("fit", help="Fit the graph model to a dataset")
    _add_data_arguments(fit)
    _add_fit_arguments(fit)
    fit.add_argument("--alpha", type=float, default=None, help="Fixed alpha_s, bypasses cross-validation")
    fit.add_argument("--lambda0", type=float, default=None, help="Fixed lambda0, bypasses cross-validation")
    fit.add_argument("--seed", type=int, default=None, help="Seed of the fold assignment")
    fit.add_argument("--threshold", type=float, default=0.0, help="Edge threshold for edges.csv")
    fit.add_argument("--keep-going", dest="keep_going", action="store_true")
    fit.add_argument("--shared-lambda", dest="shared_lambda", action="store_true")
    fit.add_argument("--center", action="store_true", help="Center the responses before fitting")
    fit.add_argument("--output-dir", dest="output_dir", required=True)
    fit.set_defaults(handler=cmd_fit)

    predict = commands.add_parser("predict", help="Per-subject means and precision matrices")
    predict.add_argument("--model", required=True)
    predict.add_argument("--u", required=True)
    predict.add_argument("--omega", action="store_true", help="Also write the precision matrices")
    predict.add_argument("--output-dir", dest="output_dir", required=True)
    predict.set_defaults(handler=cmd_predict)

    evaluate_parser = commands.add_parser("eval", help="Score a model against a simulation truth")
    _add_data_arguments(evaluate_parser)
    evaluate_parser.add_argument("--model", required=True)
    evaluate_parser.add_argument("--truth", required=True)
    evaluate_parser.add_argument("--beta-scale", dest="beta_scale", choices=["regression", "precision"],
                                 default="regression")
    evaluate_parser.add_argument("--output", required=True)
    evaluate_parser.set_defaults(handler=cmd_eval)

    path = commands.add_parser("path", help="lambda0 paths of one node")
    _add_data_arguments(path)
    _add_grid_arguments(path)
    path.add_argument("--node", type=int, required=True)
    path.add_argument("--tol", type=float, default=None)
    path.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None)
    path.add_argument("--seed", type=int, default=None)
    path.add_argument("--output", required=True)
    path.set_defaults(handler=cmd_path)

    kkt = commands.add_parser("kkt-check", help="Verify the optimality of a saved model")
    _add_data_arguments(kkt)
    kkt.add_argument("--model", required=True)
    kkt.add_argument("--threshold", type=float, default=DEFAULT_KKT_THRESHOLD)
    kkt.set_defaults(handler=cmd_kkt_check)

    replicate = commands.add_parser("replicate", help="Repeated simulate, fit and evaluate runs")
    _add_simulation_arguments(replicate)
    _add_fit_arguments(replicate)
    replicate.add_argument("--reps", type=int, default=None)
    replicate.add_argument("--seed", type=int, default=None)
    replicate.add_argument("--output-dir", dest="output_dir", required=True)
    replicate.set_defaults(handler=cmd_replicate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except Exception as e:
        for classes, code in EXIT_CODES:
            if isinstance(e, classes):
                logger.error("%s failed: %s", args.command, e)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
