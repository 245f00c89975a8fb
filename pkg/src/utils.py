import json
import logging
import os
import sys
try:
    import tomllib
except ImportError:
    import tomli as tomllib
from dataclasses import fields

import numpy as np

from src.Dataset import Sigma2Estimator, SymmetrizationRule
from src.Errors import ConfigError
from src.SglSolver import SolverOptions
from src.Simulation import SimulationConfig, SimulationModel
from src.Tuning import PenaltyGrid

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(verbosity: int = 0) -> None:
    """
    One stderr handler; verbosity 0 shows warnings, 1 info, 2 and above debug.
    """
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def load_config(path: str) -> dict:
    """
    Reads a JSON or TOML configuration file into a dict.
    """
    if not os.path.exists(path):
        raise ConfigError(f"Config file {path} does not exist")
    extension = os.path.splitext(path)[1].lower()
    try:
        if extension == ".toml":
            with open(path, "rb") as file:
                return tomllib.load(file)
        with open(path, "r") as file:
            return json.load(file)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e


def _build(cls, values: dict, overrides: dict = None):
    values = {**(values or {}), **{k: v for k, v in (overrides or {}).items() if v is not None}}
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown {cls.__name__} keys: {', '.join(unknown)}")
    for key in ("entry_range", "alphas"):
        if key in values and isinstance(values[key], list):
            values[key] = tuple(values[key])
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid {cls.__name__}: {e}") from e


def simulation_config_from(values: dict = None, **overrides) -> SimulationConfig:
    if "model" in overrides and overrides["model"] is not None:
        overrides["model"] = SimulationModel(str(overrides["model"]).lower())
    return _build(SimulationConfig, values, overrides)


def penalty_grid_from(values: dict = None, **overrides) -> PenaltyGrid:
    return _build(PenaltyGrid, values, overrides)


def solver_options_from(values: dict = None, **overrides) -> SolverOptions:
    return _build(SolverOptions, values, overrides)


def parse_rule(value) -> SymmetrizationRule:
    try:
        return value if isinstance(value, SymmetrizationRule) else SymmetrizationRule(str(value).lower())
    except ValueError as e:
        raise ConfigError(f"Unknown symmetrization rule {value!r}") from e


def parse_estimator(value) -> Sigma2Estimator:
    try:
        return value if isinstance(value, Sigma2Estimator) else Sigma2Estimator(str(value).lower())
    except ValueError as e:
        raise ConfigError(f"Unknown sigma2 estimator {value!r}") from e


def spawn_seeds(master: int, count: int) -> list:
    """
    count independent integer seeds derived from one master seed.
    """
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(master).spawn(count)]
